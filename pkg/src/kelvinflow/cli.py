"""Command-line entry points tying the solver, flows and checkers together.

Usage: kelvinflow <subcommand> --config <path> [--seed N] [--out DIR]
Exit codes: 0 success, 1 check failure or aborted run, 2 usage errors.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import io as kio
from .assignment import (
    Permutation,
    QAPInstance,
    build_lattice_weights,
    lap_solve,
    qap_cost_from_values,
    _local_search,
)
from .brockett import (
    brockett_integrate,
    default_q,
    random_symmetric,
    spectrum_drift,
)
from .checks import dissipative_residual, make_test_field, weak_strong_check, zero_test_field
from .flow import FlowConfig, FlowDivergedError, simulate
from .spectral import PeriodicGrid, ScalarField

RESIDUAL_TOL_FACTOR = 1e-5  # dissipation margin tolerance, relative to ||B_0||^2


def _out_dir(args, subcommand: str) -> Path:
    out = Path(args.out) if args.out else Path(f"{subcommand}-out")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_config(args, subcommand: str) -> kio.RunConfig:
    text = Path(args.config).read_text()
    config = kio.parse_config(text, subcommand)
    if args.seed is not None:
        params = dict(config.params)
        params["seed"] = args.seed
        config = kio.RunConfig(subcommand, params, args.seed, config.out)
    return config


def _write_run_config(config: kio.RunConfig, out: Path) -> None:
    (out / "run.cfg").write_text(kio.format_config(config))


def _cmd_simulate(args) -> int:
    config = _load_config(args, "simulate")
    out = _out_dir(args, "simulate")
    p = config.params
    flow_config = FlowConfig(
        grid=PeriodicGrid(p["d"], p["n"]),
        m=p["m"],
        dt=p["dt"],
        t_end=p["t_end"],
        cfl_safety=p["cfl_safety"],
        ic=p["ic"],
        ic_amplitude=p["ic_amplitude"],
        seed=p["seed"],
        record_every=p["record_every"],
    )
    _write_run_config(config, out)
    try:
        traj = simulate(flow_config)
    except FlowDivergedError as exc:
        print(f"simulation aborted: {exc}", file=sys.stderr)
        return 1
    kio.write_trajectory(traj, out)
    print(
        f"simulate: {len(traj.ledger) - 1} steps to t = {traj.final.t:.6g}, "
        f"E: {traj.ledger[0].energy:.6g} -> {traj.final.energy:.6g}, "
        f"residual {traj.ledger[-1].residual:.3e} ({out})"
    )
    return 0


def _cmd_brockett(args) -> int:
    config = _load_config(args, "brockett")
    out = _out_dir(args, "brockett")
    p = config.params
    d = p["d"]
    if p["m0"]:
        entries = [float(x) for x in p["m0"].split(",")]
        if len(entries) != d * d:
            print(f"m0 needs {d * d} entries, got {len(entries)}", file=sys.stderr)
            return 2
        m0 = np.array(entries).reshape(d, d)
        m0 = 0.5 * (m0 + m0.T)
    else:
        m0 = random_symmetric(d, p["seed"])
    _write_run_config(config, out)
    states = brockett_integrate(m0, default_q(d), p["dt"], p["t_end"], p["record_every"])
    rows = [
        (s.t, s.offdiag_norm, spectrum_drift(m0, s.M), s.alignment) for s in states
    ]
    kio.write_ledger(out / "brockett.csv", ["t", "offdiag_norm", "spectrum_drift", "tr_mq"], rows)
    final = states[-1]
    print(
        f"brockett: t = {final.t:.6g}, offdiag {final.offdiag_norm:.3e}, "
        f"spectrum drift {spectrum_drift(m0, final.M):.3e} ({out})"
    )
    return 0


def _cmd_lap(args) -> int:
    config = _load_config(args, "lap")
    out = _out_dir(args, "lap")
    p = config.params
    rng = np.random.default_rng(p["seed"])
    cost = rng.integers(0, 100, size=(p["n"], p["n"])).astype(float)
    value, sigma = lap_solve(cost)
    _write_run_config(config, out)
    kio.write_ledger(
        out / "lap.csv",
        ["value", "permutation", "iterations"],
        [(value, " ".join(str(i) for i in sigma.sigma), 0)],
    )
    print(f"lap: n = {p['n']}, optimal value {value:.17g} ({out})")
    return 0


def _cmd_qap(args) -> int:
    config = _load_config(args, "qap")
    out = _out_dir(args, "qap")
    p = config.params
    n, dim = p["n"], p["dim"]
    size = n**dim
    rng = np.random.default_rng(p["seed"])
    if p["phi_snapshot"]:
        fld, _ = kio.read_snapshot(p["phi_snapshot"])
        if not isinstance(fld, ScalarField):
            print("phi_snapshot must hold a scalar field", file=sys.stderr)
            return 2
        values = fld.values.ravel()
        if values.size != size:
            print(
                f"snapshot has {values.size} values but the lattice needs {size}",
                file=sys.stderr,
            )
            return 2
    else:
        values = rng.standard_normal(size)
    gamma = build_lattice_weights(n, dim, p["topology"])
    inst = QAPInstance(gamma, qap_cost_from_values(values))
    _write_run_config(config, out)
    rows = []
    best = None
    for start in range(p["starts"]):
        sigma0 = Permutation(rng.permutation(size))
        value, sigma, iterations = _local_search(inst, sigma0, seed=p["seed"] + start)
        rows.append((value, " ".join(str(i) for i in sigma.sigma), iterations))
        if best is None or value < best:
            best = value
    kio.write_ledger(out / "qap.csv", ["value", "permutation", "iterations"], rows)
    print(f"qap: N = {size}, best local value {best:.17g} over {p['starts']} starts ({out})")
    return 0


def _cmd_check(args) -> int:
    config = _load_config(args, "check")
    out = _out_dir(args, "check")
    p = config.params
    m = p["m"]
    traj = kio.read_trajectory(p["traj"], m)
    reference = kio.read_trajectory(p["reference"], m)
    _write_run_config(config, out)

    grid = traj.config.grid
    times = traj.times
    b0_sq = 2.0 * traj.states[0].energy
    tol = RESIDUAL_TOL_FACTOR * b0_sq

    test_fields = [("zero", zero_test_field(grid, times))]
    for i in range(p["fields"]):
        test_fields.append((f"random-{i}", make_test_field(grid, times, seed=p["seed"] + i)))
    residual_rows = []
    min_margin = np.inf
    for name, tf in test_fields:
        residual = dissipative_residual(traj, tf, m)
        worst = float(residual.min())
        min_margin = min(min_margin, worst)
        residual_rows.append((name, tf.r, worst))
    dissipative_ok = min_margin >= -tol

    report = weak_strong_check(traj, reference, m)
    kio.write_ledger(
        out / "report.csv",
        [
            "t",
            "nb2",
            "eta",
            "n_margin",
            "jl",
            "jc",
            "jl1_cancel",
            "margin",
            "margin_strong",
        ],
        zip(
            report.times,
            report.nb2,
            report.eta,
            report.n_margin,
            report.jl,
            report.jc,
            report.jl1_cancel,
            report.margin,
            report.margin_strong,
        ),
    )
    kio.write_ledger(
        out / "residuals.csv",
        ["field", "r", "min_residual"],
        residual_rows,
    )
    ok = dissipative_ok and report.passed
    print(
        f"check: dissipation margin {min_margin:.3e} (tol -{tol:.3e}) "
        f"[{'ok' if dissipative_ok else 'FAIL'}], "
        f"stability bound min margin {report.margin.min():.3e} "
        f"[{'ok' if report.passed else 'FAIL'}] ({out})"
    )
    return 0 if ok else 1


_COMMANDS = {
    "simulate": _cmd_simulate,
    "brockett": _cmd_brockett,
    "lap": _cmd_lap,
    "qap": _cmd_qap,
    "check": _cmd_check,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kelvinflow",
        description="Transport gradient flow on the torus with matrix-flow, "
        "assignment and dissipation-check companions.",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in _COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", required=True, help="path to a key = value config file")
        s.add_argument("--seed", type=int, default=None, help="override the config seed")
        s.add_argument("--out", default=None, help="output directory")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.subcommand](args)
    except kio.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"missing input: {exc}", file=sys.stderr)
        return 2
    except kio.SnapshotError as exc:
        print(f"snapshot error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
