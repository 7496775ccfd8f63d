"""Run configuration files, binary field snapshots and CSV ledgers.

Config files are flat `key = value` lines with `#` comments. Snapshots are a
text header followed by raw little-endian float64 payload:

    KFLOW 1
    d 2
    n 64
    kind scalar
    t 0.125
    byteorder little
    <blank line>
    <n^d (scalar) or d*n^d (vector) float64 values, row-major,
     vector components concatenated>

Ledgers are plain CSV with one header row and 17-significant-digit values,
so re-reading reproduces every float bit-exactly.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .flow import FlowConfig, FlowState, LedgerRow, Trajectory
from .law import dirichlet_energy, empirical_law, kinetic_K, law_distance
from .spectral import PeriodicGrid, ScalarField, VectorField, divergence, l2_norm

MAGIC = "KFLOW 1"


class ConfigError(ValueError):
    """Malformed or invalid run configuration."""


class SnapshotError(IOError):
    """Malformed snapshot file."""


# ---------------------------------------------------------------------------
# snapshots

def write_snapshot(fld: ScalarField | VectorField, t: float, path) -> None:
    """Write a field with its time stamp; bit-exact round trip."""
    if isinstance(fld, ScalarField):
        kind = "scalar"
        payload = np.ascontiguousarray(fld.values, dtype="<f8").tobytes()
    elif isinstance(fld, VectorField):
        kind = "vector"
        payload = b"".join(
            np.ascontiguousarray(c, dtype="<f8").tobytes() for c in fld.components
        )
    else:
        raise TypeError(f"cannot snapshot {type(fld).__name__}")
    header = (
        f"{MAGIC}\n"
        f"d {fld.grid.d}\n"
        f"n {fld.grid.n}\n"
        f"kind {kind}\n"
        f"t {t!r}\n"
        f"byteorder little\n"
        f"\n"
    )
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(payload)


def read_snapshot(path) -> tuple[ScalarField | VectorField, float]:
    """Read a snapshot written by write_snapshot; returns (field, t)."""
    with open(path, "rb") as fh:
        raw = fh.read()
    nl = raw.find(b"\n\n")
    if nl < 0:
        raise SnapshotError(f"{path}: missing blank line after header")
    try:
        header_lines = raw[:nl].decode("ascii").split("\n")
    except UnicodeDecodeError as exc:
        raise SnapshotError(f"{path}: non-ascii header") from exc
    if header_lines[0] != MAGIC:
        raise SnapshotError(f"{path}: bad magic {header_lines[0]!r}")
    fields = {}
    for line in header_lines[1:]:
        key, _, value = line.partition(" ")
        if not value:
            raise SnapshotError(f"{path}: malformed header line {line!r}")
        fields[key] = value
    try:
        d = int(fields["d"])
        n = int(fields["n"])
        kind = fields["kind"]
        t = float(fields["t"])
        order = fields["byteorder"]
    except KeyError as exc:
        raise SnapshotError(f"{path}: missing header key {exc}") from exc
    except ValueError as exc:
        raise SnapshotError(f"{path}: malformed header value ({exc})") from exc
    if order != "little":
        raise SnapshotError(f"{path}: unsupported byte order {order!r}")
    if kind not in ("scalar", "vector"):
        raise SnapshotError(f"{path}: unknown kind {kind!r}")
    try:
        grid = PeriodicGrid(d, n)
    except ValueError as exc:
        raise SnapshotError(f"{path}: dimension mismatch ({exc})") from exc
    count = grid.size * (1 if kind == "scalar" else d)
    payload = raw[nl + 2 :]
    if len(payload) != 8 * count:
        raise SnapshotError(
            f"{path}: truncated payload, expected {8 * count} bytes, got {len(payload)}"
        )
    values = np.frombuffer(payload, dtype="<f8").astype(np.float64)
    if kind == "scalar":
        return ScalarField(grid, values.reshape(grid.shape)), t
    comps = tuple(
        values[a * grid.size : (a + 1) * grid.size].reshape(grid.shape) for a in range(d)
    )
    return VectorField(grid, comps), t


# ---------------------------------------------------------------------------
# CSV ledgers

def _fmt(x) -> str:
    return format(float(x), ".17g")


def write_ledger(path, header: list[str], rows) -> None:
    """CSV with one header row; floats at 17 significant digits."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([x if isinstance(x, str) else _fmt(x) for x in row])


def read_ledger(path) -> tuple[list[str], np.ndarray]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(x) for x in row] for row in reader]
    data = np.array(rows) if rows else np.empty((0, len(header)))
    return header, data


# ---------------------------------------------------------------------------
# trajectory snapshot directories

LEDGER_HEADER = ["t", "energy", "kinetic", "residual", "law_drift", "dt"]


def write_trajectory(traj: Trajectory, outdir) -> None:
    """Write ledger.csv plus phi_/vel_ snapshots for every recorded state."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    write_ledger(outdir / "ledger.csv", LEDGER_HEADER, traj.ledger)
    for i, state in enumerate(traj.states):
        write_snapshot(state.phi, state.t, outdir / f"phi_{i:06d}.snap")
        write_snapshot(state.v, state.t, outdir / f"vel_{i:06d}.snap")


def read_trajectory(indir, m: int) -> Trajectory:
    """Rebuild a trajectory from a snapshot directory.

    Velocities are checked against their spectral divergence before being
    marked solenoidal; energies and the ledger are recomputed from the
    fields (on the recorded grid only, so the rebuilt ledger is per
    recorded state, not per original step).
    """
    indir = Path(indir)
    phis = sorted(indir.glob("phi_*.snap"))
    if not phis:
        raise SnapshotError(f"{indir}: no phi_*.snap files")
    states = []
    for phi_path in phis:
        vel_path = indir / phi_path.name.replace("phi_", "vel_")
        if not vel_path.exists():
            raise SnapshotError(f"{indir}: missing {vel_path.name}")
        phi, t = read_snapshot(phi_path)
        vel, t_v = read_snapshot(vel_path)
        if not isinstance(phi, ScalarField) or not isinstance(vel, VectorField):
            raise SnapshotError(f"{indir}: wrong snapshot kinds for state {phi_path.name}")
        if phi.grid != vel.grid or t != t_v:
            raise SnapshotError(f"{indir}: inconsistent state {phi_path.name}")
        scale = max(1.0, vel.max_abs())
        if np.max(np.abs(divergence(vel).values)) <= 1e-8 * scale:
            vel = VectorField(vel.grid, vel.components, is_solenoidal=True)
        states.append(
            FlowState(t, phi, vel, dirichlet_energy(phi), kinetic_K(vel, m))
        )
    grid = states[0].phi.grid
    dt = states[1].t - states[0].t if len(states) > 1 else 1.0
    config = FlowConfig(grid=grid, m=m, dt=max(dt, 1e-12), t_end=states[-1].t)
    law0 = empirical_law(states[0].phi)
    ledger = []
    for prev, s in zip([states[0]] + states[:-1], states):
        ledger.append(
            LedgerRow(
                s.t,
                s.energy,
                s.k_value,
                l2_norm(s.v),
                law_distance(empirical_law(s.phi), law0),
                s.t - prev.t,
            )
        )
    return Trajectory(config, states, ledger)


# ---------------------------------------------------------------------------
# run configuration

_UNSET = object()


class _Param:
    """Schema entry: value type, default (absent means required), validation."""

    __slots__ = ("kind", "default", "choices", "check", "note")

    def __init__(self, kind, default=_UNSET, choices=None, check=None, note=""):
        self.kind = kind
        self.default = default
        self.choices = choices
        self.check = check
        self.note = note

    @property
    def required(self) -> bool:
        return self.default is _UNSET


def _even_ge4(x):
    return x >= 4 and x % 2 == 0


SCHEMAS: dict[str, dict[str, _Param]] = {
    "simulate": {
        "d": _Param(int, choices=(1, 2, 3)),
        "n": _Param(int, check=_even_ge4, note="n must be even and >= 4"),
        "m": _Param(int, choices=(0, 1, 2)),
        "dt": _Param(float, check=lambda x: x > 0, note="dt must be > 0"),
        "t_end": _Param(float, check=lambda x: x >= 0, note="t_end must be >= 0"),
        "cfl_safety": _Param(float, default=0.9, check=lambda x: 0 < x <= 1,
                             note="cfl_safety must lie in (0, 1]"),
        "ic": _Param(str, default="mix", choices=("eigen", "mix", "random")),
        "ic_amplitude": _Param(float, default=1.0, check=lambda x: x >= 0,
                               note="ic_amplitude must be >= 0"),
        "seed": _Param(int, default=0),
        "record_every": _Param(int, default=1, check=lambda x: x >= 1,
                               note="record_every must be >= 1"),
    },
    "brockett": {
        "d": _Param(int, check=lambda x: x >= 1, note="d must be >= 1"),
        "dt": _Param(float, check=lambda x: x > 0, note="dt must be > 0"),
        "t_end": _Param(float, check=lambda x: x >= 0, note="t_end must be >= 0"),
        "seed": _Param(int, default=0),
        "m0": _Param(str, default="", note="comma-separated d*d entries, row-major"),
        "record_every": _Param(int, default=1, check=lambda x: x >= 1,
                               note="record_every must be >= 1"),
    },
    "lap": {
        "n": _Param(int, check=lambda x: x >= 1, note="n must be >= 1"),
        "seed": _Param(int, default=0),
    },
    "qap": {
        "n": _Param(int, check=lambda x: x >= 2, note="n must be >= 2"),
        "dim": _Param(int, default=1, choices=(1, 2)),
        "topology": _Param(str, default="path", choices=("path", "periodic")),
        "phi_snapshot": _Param(str, default=""),
        "starts": _Param(int, default=1, check=lambda x: x >= 1,
                         note="starts must be >= 1"),
        "seed": _Param(int, default=0),
    },
    "check": {
        "m": _Param(int, choices=(0, 1, 2)),
        "traj": _Param(str, note="directory of the candidate trajectory"),
        "reference": _Param(str, note="directory of the smooth reference trajectory"),
        "fields": _Param(int, default=10, check=lambda x: x >= 0,
                         note="fields must be >= 0"),
        "seed": _Param(int, default=0),
    },
}


@dataclass(frozen=True)
class RunConfig:
    """Validated parameters for one CLI run."""

    subcommand: str
    params: dict
    seed: int
    out: str | None = None


def _parse_value(key: str, raw: str, spec: _Param, subcommand: str):
    try:
        if spec.kind is bool:
            low = raw.lower()
            if low in ("true", "1", "yes"):
                return True
            if low in ("false", "0", "no"):
                return False
            raise ValueError("expected a boolean")
        value = spec.kind(raw)
    except ValueError as exc:
        raise ConfigError(
            f"malformed value for {key!r} in {subcommand} config: {raw!r} ({exc})"
        ) from exc
    if spec.choices is not None and value not in spec.choices:
        raise ConfigError(
            f"invalid value for {key!r}: {value!r}, expected one of {spec.choices}"
        )
    if spec.check is not None and not spec.check(value):
        raise ConfigError(f"invalid value for {key!r}: {value!r} ({spec.note})")
    return value


def parse_config(text: str, subcommand: str = "simulate") -> RunConfig:
    """Parse and validate a flat key = value config for one subcommand.

    Unknown keys, malformed values and missing required keys are rejected
    with the offending key named in the error.
    """
    if subcommand not in SCHEMAS:
        raise ConfigError(f"unknown subcommand {subcommand!r}")
    schema = SCHEMAS[subcommand]
    seen: dict[str, object] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        key, eq, raw = body.partition("=")
        if not eq:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key = key.strip()
        raw = raw.strip()
        if key not in schema:
            raise ConfigError(f"unknown key {key!r} for {subcommand} config")
        if key in seen:
            raise ConfigError(f"duplicate key {key!r} (line {lineno})")
        seen[key] = _parse_value(key, raw, schema[key], subcommand)
    missing = [k for k, spec in schema.items() if spec.required and k not in seen]
    if missing:
        raise ConfigError(
            f"missing required keys for {subcommand} config: {', '.join(sorted(missing))}"
        )
    params = {k: (seen[k] if k in seen else spec.default) for k, spec in schema.items()}
    return RunConfig(subcommand, params, int(params.get("seed", 0)))


def format_config(config: RunConfig) -> str:
    """Render a RunConfig back to the flat file format (resolved defaults)."""
    lines = [f"# resolved {config.subcommand} configuration"]
    for key, value in config.params.items():
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"
