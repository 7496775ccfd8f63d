"""Dissipation-inequality margins and the weak-strong stability certificate.

A trajectory (B_t = grad phi_t, v_t) is dissipative when, for every smooth
solenoidal test field z with weight r chosen so that r I + grad z + (grad z)^T
is positive semidefinite everywhere,

    int_0^t { 2 K[v_s] + ((B_s x B_s, r I + grad z_s + grad z_s^T))
              - 2 K[z_s] } e^{-s r} ds  +  ||B_t||^2 e^{-t r}  <=  ||B_0||^2.

dissipative_residual evaluates the left-right gap of that inequality on the
recorded time grid; weak_strong_check assembles the Gronwall stability bound
comparing a candidate trajectory against a smooth reference, together with
the exact structural identities its proof rests on (the constant term of the
error expansion vanishes, and the linear term reduces to a divergence form).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .flow import FlowConfig, FlowState, LedgerRow, Trajectory
from .law import dirichlet_energy, empirical_law, kinetic_K, law_distance
from .spectral import (
    PeriodicGrid,
    ScalarField,
    VectorField,
    _workspace,
    fftn,
    gradient,
    ifftn_real,
    l2_norm,
    laplacian_pow,
    leray_hat,
    leray_project,
    restrict_to,
)


def _mean(x: np.ndarray) -> float:
    return float(np.mean(x))


def _cumtrapz(y: np.ndarray, x: np.ndarray) -> np.ndarray:
    out = np.zeros(len(x))
    if len(x) > 1:
        out[1:] = np.cumsum(0.5 * (y[1:] + y[:-1]) * np.diff(x))
    return out


def _grad_tensor(v: VectorField) -> list[list[np.ndarray]]:
    """g[a][b] = d v_a / d x_b, all spectral."""
    ws = _workspace(v.grid.d, v.grid.n)
    out = []
    for c in v.components:
        hat = fftn(c)
        out.append([ifftn_real(ws.ik[b] * hat) for b in range(v.grid.d)])
    return out


def sym_gradient_eig_range(v: VectorField) -> tuple[float, float]:
    """Extreme eigenvalues over the grid of S = grad v + (grad v)^T."""
    d = v.grid.d
    g = _grad_tensor(v)
    if d == 1:
        s = 2.0 * g[0][0]
        return float(s.min()), float(s.max())
    if d == 2:
        s11 = 2.0 * g[0][0]
        s22 = 2.0 * g[1][1]
        s12 = g[0][1] + g[1][0]
        half_tr = 0.5 * (s11 + s22)
        disc = np.sqrt((0.5 * (s11 - s22)) ** 2 + s12**2)
        return float((half_tr - disc).min()), float((half_tr + disc).max())
    s = np.empty(v.grid.shape + (3, 3))
    for a in range(3):
        for b in range(3):
            s[..., a, b] = g[a][b] + g[b][a]
    eig = np.linalg.eigvalsh(s)
    return float(eig[..., 0].min()), float(eig[..., -1].max())


@dataclass(frozen=True)
class TestField:
    """Separable time-indexed test field z_t = amplitude(t) * base, plus the
    exponential weight r that makes r I + grad z + (grad z)^T PSD on the
    whole time grid."""

    grid: PeriodicGrid
    times: np.ndarray
    base: VectorField
    amplitude: np.ndarray
    r: float

    def __post_init__(self):
        t = np.asarray(self.times, dtype=np.float64)
        a = np.asarray(self.amplitude, dtype=np.float64)
        if t.ndim != 1 or a.shape != t.shape:
            raise ValueError("times and amplitude must be matching 1d arrays")
        if self.base.grid != self.grid:
            raise ValueError("base field grid mismatch")
        if not self.base.is_solenoidal:
            raise ValueError("test fields must be solenoidal")
        if self.r < 0:
            raise ValueError("r must be >= 0")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "amplitude", a)

    def field_at(self, k: int) -> VectorField:
        return self.amplitude[k] * self.base

    def validate(self, tol: float = 1e-10) -> None:
        """Check the PSD invariant r I + grad z_t + (grad z_t)^T >= -tol."""
        lo, hi = sym_gradient_eig_range(self.base)
        worst = min(min(a * lo, a * hi) for a in self.amplitude)
        if self.r + worst < -tol:
            raise ValueError(
                f"test field not admissible: min eig {self.r + worst:.3e} < -{tol:.1e}"
            )


def admissible_r(z) -> float:
    """Smallest r >= 0 making r I + grad z + (grad z)^T PSD at every sample.

    Accepts a TestField, a single VectorField, or a sequence of VectorFields
    (one per recorded time).
    """
    if isinstance(z, TestField):
        lo, hi = sym_gradient_eig_range(z.base)
        worst = min(min(a * lo, a * hi) for a in z.amplitude)
        return max(0.0, -worst)
    if isinstance(z, VectorField):
        fields = [z]
    else:
        fields = list(z)
    worst = min(sym_gradient_eig_range(f)[0] for f in fields)
    return max(0.0, -worst)


def zero_test_field(grid: PeriodicGrid, times: np.ndarray) -> TestField:
    base = VectorField.zeros(grid, is_solenoidal=True)
    return TestField(grid, np.asarray(times, float), base, np.ones(len(times)), 0.0)


def make_test_field(
    grid: PeriodicGrid,
    times: np.ndarray,
    seed: int,
    max_mode: int = 4,
    modulate: bool = False,
) -> TestField:
    """Seeded band-limited random solenoidal test field, max |z| normalized
    to 1, optionally modulated in time by cos(2 pi t / T)."""
    times = np.asarray(times, dtype=np.float64)
    rng = np.random.default_rng(seed)
    ws = _workspace(grid.d, grid.n)
    mask = np.ones(grid.shape, dtype=bool)
    for k in ws.k:
        mask &= np.abs(k) <= max_mode
    comps = []
    for _ in range(grid.d):
        noise = rng.standard_normal(grid.shape)
        comps.append(ifftn_real(mask * fftn(noise)))
    base = leray_project(VectorField(grid, tuple(comps)))
    peak = base.max_abs()
    if peak > 0:
        base = (1.0 / peak) * base
    if modulate:
        span = times[-1] - times[0]
        period = span if span > 0 else 1.0
        amplitude = np.cos(2 * np.pi * (times - times[0]) / period)
    else:
        amplitude = np.ones(len(times))
    tf = TestField(grid, times, base, amplitude, 0.0)
    return TestField(grid, times, base, amplitude, admissible_r(tf))


def restrict_trajectory(traj: Trajectory, coarse: PeriodicGrid) -> Trajectory:
    """Spectrally restrict every recorded state onto a coarser grid.

    The restricted pair (phi, v) serves as the smooth reference (beta, omega)
    of weak_strong_check; v is the restriction of the fine velocity, not the
    coarse closure of the restricted phi, which is exactly what the stability
    bound wants from a stand-in smooth solution.
    """
    config = FlowConfig(
        grid=coarse,
        m=traj.config.m,
        dt=traj.config.dt,
        t_end=traj.config.t_end,
        cfl_safety=traj.config.cfl_safety,
        ic=traj.config.ic,
        ic_amplitude=traj.config.ic_amplitude,
        seed=traj.config.seed,
        record_every=traj.config.record_every,
    )
    states = []
    for s in traj.states:
        phi = restrict_to(s.phi, coarse)
        v = restrict_to(s.v, coarse)
        states.append(
            FlowState(s.t, phi, v, dirichlet_energy(phi), kinetic_K(v, traj.config.m))
        )
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


def relative_entropy(v: VectorField, w: VectorField, m: int) -> float:
    """Relative entropy of the quadratic metric K: K[v] - K[w] - ((K'[w], v - w)),
    which collapses to K[v - w] = 1/2 integral |grad^m (v - w)|^2."""
    return kinetic_K(v - w, m)


def _tensor_pairing(b: VectorField, s: list[list[np.ndarray]]) -> float:
    """((B x B, S)) = integral sum_ab B_a B_b S_ab for symmetric S."""
    d = b.grid.d
    acc = 0.0
    for a in range(d):
        acc += _mean(b.components[a] ** 2 * s[a][a])
        for c in range(a + 1, d):
            acc += 2.0 * _mean(b.components[a] * b.components[c] * s[a][c])
    return acc


def _sym_tensor(g: list[list[np.ndarray]], d: int) -> list[list[np.ndarray]]:
    return [[g[a][b] + g[b][a] for b in range(d)] for a in range(d)]


def _p_div_tensor(beta: VectorField) -> VectorField:
    """P div(beta x beta), the drive operator without dealiasing."""
    grid = beta.grid
    ws = _workspace(grid.d, grid.n)
    d = grid.d
    t_hat = {}
    for a in range(d):
        for b in range(a, d):
            t_hat[(a, b)] = fftn(beta.components[a] * beta.components[b])
    rows = []
    for a in range(d):
        acc = None
        for b in range(d):
            term = ws.ik[b] * t_hat[(min(a, b), max(a, b))]
            acc = term if acc is None else acc + term
        rows.append(acc)
    proj = leray_hat(rows, ws, d)
    return VectorField(grid, tuple(ifftn_real(p) for p in proj), is_solenoidal=True)


def _check_alignment(a: Trajectory, b_times: np.ndarray, what: str) -> np.ndarray:
    times = a.times
    if len(times) != len(b_times) or np.max(np.abs(times - b_times)) > 1e-12 * max(
        1.0, float(np.max(np.abs(b_times))) if len(b_times) else 1.0
    ):
        raise ValueError(f"{what}: recorded time grids do not match")
    return times


def dissipative_residual(traj: Trajectory, tf: TestField, m: int) -> np.ndarray:
    """Margin of the dissipation inequality against one test field.

    residual(t) = ||B_0||^2 - ||B_t||^2 e^{-t r}
                  - int_0^t { 2 K[v] + ((B x B, r I + S_z)) - 2 K[z] } e^{-s r} ds,
    with S_z = grad z + (grad z)^T and the integral by trapezoid on the
    recorded grid. Nonnegative (up to discretization slack) for trajectories
    produced by the solver.
    """
    if tf.grid != traj.config.grid:
        raise ValueError("test field grid does not match trajectory grid")
    times = _check_alignment(traj, tf.times, "dissipative_residual")
    r = tf.r
    s_base = _sym_tensor(_grad_tensor(tf.base), tf.grid.d)
    k_base = kinetic_K(tf.base, m)
    b2 = np.empty(len(times))
    f = np.empty(len(times))
    for k, state in enumerate(traj.states):
        b = gradient(state.phi)
        b2[k] = 2.0 * dirichlet_energy(state.phi)
        a_k = tf.amplitude[k]
        pairing = a_k * _tensor_pairing(b, s_base)
        f[k] = 2.0 * kinetic_K(state.v, m) + r * b2[k] + pairing - 2.0 * a_k**2 * k_base
    weight = np.exp(-r * times)
    return b2[0] - b2 * weight - _cumtrapz(f * weight, times)


@dataclass
class StabilityReport:
    """Per-time series and constants of the weak-strong stability bound."""

    times: np.ndarray
    nb2: np.ndarray            # ||B_t - beta_t||^2
    eta: np.ndarray            # relative entropy K[v_t - omega_t]
    n_series: np.ndarray       # N_t
    n_margin: np.ndarray       # (N_t - ||B_t||^2) e^{-rt}, the well-conditioned
                               # form of N_t >= ||B_t||^2 (equals the z = omega
                               # dissipation residual)
    e_series: np.ndarray       # e_t = nb2 + (N_t - ||B_t||^2)
    jl: np.ndarray             # J_t^L
    jc: np.ndarray             # constant term of the error expansion (== 0)
    jl1_cancel: np.ndarray     # divergence-form cancellation residual (== 0)
    weights: np.ndarray        # e^{-C t}
    margin: np.ndarray         # general bound margin, scaled by e^{-C t}
    margin_strong: np.ndarray  # margin with the J^L integral dropped
    r: float
    epsilon: float
    two_l_omega: float
    l_beta: float
    c_const: float
    b0_sq: float
    slack: float
    passed: bool
    passed_strong: bool


def weak_strong_check(
    dissip: Trajectory, smooth: Trajectory, m: int, slack_factor: float = 1e-4
) -> StabilityReport:
    """Verify the Gronwall stability bound of a candidate trajectory against
    a smooth reference sharing its recorded time grid.

    With B = grad phi (candidate), beta = grad psi and omega (reference),
    eta_t = K[v_t - omega_t], and

        J_t^L = -((B - beta, grad(omega . beta) + d beta/dt))
                - ((P div(beta x beta) + (-Lap)^m omega, v - omega)),

    the bound checked (in the overflow-safe form scaled by e^{-tC}) is

        ||B_t - beta_t||^2 e^{-tC} + int_0^t e^{-sC} eta_s ds
            <= ||B_0 - beta_0||^2 + 2 int_0^t e^{-sC} J_s^L ds + slack e^{-tC}.

    C = r + 2 L_omega + L_beta^2 / epsilon is an explicit admissible Gronwall
    constant: r is the smallest weight making omega's symmetric gradient
    admissible, 2 L_omega the largest spectral norm of that gradient,
    L_beta = max |div beta|, and epsilon = (4 pi^2)^m / 2 the coercivity
    constant of the relative entropy. margin/margin_strong record the scaled
    right-minus-left gap with slack = slack_factor * ||B_0||^2.
    """
    grid = dissip.config.grid
    if smooth.config.grid != grid:
        raise ValueError("trajectories live on different grids")
    times = _check_alignment(dissip, smooth.times, "weak_strong_check")
    d = grid.d
    nt = len(times)

    b_fields = [gradient(s.phi) for s in dissip.states]
    beta_fields = [gradient(s.phi) for s in smooth.states]
    v_fields = [s.v for s in dissip.states]
    omega_fields = [s.v for s in smooth.states]

    # admissibility and Lipschitz data of the reference
    eig_ranges = [sym_gradient_eig_range(w) for w in omega_fields]
    r = max(0.0, -min(lo for lo, _ in eig_ranges))
    two_l_omega = max(max(abs(lo), abs(hi)) for lo, hi in eig_ranges)
    epsilon = 0.5 * (4.0 * np.pi**2) ** m

    ws = _workspace(d, grid.n)
    div_beta = []
    for beta in beta_fields:
        acc = None
        for a in range(d):
            term = ws.ik[a] * fftn(beta.components[a])
            acc = term if acc is None else acc + term
        div_beta.append(ifftn_real(acc))
    l_beta = max(float(np.max(np.abs(x))) for x in div_beta)
    c_const = r + two_l_omega + l_beta**2 / epsilon

    # d beta / dt by centered differences on the recorded grid
    dbeta_dt = []
    for a in range(d):
        stack = np.stack([beta.components[a] for beta in beta_fields])
        edge = 2 if nt >= 3 else 1
        dbeta_dt.append(np.gradient(stack, times, axis=0, edge_order=edge))

    b2 = np.array([2.0 * dirichlet_energy(s.phi) for s in dissip.states])
    nb2 = np.empty(nt)
    eta = np.empty(nt)
    f = np.empty(nt)
    jl = np.empty(nt)
    jc = np.empty(nt)
    jl1_cancel = np.empty(nt)

    for k in range(nt):
        b, beta = b_fields[k], beta_fields[k]
        v, omega = v_fields[k], omega_fields[k]
        diff_b = b - beta
        diff_v = v - omega
        nb2[k] = l2_norm(diff_b) ** 2
        eta[k] = kinetic_K(diff_v, m)

        s_omega = _sym_tensor(_grad_tensor(omega), d)
        f[k] = (
            2.0 * kinetic_K(v, m)
            + r * b2[k]
            + _tensor_pairing(b, s_omega)
            - 2.0 * kinetic_K(omega, m)
        )

        # J^L and the structural identities
        ob = sum(omega.components[a] * beta.components[a] for a in range(d))
        grad_ob = gradient(ScalarField.from_samples(grid, ob))
        lin1 = 0.0
        for a in range(d):
            lin1 += _mean(
                diff_b.components[a] * (grad_ob.components[a] + dbeta_dt[a][k])
            )
        residual_force = _p_div_tensor(beta) + laplacian_pow(omega, m)
        lin2 = sum(
            _mean(residual_force.components[a] * diff_v.components[a]) for a in range(d)
        )
        jl[k] = -lin1 - lin2

        jc[k] = -_tensor_pairing(beta, s_omega) - 2.0 * _mean(ob * div_beta[k])
        jl1 = 0.0
        for a in range(d):
            bracket = -dbeta_dt[a][k] - omega.components[a] * div_beta[k]
            for bb in range(d):
                bracket = bracket - beta.components[bb] * s_omega[a][bb]
            jl1 += 2.0 * _mean(diff_b.components[a] * bracket)
        jl1_cancel[k] = jl1 + 2.0 * lin1

    # N_t and e_t from the dissipation inequality with z = omega; the margin
    # N_t - ||B_t||^2 is evaluated in the e^{-rt}-scaled form, where the
    # trapezoid error is not amplified by e^{rt}
    grow = np.exp(r * times)
    f_int = _cumtrapz(f / grow, times)
    n_series = grow * (b2[0] - f_int)
    n_margin = b2[0] - f_int - b2 / grow
    e_series = nb2 + (n_series - b2)

    weights = np.exp(-c_const * times)
    lhs = nb2 * weights + _cumtrapz(eta * weights, times)
    rhs = nb2[0] + 2.0 * _cumtrapz(jl * weights, times)
    slack = slack_factor * b2[0]
    margin = rhs + slack * weights - lhs
    margin_strong = nb2[0] + slack * weights - lhs

    return StabilityReport(
        times=times,
        nb2=nb2,
        eta=eta,
        n_series=n_series,
        n_margin=n_margin,
        e_series=e_series,
        jl=jl,
        jc=jc,
        jl1_cancel=jl1_cancel,
        weights=weights,
        margin=margin,
        margin_strong=margin_strong,
        r=r,
        epsilon=epsilon,
        two_l_omega=two_l_omega,
        l_beta=l_beta,
        c_const=c_const,
        b0_sq=b2[0],
        slack=slack,
        passed=bool(np.all(margin >= 0.0)),
        passed_strong=bool(np.all(margin_strong >= 0.0)),
    )
