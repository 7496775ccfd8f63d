"""Time integration of the transport gradient flow.

The state is a zero-mean scalar phi on the torus, advected by the
divergence-free velocity

    v = -(-Lap)^(-m) P div(grad phi x grad phi),

so the Dirichlet energy E[phi] decays at rate 2 K[v] while the law of phi is
(approximately) preserved. Quadratic terms are formed in physical space and
dealiased with the 2/3 rule, which makes the semi-discrete energy balance
exact; the only dissipation-law error left is the RK4 time discretization.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.fft as _fft

from .law import dirichlet_energy, empirical_law, kinetic_K, law_distance
from .spectral import (
    PeriodicGrid,
    ScalarField,
    VectorField,
    _workspace,
    l2_norm,
    leray_hat,
)

PRESETS = ("eigen", "mix", "random")


class CflError(ValueError):
    """Requested advection step exceeds the CFL bound."""


class FlowDivergedError(RuntimeError):
    """The solution left the space of finite grid functions."""


@dataclass(frozen=True)
class FlowConfig:
    """Run parameters for one simulation.

    m selects the velocity closure (0 = Darcy, 1 = Stokes, 2 allowed); dt is
    the requested step, reduced per step to cfl_safety * h / max|v|;
    record_every controls how often full field states are kept (the scalar
    ledger is always per step).
    """

    grid: PeriodicGrid
    m: int
    dt: float
    t_end: float
    cfl_safety: float = 0.9
    ic: str = "mix"
    ic_amplitude: float = 1.0
    seed: int = 0
    record_every: int = 1

    def __post_init__(self):
        if self.m not in (0, 1, 2):
            raise ValueError(f"m must be 0, 1 or 2, got {self.m}")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.t_end < 0:
            raise ValueError("t_end must be >= 0")
        if not 0 < self.cfl_safety <= 1:
            raise ValueError("cfl_safety must lie in (0, 1]")
        if self.ic not in PRESETS:
            raise ValueError(f"unknown initial condition {self.ic!r}, expected one of {PRESETS}")
        if self.ic_amplitude < 0:
            raise ValueError("ic_amplitude must be >= 0")
        if self.record_every < 1:
            raise ValueError("record_every must be >= 1")


@dataclass(frozen=True)
class FlowState:
    """One snapshot of the coupled pair (phi, v) with its energy ledger."""

    t: float
    phi: ScalarField
    v: VectorField
    energy: float
    k_value: float


class LedgerRow(NamedTuple):
    t: float
    energy: float
    kinetic: float
    residual: float
    law_drift: float
    dt: float


@dataclass
class Trajectory:
    """Recorded states (full fields, possibly strided) plus a per-step ledger."""

    config: FlowConfig
    states: list[FlowState]
    ledger: list[LedgerRow]

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.states])

    @property
    def final(self) -> FlowState:
        return self.states[-1]

    @property
    def converged(self) -> bool:
        """Stationarity residual of the last recorded step below 1e-6."""
        return self.ledger[-1].residual < 1e-6


# ---------------------------------------------------------------------------
# initial conditions

def initial_condition(config: FlowConfig) -> ScalarField:
    """Build the preset initial field (zero-mean, band-limited)."""
    grid = config.grid
    amp = config.ic_amplitude
    xs = grid.coords()
    if config.ic == "eigen":
        values = amp * np.sin(2 * np.pi * xs[0])
    elif config.ic == "mix":
        second = xs[1] if grid.d >= 2 else xs[0]
        values = amp * (np.sin(2 * np.pi * xs[0]) + np.sin(4 * np.pi * second))
    else:  # random, band-limited to |k_i| <= max(1, n//8)
        rng = np.random.default_rng(config.seed)
        ws = _workspace(grid.d, grid.n)
        noise = rng.standard_normal(grid.shape)
        cut = max(1, grid.n // 8)
        mask = np.ones(grid.shape, dtype=bool)
        for k in ws.k:
            mask &= np.abs(k) <= cut
        values = _fft.ifftn(mask * _fft.fftn(noise)).real
        peak = np.max(np.abs(values))
        if peak > 0:
            values *= amp / peak
    return ScalarField.from_samples(grid, values)


# ---------------------------------------------------------------------------
# spatial operators of the coupled system

class _Engine:
    """Array-level right-hand side for one (grid, m); no mutable state."""

    def __init__(self, grid: PeriodicGrid, m: int):
        self.grid = grid
        self.d = grid.d
        self.m = m
        self.ws = _workspace(grid.d, grid.n)
        k2 = self.ws.k2
        if m > 0:
            safe = np.where(k2 > 0, k2, 1.0)
            self.inv_mult = np.where(k2 > 0, (4.0 * np.pi**2 * safe) ** (-float(m)), 0.0)
        else:
            self.inv_mult = None

    def velocity_hat(self, phi_values: np.ndarray):
        """Return (v_hat list, grad phi list in physical space)."""
        d, ws = self.d, self.ws
        phi_hat = _fft.fftn(phi_values)
        grad_hat = [ws.ik[a] * phi_hat for a in range(d)]
        grad = [_fft.ifftn(g).real for g in grad_hat]
        # dealiased tensor product grad phi x grad phi
        t_hat = {}
        for a in range(d):
            for b in range(a, d):
                t_hat[(a, b)] = ws.dealias_mask * _fft.fftn(grad[a] * grad[b])
        div_t = []
        for a in range(d):
            acc = None
            for b in range(d):
                term = ws.ik[b] * t_hat[(min(a, b), max(a, b))]
                acc = term if acc is None else acc + term
            div_t.append(-acc)
        g_hat = leray_hat(div_t, ws, d)
        if self.inv_mult is None:
            return g_hat, grad
        return [self.inv_mult * g for g in g_hat], grad

    def rhs(self, phi_values: np.ndarray):
        """d(phi)/dt = -dealias(v . grad phi); returns (rhs, v components)."""
        v_hat, grad = self.velocity_hat(phi_values)
        v = [_fft.ifftn(vh).real for vh in v_hat]
        adv = v[0] * grad[0]
        for a in range(1, self.d):
            adv += v[a] * grad[a]
        adv_hat = self.ws.dealias_mask * _fft.fftn(adv)
        adv_hat.flat[0] = 0.0  # exact mean conservation
        return -_fft.ifftn(adv_hat).real, v

    def velocity(self, phi_values: np.ndarray) -> list[np.ndarray]:
        v_hat, _ = self.velocity_hat(phi_values)
        return [_fft.ifftn(vh).real for vh in v_hat]


def compute_drive(phi: ScalarField) -> VectorField:
    """Solenoidal drive G = -P div(dealias(grad phi x grad phi)).

    G is the L2 gradient of the Dirichlet energy along divergence-free
    transport directions; it vanishes exactly on eigenfunctions of the
    Laplacian.
    """
    eng = _Engine(phi.grid, m=0)
    g_hat, _ = eng.velocity_hat(phi.values)
    comps = tuple(_fft.ifftn(g).real for g in g_hat)
    return VectorField(phi.grid, comps, is_solenoidal=True)


def compute_velocity(g: VectorField, m: int) -> VectorField:
    """Velocity closure v = (-Lap)^(-m) G; m = 0 returns G unchanged."""
    if m not in (0, 1, 2):
        raise ValueError(f"m must be 0, 1 or 2, got {m}")
    if m == 0:
        return VectorField(g.grid, g.components, is_solenoidal=True)
    eng = _Engine(g.grid, m)
    comps = []
    for c in g.components:
        hat = _fft.fftn(c) * eng.inv_mult
        hat.flat[0] = 0.0
        comps.append(_fft.ifftn(hat).real)
    return VectorField(g.grid, tuple(comps), is_solenoidal=True)


def stationarity_residual(phi: ScalarField, m: int) -> float:
    """L2 norm of the closure velocity; zero iff phi is a discrete stationary point."""
    return l2_norm(compute_velocity(compute_drive(phi), m))


def advect(phi: ScalarField, v: VectorField, dt: float, cfl_safety: float = 1.0) -> ScalarField:
    """One RK4 step of d(phi)/dt = -v . grad phi with v frozen.

    Products are dealiased and the mean mode is pinned to zero, so the grid
    mean of phi is conserved exactly. Raises CflError when dt exceeds
    cfl_safety * h / max|v|.
    """
    if not v.is_solenoidal:
        raise ValueError("advect requires a solenoidal velocity")
    if dt <= 0:
        raise ValueError("dt must be positive")
    grid = phi.grid
    vmax = v.max_abs()
    if vmax > 0 and dt > cfl_safety * grid.h / vmax * (1 + 1e-12):
        raise CflError(
            f"dt = {dt:.3e} exceeds CFL bound {cfl_safety * grid.h / vmax:.3e}"
        )
    ws = _workspace(grid.d, grid.n)

    def rhs(values: np.ndarray) -> np.ndarray:
        hat = _fft.fftn(values)
        adv = None
        for a in range(grid.d):
            ga = _fft.ifftn(ws.ik[a] * hat).real
            adv = v.components[a] * ga if adv is None else adv + v.components[a] * ga
        adv_hat = ws.dealias_mask * _fft.fftn(adv)
        adv_hat.flat[0] = 0.0
        return -_fft.ifftn(adv_hat).real

    y = phi.values
    k1 = rhs(y)
    k2 = rhs(y + 0.5 * dt * k1)
    k3 = rhs(y + 0.5 * dt * k2)
    k4 = rhs(y + dt * k3)
    return ScalarField(grid, y + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4))


def _make_state(t: float, phi_values: np.ndarray, v_values, grid: PeriodicGrid, m: int) -> FlowState:
    phi = ScalarField(grid, phi_values)
    v = VectorField(grid, tuple(v_values), is_solenoidal=True)
    return FlowState(t, phi, v, dirichlet_energy(phi), kinetic_K(v, m))


def initial_state(config: FlowConfig) -> FlowState:
    phi0 = initial_condition(config)
    eng = _Engine(config.grid, config.m)
    return _make_state(0.0, phi0.values, eng.velocity(phi0.values), config.grid, config.m)


def state_from_phi(phi: ScalarField, config: FlowConfig, t: float = 0.0) -> FlowState:
    """Wrap an explicit phi into a consistent FlowState (v recomputed)."""
    if phi.grid != config.grid:
        raise ValueError(f"field grid {phi.grid} does not match config grid {config.grid}")
    eng = _Engine(config.grid, config.m)
    return _make_state(t, phi.values, eng.velocity(phi.values), config.grid, config.m)


def step(state: FlowState, config: FlowConfig, dt_limit: float | None = None) -> FlowState:
    """Advance one RK4 step of the coupled system, v recomputed per stage.

    The effective step is min(config.dt, cfl_safety * h / max|v|, dt_limit).
    """
    grid = config.grid
    eng = _Engine(grid, config.m)
    vmax = state.v.max_abs()
    dt = config.dt
    if vmax > 0:
        dt = min(dt, config.cfl_safety * grid.h / vmax)
    if dt_limit is not None:
        dt = min(dt, dt_limit)
    if dt <= 1e-14:
        raise FlowDivergedError(f"step size collapsed to {dt:.3e} at t = {state.t:.6f}")
    y = state.phi.values
    k1, _ = eng.rhs(y)
    k2, _ = eng.rhs(y + 0.5 * dt * k1)
    k3, _ = eng.rhs(y + 0.5 * dt * k2)
    k4, _ = eng.rhs(y + dt * k3)
    y_new = y + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    if not np.all(np.isfinite(y_new)):
        raise FlowDivergedError(f"non-finite state after step from t = {state.t:.6f}")
    return _make_state(state.t + dt, y_new, eng.velocity(y_new), grid, config.m)


def simulate(config: FlowConfig, phi0: ScalarField | None = None) -> Trajectory:
    """Integrate from t = 0 to t_end, recording the ledger every step.

    Starts from the preset initial condition unless an explicit phi0 is
    given. Full field states are kept every record_every steps plus the
    final one. Aborts with FlowDivergedError on non-finite values or CFL
    collapse.
    """
    state = initial_state(config) if phi0 is None else state_from_phi(phi0, config)
    law0 = empirical_law(state.phi)
    states = [state]
    ledger = [
        LedgerRow(0.0, state.energy, state.k_value, l2_norm(state.v), 0.0, 0.0)
    ]
    t_end = config.t_end
    istep = 0
    while state.t < t_end - 1e-12 * max(t_end, 1.0):
        state = step(state, config, dt_limit=t_end - state.t)
        istep += 1
        drift = law_distance(empirical_law(state.phi), law0)
        ledger.append(
            LedgerRow(
                state.t,
                state.energy,
                state.k_value,
                l2_norm(state.v),
                drift,
                state.t - ledger[-1].t,
            )
        )
        if istep % config.record_every == 0:
            states.append(state)
    if states[-1] is not state:
        states.append(state)
    return Trajectory(config, states, ledger)
