"""Isospectral double-bracket matrix flow.

dM/dt = [M, V] with V = [M, Q] drives a symmetric M towards a diagonal
matrix while preserving its spectrum; with Q = diag(1, ..., d) the limit
carries the eigenvalues of M(0) sorted in non-decreasing order, and the
alignment tr(M Q) grows monotonically (d/dt tr(MQ) = ||[M, Q]||_F^2).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SYM_TOL = 1e-12


def default_q(d: int) -> np.ndarray:
    return np.diag(np.arange(1.0, d + 1.0))


def random_symmetric(d: int, seed: int = 0, scale: float = 1.0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((d, d)) * scale
    return 0.5 * (a + a.T)


def _check_symmetric(m: np.ndarray, name: str) -> np.ndarray:
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"{name} must be a square matrix, got shape {m.shape}")
    scale = max(1.0, float(np.max(np.abs(m))))
    if np.max(np.abs(m - m.T)) > SYM_TOL * scale:
        raise ValueError(f"{name} must be symmetric")
    return m


@dataclass(frozen=True)
class BrockettState:
    """Matrix flow snapshot: symmetric M, fixed Q, derived antisymmetric V."""

    t: float
    M: np.ndarray
    Q: np.ndarray
    V: np.ndarray

    @property
    def offdiag_norm(self) -> float:
        off = self.M - np.diag(np.diag(self.M))
        return float(np.max(np.abs(off))) if self.M.shape[0] > 1 else 0.0

    @property
    def alignment(self) -> float:
        """tr(M Q), the Lyapunov functional of the flow."""
        return float(np.trace(self.M @ self.Q))


def brockett_rhs(m: np.ndarray, q: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Return (V, dM) with V = [M, Q] = MQ - QM and dM = [M, V] = MV - VM.

    dM is symmetric by construction and the flow it generates is isospectral;
    the commutator orientation is the one that makes tr(MQ) non-decreasing,
    so the diagonal limit is sorted against Q.
    """
    m = _check_symmetric(m, "M")
    q = _check_symmetric(q, "Q")
    if m.shape != q.shape:
        raise ValueError(f"shape mismatch: M {m.shape} vs Q {q.shape}")
    v = m @ q - q @ m
    dm = m @ v - v @ m
    return v, dm


def brockett_integrate(
    m0: np.ndarray,
    q: np.ndarray | None = None,
    dt: float = 1e-3,
    t_end: float = 20.0,
    record_every: int = 1,
) -> list[BrockettState]:
    """RK4 trajectory of the double-bracket flow.

    M is re-symmetrized after every step to remove the O(dt^5) asymmetry
    drift of the integrator. Raises on non-finite values.
    """
    m = _check_symmetric(m0, "M0")
    d = m.shape[0]
    q = default_q(d) if q is None else _check_symmetric(q, "Q")
    if m.shape != q.shape:
        raise ValueError(f"shape mismatch: M0 {m.shape} vs Q {q.shape}")
    if dt <= 0:
        raise ValueError("dt must be positive")
    if record_every < 1:
        raise ValueError("record_every must be >= 1")

    def rhs(mat: np.ndarray) -> np.ndarray:
        v = mat @ q - q @ mat
        return mat @ v - v @ mat

    nsteps = int(round(t_end / dt))
    states = [BrockettState(0.0, m.copy(), q.copy(), m @ q - q @ m)]
    for i in range(1, nsteps + 1):
        k1 = rhs(m)
        k2 = rhs(m + 0.5 * dt * k1)
        k3 = rhs(m + 0.5 * dt * k2)
        k4 = rhs(m + dt * k3)
        m = m + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        m = 0.5 * (m + m.T)
        if not np.all(np.isfinite(m)):
            raise FloatingPointError(f"non-finite matrix at t = {i * dt:.6f}")
        if i % record_every == 0 or i == nsteps:
            states.append(BrockettState(i * dt, m.copy(), q.copy(), m @ q - q @ m))
    return states


def spectrum_drift(m0: np.ndarray, mt: np.ndarray) -> float:
    """Relative drift of the trace invariants tr(M^p), p = 1..4.

    Zero for any pair related by an orthogonal similarity, so it measures
    how far a numerical trajectory has left the isospectral orbit.
    """
    m0 = np.asarray(m0, dtype=np.float64)
    mt = np.asarray(mt, dtype=np.float64)
    if m0.shape != mt.shape:
        raise ValueError(f"shape mismatch: {m0.shape} vs {mt.shape}")
    worst = 0.0
    p0, pt = np.eye(m0.shape[0]), np.eye(m0.shape[0])
    for _ in range(4):
        p0 = p0 @ m0
        pt = pt @ mt
        tr0, trt = float(np.trace(p0)), float(np.trace(pt))
        worst = max(worst, abs(trt - tr0) / (1.0 + abs(tr0)))
    return worst


def convergence_step(
    states: list[BrockettState], threshold: float = 1e-6, run_length: int = 100
) -> int | None:
    """Index of the first state opening a run of run_length consecutive
    recorded states with off-diagonal max norm below threshold, or None."""
    run = 0
    for i, s in enumerate(states):
        run = run + 1 if s.offdiag_norm < threshold else 0
        if run >= run_length:
            return i - run_length + 1
    return None
