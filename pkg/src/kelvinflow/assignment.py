"""Assignment problems: MK2 matching, LAP solvers and the lattice QAP.

The quadratic Monge-Kantorovich distance between two equal-size point clouds
reduces to a linear assignment problem (LAP) with cost |A_i - B_j|^2. The
discrete rearrangement problem for the Dirichlet energy is a quadratic
assignment problem (QAP) whose weight matrix gamma comes from the
nearest-neighbor lattice stencil and whose cost matrix is
c(i, j) = |phi0(A_i) - phi0(A_j)|^2.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class Permutation:
    """A bijection of {0, ..., N-1}, stored as the image array sigma."""

    sigma: np.ndarray

    def __post_init__(self):
        s = np.array(self.sigma, dtype=np.int64, copy=True)
        if s.ndim != 1 or s.size == 0:
            raise ValueError("permutation must be a non-empty flat index array")
        if not np.array_equal(np.sort(s), np.arange(s.size)):
            raise ValueError("permutation must be a bijection of 0..N-1")
        s.setflags(write=False)
        object.__setattr__(self, "sigma", s)

    @classmethod
    def identity(cls, n: int) -> "Permutation":
        return cls(np.arange(n))

    def __len__(self) -> int:
        return self.sigma.size

    def __eq__(self, other) -> bool:
        if not isinstance(other, Permutation):
            return NotImplemented
        return np.array_equal(self.sigma, other.sigma)


@dataclass(frozen=True)
class QAPInstance:
    """Pair (gamma, cost) of same-size nonnegative square matrices."""

    gamma: np.ndarray
    cost: np.ndarray

    def __post_init__(self):
        g = np.array(self.gamma, dtype=np.float64, copy=True)
        c = np.array(self.cost, dtype=np.float64, copy=True)
        for name, a in (("gamma", g), ("cost", c)):
            if a.ndim != 2 or a.shape[0] != a.shape[1]:
                raise ValueError(f"{name} must be square, got shape {a.shape}")
            if not np.all(np.isfinite(a)) or np.any(a < 0):
                raise ValueError(f"{name} entries must be finite and >= 0")
        if g.shape != c.shape:
            raise ValueError(f"shape mismatch: gamma {g.shape} vs cost {c.shape}")
        g.setflags(write=False)
        c.setflags(write=False)
        object.__setattr__(self, "gamma", g)
        object.__setattr__(self, "cost", c)

    @property
    def n(self) -> int:
        return self.gamma.shape[0]


# ---------------------------------------------------------------------------
# linear assignment

def lap_bruteforce(cost: np.ndarray) -> tuple[float, Permutation]:
    """Exact LAP optimum by exhaustive enumeration; N <= 10 only."""
    c = np.asarray(cost, dtype=np.float64)
    n = c.shape[0]
    if c.ndim != 2 or c.shape != (n, n):
        raise ValueError("cost must be square")
    if n > 10:
        raise ValueError(f"brute force limited to N <= 10, got {n}")
    rows = np.arange(n)
    best_val, best_sigma = np.inf, None
    for perm in itertools.permutations(range(n)):
        val = c[rows, perm].sum()
        if val < best_val:
            best_val, best_sigma = val, perm
    return float(best_val), Permutation(np.array(best_sigma))


def lap_solve(cost: np.ndarray) -> tuple[float, Permutation]:
    """Exact LAP optimum by the O(N^3) augmenting-path method with potentials.

    Each phase grows a shortest alternating tree from one unassigned row and
    augments along the path found; dual potentials keep reduced costs
    nonnegative so every phase is a Dijkstra pass. Ties break on the first
    path found; only the optimal value is unique under ties.
    """
    c = np.asarray(cost, dtype=np.float64)
    n = c.shape[0]
    if c.ndim != 2 or c.shape != (n, n):
        raise ValueError("cost must be a square matrix")
    if not np.all(np.isfinite(c)):
        raise ValueError("cost entries must be finite")
    u = np.zeros(n)                               # row potentials
    v = np.zeros(n + 1)                           # column potentials, slot n = virtual root
    match = np.full(n + 1, -1, dtype=np.int64)    # column -> assigned row
    for i in range(n):
        match[n] = i
        j_cur = n
        min_slack = np.full(n, np.inf)            # cheapest tree edge into each column
        prev = np.full(n, -1, dtype=np.int64)
        visited = np.zeros(n + 1, dtype=bool)
        while match[j_cur] != -1:
            visited[j_cur] = True
            row = match[j_cur]
            free = ~visited[:n]
            idx = np.flatnonzero(free)
            slack = c[row, idx] - u[row] - v[idx]
            better = slack < min_slack[idx]
            min_slack[idx[better]] = slack[better]
            prev[idx[better]] = j_cur
            j_next = idx[np.argmin(min_slack[idx])]
            delta = min_slack[j_next]
            u[match[visited]] += delta
            v[visited] -= delta
            min_slack[free] -= delta
            j_cur = j_next
        while j_cur != n:                          # flip matches along the path
            j_prev = prev[j_cur]
            match[j_cur] = match[j_prev]
            j_cur = j_prev
    sigma = np.empty(n, dtype=np.int64)
    for j in range(n):
        sigma[match[j]] = j
    value = float(c[np.arange(n), sigma].sum())
    return value, Permutation(sigma)


def mk2_distance(a_points, b_points) -> tuple[float, Permutation]:
    """Quadratic Monge-Kantorovich distance between two equal-size clouds.

    Solves the LAP on c(i, j) = |A_i - B_j|^2 and returns
    (sqrt(min mean squared cost), optimal matching).
    """
    a = np.asarray(a_points, dtype=np.float64)
    b = np.asarray(b_points, dtype=np.float64)
    if a.ndim == 1:
        a = a[:, None]
    if b.ndim == 1:
        b = b[:, None]
    if a.size == 0:
        raise ValueError("point sets must be non-empty")
    if a.shape != b.shape:
        raise ValueError(f"point sets must match in size, got {a.shape} vs {b.shape}")
    diff = a[:, None, :] - b[None, :, :]
    cost = np.einsum("ijk,ijk->ij", diff, diff)
    value, sigma = lap_solve(cost)
    return float(np.sqrt(max(value, 0.0) / a.shape[0])), sigma


# ---------------------------------------------------------------------------
# lattice weights and the QAP

def build_lattice_weights(
    n: int, dim: int = 1, topology: str = "path", spacing: float | None = None
) -> np.ndarray:
    """Nearest-neighbor weight matrix gamma for a 1d or 2d lattice.

    gamma(i, j) = h^dim / (2 h^2) on nearest-neighbor pairs (0 otherwise), so
    that sum_ij gamma(i, j) |phi_i - phi_j|^2 is the finite-difference value
    of integral |grad phi|^2: exact for piecewise-linear phi in 1d, second
    order in h for smooth samples. Default spacing is 1/n on the periodic
    unit domain and 1/(n-1) on a path.
    """
    if topology not in ("path", "periodic"):
        raise ValueError(f"topology must be 'path' or 'periodic', got {topology!r}")
    if dim not in (1, 2):
        raise ValueError(f"dim must be 1 or 2, got {dim}")
    if n < 2:
        raise ValueError("lattice needs at least 2 vertices per axis")
    if spacing is None:
        spacing = 1.0 / n if topology == "periodic" else 1.0 / (n - 1)
    if spacing <= 0:
        raise ValueError("spacing must be positive")
    w = spacing**dim / (2.0 * spacing**2)
    size = n**dim
    gamma = np.zeros((size, size))

    def link(i: int, j: int) -> None:
        gamma[i, j] = w
        gamma[j, i] = w

    if dim == 1:
        for i in range(n - 1):
            link(i, i + 1)
        if topology == "periodic":
            link(n - 1, 0)
    else:
        def vid(i: int, j: int) -> int:
            return i * n + j

        for i in range(n):
            for j in range(n):
                if j + 1 < n:
                    link(vid(i, j), vid(i, j + 1))
                elif topology == "periodic":
                    link(vid(i, j), vid(i, 0))
                if i + 1 < n:
                    link(vid(i, j), vid(i + 1, j))
                elif topology == "periodic":
                    link(vid(i, j), vid(0, j))
    return gamma


def lattice_dirichlet_sum(gamma: np.ndarray, values: np.ndarray) -> float:
    """sum_ij gamma(i, j) |values_i - values_j|^2 over the nonzero entries."""
    vals = np.asarray(values, dtype=np.float64).ravel()
    ii, jj = np.nonzero(gamma)
    d = vals[ii] - vals[jj]
    return float(np.sum(gamma[ii, jj] * d * d))


def qap_cost_from_values(values: np.ndarray) -> np.ndarray:
    """Cost matrix c(i, j) = |phi0_i - phi0_j|^2 from sampled field values."""
    vals = np.asarray(values, dtype=np.float64).ravel()
    d = vals[:, None] - vals[None, :]
    return d * d


def _objective_raw(inst: QAPInstance, s: np.ndarray) -> float:
    return float(np.einsum("ij,ij->", inst.gamma, inst.cost[np.ix_(s, s)]))


def qap_objective(inst: QAPInstance, sigma: Permutation) -> float:
    """sum_ij cost(sigma_i, sigma_j) * gamma(i, j)."""
    if len(sigma) != inst.n:
        raise ValueError(f"permutation size {len(sigma)} does not match instance {inst.n}")
    return _objective_raw(inst, sigma.sigma)


def qap_bruteforce(inst: QAPInstance) -> tuple[float, Permutation]:
    """Global QAP optimum by enumeration; N <= 9 only."""
    if inst.n > 9:
        raise ValueError(f"brute force limited to N <= 9, got {inst.n}")
    best_val, best_sigma = np.inf, None
    for perm in itertools.permutations(range(inst.n)):
        s = np.array(perm)
        val = _objective_raw(inst, s)
        if val < best_val:
            best_val, best_sigma = val, s
    return float(best_val), Permutation(best_sigma)


def _local_search(inst: QAPInstance, sigma0: Permutation, seed=None):
    rng = np.random.default_rng(seed)
    s = sigma0.sigma.copy()
    n = s.size
    if n != inst.n:
        raise ValueError(f"permutation size {n} does not match instance {inst.n}")
    value = _objective_raw(inst, s)
    iterations = 0
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    while True:
        best_val = value
        best_pairs = []
        for i, j in pairs:
            s[i], s[j] = s[j], s[i]
            val = _objective_raw(inst, s)
            s[i], s[j] = s[j], s[i]
            if val < best_val:
                best_val = val
                best_pairs = [(i, j)]
            elif best_pairs and val == best_val:
                best_pairs.append((i, j))
        if not best_pairs:
            return value, Permutation(s), iterations
        i, j = best_pairs[rng.integers(len(best_pairs))] if len(best_pairs) > 1 else best_pairs[0]
        s[i], s[j] = s[j], s[i]
        value = best_val
        iterations += 1


def qap_local_search(inst: QAPInstance, sigma0: Permutation, seed=None) -> tuple[float, Permutation]:
    """Steepest-descent 2-swap from sigma0 to a local optimum.

    Every iteration applies the transposition with the largest objective
    decrease (rng breaks exact ties), so the objective is strictly
    decreasing and the returned value never exceeds the initial one.
    """
    value, sigma, _ = _local_search(inst, sigma0, seed)
    return value, sigma
