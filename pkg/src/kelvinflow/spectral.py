"""Periodic-grid fields and Fourier-space differential operators on the unit torus.

All fields live on a uniform grid over T^d = [0,1)^d with n points per axis,
x_j = j/n. Derivatives, the Leray projection and inverse Laplacian powers are
exact spectral multipliers; the integer wavenumbers run over [-n/2, n/2) and
the Nyquist mode is dropped by odd-order (derivative) operators.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.fft as _fft

TWO_PI = 2.0 * np.pi

# Fields produced by operators are zero-mean up to roundoff; constructors
# accept this much relative slack.
MEAN_TOL = 1e-12


@dataclass(frozen=True)
class PeriodicGrid:
    """Uniform periodic grid on the unit torus, d in {1,2,3}, n even and >= 4."""

    d: int
    n: int

    def __post_init__(self):
        if self.d not in (1, 2, 3):
            raise ValueError(f"grid dimension must be 1, 2 or 3, got {self.d}")
        if self.n < 4 or self.n % 2 != 0:
            raise ValueError(f"grid size must be even and >= 4, got {self.n}")

    @property
    def h(self) -> float:
        return 1.0 / self.n

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.d

    @property
    def size(self) -> int:
        return self.n**self.d

    def coords(self) -> list[np.ndarray]:
        """Meshgrid coordinate arrays x_i = j/n, one per axis ('ij' indexing)."""
        x = np.arange(self.n) / self.n
        return np.meshgrid(*([x] * self.d), indexing="ij")


class _Workspace:
    """Wavenumber tables for one (d, n); built once, shared, read-only."""

    __slots__ = ("k", "k2", "kd", "inv_kd2", "ik", "dealias_mask")

    def __init__(self, d: int, n: int):
        kline = np.fft.fftfreq(n, 1.0 / n).astype(np.int64)
        self.k = []
        for a in range(d):
            shape = [1] * d
            shape[a] = n
            self.k.append(kline.reshape(shape).copy())
        k2 = self.k[0].astype(np.float64) ** 2
        for a in range(1, d):
            k2 = k2 + self.k[a].astype(np.float64) ** 2
        self.k2 = k2
        # Derivative-consistent wavenumbers: the Nyquist mode is zeroed (it
        # has no well-defined odd derivative on a real grid). The Leray
        # projector is built from these too, so it is exactly the orthogonal
        # projection onto the kernel of the discrete divergence and keeps
        # real fields real (the full k x k multiplier would break Hermitian
        # symmetry on the unpaired Nyquist planes).
        self.kd = []
        self.ik = []
        for a in range(d):
            kk = self.k[a].astype(np.float64)
            kk[self.k[a] == -(n // 2)] = 0.0
            self.kd.append(kk)
            self.ik.append(1j * TWO_PI * kk)
        kd2 = self.kd[0] ** 2
        for a in range(1, d):
            kd2 = kd2 + self.kd[a] ** 2
        safe = np.where(kd2 > 0, kd2, 1.0)
        self.inv_kd2 = np.where(kd2 > 0, 1.0 / safe, 0.0)
        cut = n // 3
        mask = np.abs(self.k[0]) <= cut
        for a in range(1, d):
            mask = mask & (np.abs(self.k[a]) <= cut)
        self.dealias_mask = mask
        for arr in (*self.k, self.k2, *self.kd, self.inv_kd2, *self.ik, self.dealias_mask):
            arr.setflags(write=False)


@lru_cache(maxsize=None)
def _workspace(d: int, n: int) -> _Workspace:
    return _Workspace(d, n)


def _ws(grid: PeriodicGrid) -> _Workspace:
    return _workspace(grid.d, grid.n)


def _check_mean(values: np.ndarray, what: str) -> None:
    scale = max(1.0, float(np.max(np.abs(values))) if values.size else 1.0)
    mean = float(values.mean())
    if abs(mean) > MEAN_TOL * scale:
        raise ValueError(f"{what} must have zero mean, got {mean:.3e}")


def _own(values: np.ndarray, grid: PeriodicGrid, what: str) -> np.ndarray:
    v = np.array(values, dtype=np.float64, order="C", copy=True)
    if v.shape != grid.shape:
        raise ValueError(f"{what} shape {v.shape} does not match grid {grid.shape}")
    v.setflags(write=False)
    return v


@dataclass(frozen=True)
class ScalarField:
    """Zero-mean real grid function on a periodic grid. Immutable."""

    grid: PeriodicGrid
    values: np.ndarray

    def __post_init__(self):
        v = _own(self.values, self.grid, "ScalarField")
        _check_mean(v, "ScalarField")
        object.__setattr__(self, "values", v)

    @classmethod
    def from_samples(cls, grid: PeriodicGrid, values: np.ndarray) -> "ScalarField":
        """Build a field from arbitrary samples, subtracting the mean."""
        v = np.asarray(values, dtype=np.float64)
        return cls(grid, v - v.mean())

    @classmethod
    def zeros(cls, grid: PeriodicGrid) -> "ScalarField":
        return cls(grid, np.zeros(grid.shape))

    def __add__(self, other: "ScalarField") -> "ScalarField":
        _same_grid(self.grid, other.grid)
        return ScalarField(self.grid, self.values + other.values)

    def __sub__(self, other: "ScalarField") -> "ScalarField":
        _same_grid(self.grid, other.grid)
        return ScalarField(self.grid, self.values - other.values)

    def __mul__(self, c: float) -> "ScalarField":
        return ScalarField(self.grid, self.values * float(c))

    __rmul__ = __mul__


@dataclass(frozen=True)
class VectorField:
    """d-component real grid field; is_solenoidal marks spectrally
    divergence-free fields (set by leray_project, preserved by diagonal
    Fourier multipliers)."""

    grid: PeriodicGrid
    components: tuple[np.ndarray, ...]
    is_solenoidal: bool = False

    def __post_init__(self):
        comps = tuple(self.components)
        if len(comps) != self.grid.d:
            raise ValueError(
                f"expected {self.grid.d} components, got {len(comps)}"
            )
        comps = tuple(_own(c, self.grid, "VectorField component") for c in comps)
        object.__setattr__(self, "components", comps)

    @classmethod
    def zeros(cls, grid: PeriodicGrid, *, is_solenoidal: bool = False) -> "VectorField":
        return cls(grid, tuple(np.zeros(grid.shape) for _ in range(grid.d)), is_solenoidal)

    def max_abs(self) -> float:
        return max(float(np.max(np.abs(c))) for c in self.components)

    def validate_solenoidal(self, tol: float = 1e-10) -> None:
        """Raise if the solenoidal claim fails at relative tolerance tol."""
        if not self.is_solenoidal:
            return
        scale = max(1.0, self.max_abs())
        div = divergence(self).values
        worst = float(np.max(np.abs(div)))
        if worst > tol * scale:
            raise ValueError(f"field marked solenoidal but max |div| = {worst:.3e}")

    def __add__(self, other: "VectorField") -> "VectorField":
        _same_grid(self.grid, other.grid)
        comps = tuple(a + b for a, b in zip(self.components, other.components))
        return VectorField(self.grid, comps, self.is_solenoidal and other.is_solenoidal)

    def __sub__(self, other: "VectorField") -> "VectorField":
        _same_grid(self.grid, other.grid)
        comps = tuple(a - b for a, b in zip(self.components, other.components))
        return VectorField(self.grid, comps, self.is_solenoidal and other.is_solenoidal)

    def __mul__(self, c: float) -> "VectorField":
        comps = tuple(a * float(c) for a in self.components)
        return VectorField(self.grid, comps, self.is_solenoidal)

    __rmul__ = __mul__


Field = ScalarField | VectorField


def _same_grid(a: PeriodicGrid, b: PeriodicGrid) -> None:
    if a != b:
        raise ValueError(f"grid mismatch: {a} vs {b}")


# ---------------------------------------------------------------------------
# transforms and inner products

def fftn(values: np.ndarray) -> np.ndarray:
    return _fft.fftn(values)


def ifftn_real(hat: np.ndarray) -> np.ndarray:
    return _fft.ifftn(hat).real


def l2_inner(a: Field, b: Field) -> float:
    """L2 inner product over the unit torus (grid mean of the product)."""
    _same_grid(a.grid, b.grid)
    if isinstance(a, ScalarField) and isinstance(b, ScalarField):
        return float(np.mean(a.values * b.values))
    if isinstance(a, VectorField) and isinstance(b, VectorField):
        acc = 0.0
        for ca, cb in zip(a.components, b.components):
            acc += float(np.mean(ca * cb))
        return acc
    raise TypeError("l2_inner requires two fields of the same kind")


def l2_norm(a: Field) -> float:
    return float(np.sqrt(max(l2_inner(a, a), 0.0)))


# ---------------------------------------------------------------------------
# array-level operator kernels (shared with the time integrator)

def grad_values(values: np.ndarray, ws: _Workspace, d: int) -> list[np.ndarray]:
    hat = _fft.fftn(values)
    return [_fft.ifftn(ws.ik[a] * hat).real for a in range(d)]


def div_values(comps, ws: _Workspace, d: int) -> np.ndarray:
    acc = ws.ik[0] * _fft.fftn(comps[0])
    for a in range(1, d):
        acc = acc + ws.ik[a] * _fft.fftn(comps[a])
    return _fft.ifftn(acc).real


def leray_hat(hats: list[np.ndarray], ws: _Workspace, d: int) -> list[np.ndarray]:
    """Remove the longitudinal part of each Fourier mode; zero the k=0 mode."""
    s = ws.kd[0] * hats[0]
    for a in range(1, d):
        s = s + ws.kd[a] * hats[a]
    s = s * ws.inv_kd2
    out = [hats[a] - ws.kd[a] * s for a in range(d)]
    for a in range(d):
        out[a].flat[0] = 0.0
    return out


def dealias_values(values: np.ndarray, ws: _Workspace) -> np.ndarray:
    return _fft.ifftn(ws.dealias_mask * _fft.fftn(values)).real


# ---------------------------------------------------------------------------
# public operators

def gradient(phi: ScalarField) -> VectorField:
    """Spectral gradient of a scalar field.

    Multiplier i*2*pi*k per axis with the Nyquist mode zeroed. The result is
    a gradient field, hence not marked solenoidal.
    """
    ws = _ws(phi.grid)
    comps = grad_values(phi.values, ws, phi.grid.d)
    return VectorField(phi.grid, tuple(comps), is_solenoidal=False)


def divergence(v: VectorField) -> ScalarField:
    """Spectral divergence; zero-mean by construction."""
    ws = _ws(v.grid)
    vals = div_values(v.components, ws, v.grid.d)
    return ScalarField(v.grid, vals)


def leray_project(v: VectorField) -> VectorField:
    """L2-orthogonal projection onto divergence-free fields.

    In Fourier space each mode loses its component along k; the k=0 mode is
    zeroed to keep the zero-mean convention. Idempotent and a contraction.
    """
    ws = _ws(v.grid)
    hats = [_fft.fftn(c) for c in v.components]
    proj = leray_hat(hats, ws, v.grid.d)
    comps = tuple(_fft.ifftn(p).real for p in proj)
    return VectorField(v.grid, comps, is_solenoidal=True)


def inverse_laplacian_pow(f: Field, m: int) -> Field:
    """Apply (-Laplacian)^(-m) for m in {0, 1, 2}.

    Fourier multiplier (4*pi^2*|k|^2)^(-m) on k != 0; the k=0 mode is forced
    to zero, which is well-defined only because fields are zero-mean.
    """
    if m not in (0, 1, 2):
        raise ValueError(f"m must be 0, 1 or 2, got {m}")
    if m == 0:
        return f
    ws = _ws(f.grid)
    mult = np.where(
        ws.k2 > 0, (4.0 * np.pi**2 * np.where(ws.k2 > 0, ws.k2, 1.0)) ** (-float(m)), 0.0
    )

    def apply(values: np.ndarray) -> np.ndarray:
        _check_mean(values, "inverse_laplacian_pow input")
        hat = _fft.fftn(values) * mult
        hat.flat[0] = 0.0
        return _fft.ifftn(hat).real

    if isinstance(f, ScalarField):
        return ScalarField(f.grid, apply(f.values))
    comps = tuple(apply(c) for c in f.components)
    return VectorField(f.grid, comps, f.is_solenoidal)


def laplacian_pow(f: Field, m: int) -> Field:
    """Apply (-Laplacian)^m (forward operator, multiplier (4*pi^2*|k|^2)^m)."""
    if m < 0:
        raise ValueError("m must be >= 0")
    if m == 0:
        return f
    ws = _ws(f.grid)
    mult = (4.0 * np.pi**2 * ws.k2) ** m

    def apply(values: np.ndarray) -> np.ndarray:
        return _fft.ifftn(_fft.fftn(values) * mult).real

    if isinstance(f, ScalarField):
        return ScalarField(f.grid, apply(f.values))
    comps = tuple(apply(c) for c in f.components)
    return VectorField(f.grid, comps, f.is_solenoidal)


def dealias(f, grid: PeriodicGrid | None = None):
    """Zero all Fourier modes with any |k_i| > n/3 (2/3 rule).

    Accepts ScalarField, VectorField, or a raw array (with grid given or
    inferable from the shape); the k=0 mode is kept, so plain products such
    as sin^2 keep their mean.
    """
    if isinstance(f, ScalarField):
        return ScalarField(f.grid, dealias_values(f.values, _ws(f.grid)))
    if isinstance(f, VectorField):
        ws = _ws(f.grid)
        comps = tuple(dealias_values(c, ws) for c in f.components)
        return VectorField(f.grid, comps, f.is_solenoidal)
    values = np.asarray(f, dtype=np.float64)
    if grid is None:
        grid = PeriodicGrid(values.ndim, values.shape[0])
    if values.shape != grid.shape:
        raise ValueError(f"array shape {values.shape} does not match grid {grid.shape}")
    return dealias_values(values, _ws(grid))


def restrict_to(f: Field, coarse: PeriodicGrid) -> Field:
    """Spectral restriction onto a coarser grid.

    Keeps the modes inside the coarse 2/3 dealias band (|k_i| <= n_c//3) and
    drops everything else, so restricted fields satisfy the same band limit
    as fields evolved on the coarse grid. Gradients stay gradients and
    solenoidal fields stay solenoidal.
    """
    fine = f.grid
    if coarse.d != fine.d:
        raise ValueError("restriction requires equal dimensions")
    if coarse.n > fine.n:
        raise ValueError("target grid must not be finer than the source")
    cut = coarse.n // 3
    kept = np.arange(-cut, cut + 1)
    idx_f = np.ix_(*([kept % fine.n] * fine.d))
    idx_c = np.ix_(*([kept % coarse.n] * fine.d))
    scale = coarse.size / fine.size

    def apply(values: np.ndarray) -> np.ndarray:
        hat_f = _fft.fftn(values)
        hat_c = np.zeros(coarse.shape, dtype=complex)
        hat_c[idx_c] = hat_f[idx_f] * scale
        return _fft.ifftn(hat_c).real

    if isinstance(f, ScalarField):
        vals = apply(f.values)
        return ScalarField(coarse, vals - vals.mean())
    comps = tuple(apply(c) for c in f.components)
    return VectorField(coarse, comps, f.is_solenoidal)
