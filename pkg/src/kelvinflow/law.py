"""Energy functionals and the empirical law of a field.

The transport flow is supposed to rearrange a field without changing the
multiset of its values; these diagnostics quantify the energy it dissipates
and how far the law actually drifts on the grid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .spectral import ScalarField, VectorField, _ws, fftn


@dataclass(frozen=True)
class EmpiricalLaw:
    """Sorted multiset of all grid values of a zero-mean field."""

    sorted_values: np.ndarray

    def __post_init__(self):
        v = np.array(self.sorted_values, dtype=np.float64, copy=True)
        if v.ndim != 1:
            raise ValueError("EmpiricalLaw holds a flat array of samples")
        if np.any(np.diff(v) < 0):
            raise ValueError("EmpiricalLaw values must be sorted")
        v.setflags(write=False)
        object.__setattr__(self, "sorted_values", v)

    def __len__(self) -> int:
        return self.sorted_values.size


def dirichlet_energy(phi: ScalarField) -> float:
    """E[phi] = 1/2 * integral |grad phi|^2, evaluated spectrally (Parseval).

    Uses the same Nyquist-zeroed derivative multipliers as gradient(), so it
    is exactly the kinetic energy of the resolved gradient field.
    """
    ws = _ws(phi.grid)
    hat = fftn(phi.values)
    acc = 0.0
    for ik in ws.ik:
        acc += float(np.sum(np.abs(ik * hat) ** 2))
    return 0.5 * acc / phi.grid.size**2


def kinetic_K(v: VectorField, m: int) -> float:
    """K[v] = 1/2 * integral |grad^m v|^2 via the multiplier (4 pi^2 |k|^2)^m."""
    if m < 0:
        raise ValueError("m must be >= 0")
    ws = _ws(v.grid)
    mult = (4.0 * np.pi**2 * ws.k2) ** m
    acc = 0.0
    for c in v.components:
        acc += float(np.sum(mult * np.abs(fftn(c)) ** 2))
    return 0.5 * acc / v.grid.size**2


def empirical_law(phi: ScalarField) -> EmpiricalLaw:
    """Sorted copy of all grid values of phi."""
    return EmpiricalLaw(np.sort(phi.values, axis=None))


def law_distance(a: EmpiricalLaw, b: EmpiricalLaw) -> float:
    """W1 distance between equal-size empirical laws.

    For two equal-weight atomic measures this is exactly the mean absolute
    difference of the sorted samples.
    """
    if len(a) != len(b):
        raise ValueError(f"law size mismatch: {len(a)} vs {len(b)}")
    return float(np.mean(np.abs(a.sorted_values - b.sorted_values)))
