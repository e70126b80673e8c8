"""Symmetric half-integer Fourier lattices and characteristic functions sampled on them."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from numpy.typing import NDArray

from ..distributions import DistributionFamily
from ..model import ModelSpec


class ClampWarning(UserWarning):
    """A Gil-Pelaez estimate left [0, 1] by more than the reporting slack."""


@dataclass(frozen=True)
class Grid:
    """The lattice delta * {-L + 1/2, ..., L - 1/2}: 2L points, symmetric, no point at 0."""

    delta: float
    L: int

    def __post_init__(self) -> None:
        if not self.delta > 0:
            raise ValueError("grid spacing must be positive")
        if self.L < 1:
            raise ValueError("L must be at least 1")

    @cached_property
    def points(self) -> NDArray[np.float64]:
        return self.delta * (np.arange(-self.L, self.L) + 0.5)

    @property
    def size(self) -> int:
        return 2 * self.L

    @property
    def kmax(self) -> float:
        return self.delta * (self.L - 0.5)

    @property
    def positive(self) -> slice:
        return slice(self.L, 2 * self.L)


def standard_grid() -> Grid:
    """Grid used for CF comparisons in validation: k in (-5, 5), spacing 0.05."""
    return Grid(0.05, 100)


def auto_grid(spec: ModelSpec, two_l: int = 1024, max_l: int = 4096) -> Grid:
    """Pick (delta, L) for a spec's buffer laws.

    delta keeps the whole plausible range of buffers (initial spread plus the
    largest likely incoming shock) inside the alias-free window; L is raised
    until the initial buffer CFs have decayed below 1e-12 at the grid edge.
    """
    lo, hi, sig = [], [], []
    for law in spec.balance:
        d = law.Delta if law.joint is None else DistributionFamily.empirical(law.joint[:, 2])
        lo.append(float(d.ppf(1e-9)))
        hi.append(float(d.ppf(1 - 1e-9)))
        sig.append(d.std())
    rates = spec.in_rates()
    shock = 0.0
    for t in range(spec.num_types):
        mean = var = 0.0
        for s in range(spec.num_types):
            law = spec.exposure[s][t]
            mean += rates[t, s] * law.mean()
            var += rates[t, s] * (law.var() + law.mean() ** 2)
        shock = max(shock, mean + 10.0 * np.sqrt(var))
    x_max = max(abs(min(lo)), abs(max(hi))) + shock
    delta = np.pi / (4.0 * x_max)
    L = two_l // 2
    probe = np.array([delta * (L - 0.5)])
    while L < max_l and max(abs(_delta_cf(law, probe)[0]) for law in spec.balance) > 1e-12:
        L *= 2
        probe = np.array([delta * (L - 0.5)])
    return Grid(float(delta), int(L))


def _delta_cf(law, k):
    if law.joint is not None:
        return DistributionFamily.empirical(law.joint[:, 2]).cf(k)
    return law.Delta.cf(k)


@dataclass(frozen=True, eq=False)
class CfGrid:
    """Per-type characteristic function values on a grid; ``values`` has shape (2L, M)."""

    grid: Grid
    values: NDArray[np.complex128]

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=complex)
        if v.ndim == 1:
            v = v[:, None]
        if v.shape[0] != self.grid.size:
            raise ValueError("values must have one row per grid point")
        object.__setattr__(self, "values", v)

    @property
    def num_types(self) -> int:
        return self.values.shape[1]

    def column(self, t: int) -> NDArray[np.complex128]:
        return self.values[:, t]

    def reflected(self) -> NDArray[np.complex128]:
        """Values at -k (the grid is symmetric, so this reverses the rows)."""
        return self.values[::-1]

    def symmetrized(self) -> CfGrid:
        return CfGrid(self.grid, 0.5 * (self.values + np.conj(self.reflected())))

    def invariant_errors(self, slack: float = 1e-6, origin_tol: float = 1e-3) -> list[str]:
        errs = []
        if np.max(np.abs(self.reflected() - np.conj(self.values))) > 1e-12:
            errs.append("conjugate_symmetry")
        if np.max(np.abs(self.values)) > 1 + slack:
            errs.append("modulus_exceeds_one")
        near0 = self.values[self.grid.L]  # k = delta / 2
        if np.max(np.abs(near0.real - 1.0)) > origin_tol:
            errs.append("origin_value")
        return errs

    def default_probabilities(self) -> NDArray[np.float64]:
        return np.array([default_probability(self.values[:, t], self.grid) for t in range(self.num_types)])

    @classmethod
    def from_laws(cls, grid: Grid, laws: list[DistributionFamily]) -> CfGrid:
        k = grid.points
        vals = np.column_stack([law.cf(k) for law in laws])
        return cls(grid, vals).symmetrized()


def initial_cf(spec: ModelSpec, grid: Grid) -> CfGrid:
    """CF of the post-trigger solvency buffer Delta^(0) for each type."""
    laws = [
        law.Delta if law.joint is None else DistributionFamily.empirical(law.joint[:, 2]) for law in spec.balance
    ]
    return CfGrid.from_laws(grid, laws)


def gil_pelaez_below(f: NDArray[np.complex128], grid: Grid, threshold: float = 0.0) -> float:
    """Raw (unclamped) P(X < threshold) from CF values by midpoint Gil-Pelaez inversion."""
    k = grid.points[grid.positive]
    vals = np.asarray(f)[grid.positive]
    return float(0.5 - grid.delta / np.pi * np.sum(np.imag(np.exp(-1j * k * threshold) * vals) / k))


def default_probability(f: NDArray[np.complex128], grid: Grid, slack: float = 0.01) -> float:
    """P(Delta < 0) for the law with CF ``f`` on ``grid``, clamped to [0, 1]."""
    raw = gil_pelaez_below(f, grid)
    if raw < -slack or raw > 1 + slack:
        warnings.warn(f"clamped: Gil-Pelaez estimate {raw:.4f} outside [0, 1]; grid too coarse", ClampWarning, stacklevel=2)
    return min(1.0, max(0.0, raw))
