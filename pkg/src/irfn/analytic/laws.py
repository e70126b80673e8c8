"""Large-N laws of degrees and interbank debt.

``orientation="out"`` refers to sums over a bank's out-edges (its interbank
debt X, the quantity that enters the loss fraction).  ``orientation="in"``
sums over in-edges (interbank assets Z, whose rates use kappa(T', T)).  For symmetric kernels and exposure tables the two
coincide.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from ..distributions import DistributionFamily
from ..model import ModelSpec


class MassDeficitError(RuntimeError):
    pass


def _pair_rates(spec: ModelSpec, t: int, orientation: str):
    """[(rate, exposure law)] for the jumps of a type-t bank's debt (out) or assets (in)."""
    if orientation == "out":
        rates = spec.out_rates()[t]
        return [(rates[s], spec.exposure[t][s]) for s in range(spec.num_types)]
    if orientation == "in":
        rates = spec.in_rates()[t]
        return [(rates[s], spec.exposure[s][t]) for s in range(spec.num_types)]
    raise ValueError(f"orientation must be 'in' or 'out', got {orientation!r}")


def degree_cf_limit(spec: ModelSpec, t: int, k1: ArrayLike, k2: ArrayLike) -> NDArray[np.complex128]:
    """Limiting joint CF of (in-degree, out-degree) of a type-t bank on the tensor grid k1 x k2."""
    lam_in = spec.in_rates()[t].sum()
    lam_out = spec.out_rates()[t].sum()
    a = lam_in * (np.exp(1j * np.asarray(k1, dtype=float)) - 1.0)
    b = lam_out * (np.exp(1j * np.asarray(k2, dtype=float)) - 1.0)
    return np.exp(a[:, None] + b[None, :])


def degree_pmf_from_cf(spec: ModelSpec, t: int, size: int = 64) -> NDArray[np.float64]:
    """Joint (in, out) degree PMF on {0..size-1}^2 recovered by inverse DFT of ``degree_cf_limit``."""
    k = 2 * np.pi * np.arange(size) / size
    cf = degree_cf_limit(spec, t, k, k)
    # E[e^{i k d}] sampled at k = 2 pi j / n is n * ifft of the PMF; invert with fft
    return np.real(np.fft.fft2(cf)) / size**2


def debt_log_cf_limit(spec: ModelSpec, t: int, k: ArrayLike, orientation: str = "out") -> NDArray[np.complex128]:
    k = np.asarray(k, dtype=float)
    out = np.zeros(k.shape, dtype=complex)
    for rate, law in _pair_rates(spec, t, orientation):
        if rate > 0:
            out += rate * (law.cf(k) - 1.0)
    return out


def interbank_debt_cf(spec: ModelSpec, t: int, k: ArrayLike, orientation: str = "out") -> NDArray[np.complex128]:
    """Compound-Poisson CF exp[sum_T2 rate(T2) (f_Omega(k) - 1)] of a type-t bank's debt or assets."""
    return np.exp(debt_log_cf_limit(spec, t, k, orientation))


def debt_log_cf_finite(spec: ModelSpec, t: int, k: ArrayLike, n: int, orientation: str = "out") -> NDArray[np.complex128]:
    """Exact finite-N log-CF (N-1) log(1 + g(k) / (N-1)) with g the limiting log-CF."""
    g = debt_log_cf_limit(spec, t, k, orientation)
    return (n - 1) * np.log1p(g / (n - 1))


def _lattice_masses(law: DistributionFamily, h: float, size: int) -> NDArray[np.float64]:
    """Round a positive law onto the lattice {0, h, 2h, ...}: mass of [(j - 1/2) h, (j + 1/2) h)."""
    edges = (np.arange(size + 1) - 0.5) * h
    edges[0] = 0.0
    cdf = law.cdf(edges)
    cdf[0] = 0.0
    return np.diff(cdf)


@dataclass(frozen=True, eq=False)
class DebtLaw:
    """Law of a bank's interbank debt: an atom at 0 plus a density on [0, inf).

    ``pmf`` is the whole law rounded onto the lattice ``x = j * h``; the
    continuous part is ``pmf`` with the atom removed from cell 0.
    """

    atom: float
    h: float
    pmf: NDArray[np.float64]

    @property
    def x(self) -> NDArray[np.float64]:
        return self.h * np.arange(len(self.pmf))

    @property
    def continuous_mass(self) -> NDArray[np.float64]:
        c = self.pmf.copy()
        c[0] = max(0.0, c[0] - self.atom)
        return c

    @property
    def density(self) -> NDArray[np.float64]:
        """Continuous density at the lattice points (cell 0 is a half cell)."""
        c = self.continuous_mass / self.h
        c[0] *= 2.0
        return c

    @property
    def total_mass(self) -> float:
        return float(self.atom + self.continuous_mass.sum())

    def density_at(self, x: ArrayLike) -> NDArray[np.float64]:
        x = np.asarray(x, dtype=float)
        return np.interp(x, self.x, self.density, left=0.0, right=0.0)

    def continuous_cdf_at(self, x: ArrayLike) -> NDArray[np.float64]:
        """P(0 < X <= x) with the lattice cells treated as uniform mass."""
        x = np.asarray(x, dtype=float)
        cum = np.concatenate([[0.0], np.cumsum(self.continuous_mass)])
        knots = np.concatenate([[0.0], (np.arange(len(self.pmf)) + 0.5) * self.h])
        return np.interp(x, knots, cum, left=0.0, right=cum[-1])

    def cdf_at(self, x: ArrayLike) -> NDArray[np.float64]:
        """P(X <= x), including the atom at 0."""
        x = np.asarray(x, dtype=float)
        return np.where(x >= 0, self.atom + self.continuous_cdf_at(x), 0.0)

    def mean(self) -> float:
        return float(np.dot(self.x, self.pmf))


def _default_x_max(pairs) -> float:
    lam = sum(r for r, _ in pairs)
    if lam == 0:
        return 1.0
    m1 = sum(r * law.mean() for r, law in pairs)
    m2 = sum(r * (law.var() + law.mean() ** 2) for r, law in pairs)
    tail = max(float(law.ppf(1 - 1e-12)) for r, law in pairs if r > 0)
    return max(m1 + 15.0 * np.sqrt(m2), tail) + 1.0


def debt_law(
    spec: ModelSpec,
    t: int,
    h: float = 0.005,
    x_max: float | None = None,
    orientation: str = "out",
    check: bool = True,
) -> DebtLaw:
    """Compound-Poisson debt law of a type-t bank.

    The atom exp(-Lambda) is exact.  The continuous part comes from inverting
    the characteristic function on the lattice: jumps are rounded onto
    multiples of h, their DFT is exponentiated, and an inverse FFT returns
    lattice masses.  Zero padding to twice ``x_max`` keeps wrap-around below
    roundoff.
    """
    pairs = [(r, law) for r, law in _pair_rates(spec, t, orientation) if r > 0]
    lam = float(sum(r for r, _ in pairs))
    atom = float(np.exp(-lam))
    if not pairs:
        return DebtLaw(1.0, h, np.array([1.0]))
    x_max = _default_x_max(pairs) if x_max is None else x_max
    size = int(np.ceil(x_max / h)) + 1
    nfft = 1 << int(np.ceil(np.log2(2 * size)))
    jump_dft = np.zeros(nfft // 2 + 1, dtype=complex)
    for r, law in pairs:
        masses = np.zeros(nfft)
        masses[:size] = _lattice_masses(law, h, size)
        jump_dft += r * np.fft.rfft(masses)
    pmf = np.fft.irfft(np.exp(jump_dft - lam), nfft)[:size]
    pmf = np.clip(pmf, 0.0, None)
    pmf[0] = max(pmf[0], atom)
    total = pmf.sum()
    if check and abs(total - 1.0) > 1e-3:
        raise MassDeficitError(f"mass_deficit: lattice law holds {total:.6f} (grid too coarse or too short)")
    pmf /= total
    return DebtLaw(atom, h, pmf)
