"""First-step shock kernels.

For a creditor of type T and a debtor of type T' whose buffer sits at
y = -a * lambda, the shock the creditor receives is
G = min(Omega, a * Omega / (X + Omega)) with X the debtor's remaining
interbank debt.  ``kernel_R_ka`` evaluates R(k, a) = E[exp(i k G) - 1] with
the three-term decomposition (atom of X at zero, the X <= a - u region, and
the change-of-variables double integral).  The kernel matrix uses a second,
independent route through the survival function of G:

    R(k, a) = i k * int_0^a exp(i k s) P(G > s) ds

and then takes the half-line Fourier transform in y.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.typing import NDArray
from scipy import integrate

from ..model import ModelSpec
from .grid import Grid
from .laws import DebtLaw, debt_law

KERNEL_FORMAT_VERSION = 1

# f_n is paired with the kernel at -k' (see ShockKernel)
PAIRING = "reflected"


class QuadratureFailure(RuntimeError):
    pass


class TailNotResolved(RuntimeError):
    pass


# --------------------------------------------------------------------------- R(k, a), three terms


def _t_nodes(levels: int = 40, order: int = 12):
    """Composite Gauss-Legendre nodes on (0, 1] with dyadic panels refining towards 0."""
    x, w = np.polynomial.legendre.leggauss(order)
    nodes, weights = [], []
    for j in range(levels):
        lo, hi = 2.0 ** -(j + 1), 2.0**-j
        nodes.append(lo + (hi - lo) * (x + 1) / 2)
        weights.append(w * (hi - lo) / 2)
    return np.concatenate(nodes), np.concatenate(weights)


_T_NODES, _T_WEIGHTS = _t_nodes()


def _inner_density(law, debt: DebtLaw, a: float, u: float) -> float:
    """int_{a-u}^inf rho_Omega(u x / (a - u)) a x / (a - u)^2 rho_X(x) dx, via x = (a - u) / t."""
    t = _T_NODES
    vals = law.pdf(u / t) * debt.density_at((a - u) / t) * a / t**3
    return float(np.dot(vals, _T_WEIGHTS))


def _complex_quad(fun, lo: float, hi: float, points=None) -> complex:
    opts = dict(limit=400, epsabs=1e-11, epsrel=1e-9, points=points)
    with warnings.catch_warnings():
        # the error estimates are checked below
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        re, err_re = integrate.quad(lambda u: fun(u).real, lo, hi, **opts)
        im, err_im = integrate.quad(lambda u: fun(u).imag, lo, hi, **opts)
    if max(err_re, err_im) > 1e-6:
        raise QuadratureFailure(f"quadrature_failure: error estimate {max(err_re, err_im):.2e}")
    return complex(re, im)


def kernel_R_ka(spec: ModelSpec, t: int, t2: int, k: float, a: float, debt: DebtLaw | None = None) -> complex:
    """R(k, a) for creditor type ``t`` and debtor type ``t2``.

    ``debt`` is the law of the debtor's interbank debt excluding the edge to
    the creditor; in the large-N limit this is the plain out-debt law of a
    type-t2 bank, which is what is built when it is omitted.
    """
    if a <= 0 or k == 0:
        return 0j
    law = spec.exposure[t2][t]
    if debt is None:
        debt = debt_law(spec, t2, orientation="out")
    phase = lambda u: np.exp(1j * k * u) - 1.0  # noqa: E731
    atom_term = debt.atom * float(law.sf(a)) * (np.exp(1j * k * a) - 1.0)
    near = _complex_quad(lambda u: float(debt.cdf_at(a - u)) * float(law.pdf(u)) * phase(u), 0.0, a)
    far = _complex_quad(lambda u: _inner_density(law, debt, a, u) * phase(u), 0.0, a)
    return complex(atom_term + near + far)


# --------------------------------------------------------------------------- survival route


def shock_survival(spec: ModelSpec, t: int, t2: int, a: float, s: NDArray[np.float64], debt: DebtLaw) -> NDArray[np.float64]:
    """P(G > s) for buffer level a, using the lattice debt law."""
    law = spec.exposure[t2][t]
    s = np.asarray(s, dtype=float)
    b = a - s
    x = debt.x
    small = x[None, :] <= b[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        arg = np.where(small, s[:, None], s[:, None] * x[None, :] / b[:, None])
    arg = np.where(np.isfinite(arg), arg, np.inf)
    q = (law.sf(arg) * debt.pmf[None, :]).sum(axis=1)
    return np.where(s < a, q, 0.0)


def _filon_ab(theta: NDArray[np.float64]):
    """alpha = int_0^1 (1 - u) e^{i theta u} du and beta = int_0^1 u e^{i theta u} du."""
    theta = np.asarray(theta, dtype=float)
    alpha = np.empty(theta.shape, dtype=complex)
    beta = np.empty(theta.shape, dtype=complex)
    small = np.abs(theta) < 0.5
    ts = theta[small]
    a_s = np.zeros(ts.shape, dtype=complex)
    b_s = np.zeros(ts.shape, dtype=complex)
    term = np.ones(ts.shape, dtype=complex)
    for n in range(14):
        if n:
            term = term * (1j * ts) / n
        a_s += term / ((n + 1) * (n + 2))
        b_s += term / (n + 2)
    alpha[small], beta[small] = a_s, b_s
    tl = theta[~small]
    e = np.exp(1j * tl)
    full = (e - 1.0) / (1j * tl)
    beta[~small] = e / (1j * tl) + (e - 1.0) / tl**2
    alpha[~small] = full - beta[~small]
    return alpha, beta


@dataclass(frozen=True)
class KernelOptions:
    """Discretization of the a- (and s-) integrals used for the kernel matrix."""

    h: float = 0.04
    max_points: int = 1000
    tail_mass: float = 1e-9
    tail_tol: float = 1e-6
    a_cap: float = 400.0


def _plateau_length(spec: ModelSpec, t: int, t2: int, opts: KernelOptions) -> float:
    """Smallest b with P(X + Omega > b) below ``tail_mass``; the a-range is 1.25 b."""
    law = spec.exposure[t2][t]
    fine = debt_law(spec, t2, h=0.02, orientation="out")
    b = max(1.0, float(law.ppf(1 - opts.tail_mass)))
    while b <= opts.a_cap:
        tail = float(np.dot(fine.pmf, law.sf(b - fine.x)))
        if tail < opts.tail_mass:
            return 1.25 * b
        b *= 1.2
    raise TailNotResolved(f"tail_not_resolved: P(X + Omega > a) stays above {opts.tail_mass} up to a={opts.a_cap}")


def ra_table(
    spec: ModelSpec, t: int, t2: int, k: NDArray[np.float64], opts: KernelOptions = KernelOptions()
) -> tuple[NDArray[np.float64], NDArray[np.complex128]]:
    """R(k, a) on a uniform a-grid: returns (a_grid, table) with table shape (len(k), len(a_grid))."""
    A = _plateau_length(spec, t, t2, opts)
    h = max(opts.h, A / opts.max_points)
    n_a = int(np.ceil(A / h))
    debt = debt_law(spec, t2, h=h, orientation="out")
    keep = np.flatnonzero(np.cumsum(debt.pmf[::-1])[::-1] > 1e-16)
    debt = DebtLaw(debt.atom, h, debt.pmf[: keep[-1] + 1])
    grid_s = h * np.arange(n_a + 1)
    q_left = np.zeros((n_a + 1, n_a))
    q_right = np.zeros((n_a + 1, n_a))
    for m in range(1, n_a + 1):
        q = shock_survival(spec, t, t2, grid_s[m], grid_s[: m + 1], debt)
        q[m] = debt.pmf[0] * float(spec.exposure[t2][t].sf(grid_s[m]))  # left limit at s = a
        q_left[m, :m] = q[:m]
        q_right[m, :m] = q[1 : m + 1]
    k = np.asarray(k, dtype=float)
    alpha, beta = _filon_ab(k * h)
    ph = h * np.exp(1j * np.outer(k, grid_s[:-1]))
    table = 1j * k[:, None] * ((ph * alpha[:, None]) @ q_left.T + (ph * beta[:, None]) @ q_right.T)
    return grid_s, table


# --------------------------------------------------------------------------- Fourier kernel


@dataclass(frozen=True, eq=False)
class PairKernel:
    """R(k, k' | T, T') on grid x grid (like-signed exponential) plus the zero-frequency coefficient.

    ``matrix[i, j]`` approximates the regular part of
    (lambda / 2 pi) int_0^inf exp(-i k'_j lambda a) R(k_i, a) da; the constant
    tail R(k, inf) = f_Omega(k) - 1 contributes the principal-value term
    already folded into ``matrix`` and a point mass ``delta_coef`` * delta(k').
    """

    matrix: NDArray[np.complex128]
    delta_coef: NDArray[np.complex128]
    plateau: NDArray[np.complex128]


def kernel_R_fourier(
    spec: ModelSpec, t: int, t2: int, grid: Grid, lam: float, opts: KernelOptions = KernelOptions()
) -> PairKernel:
    kpos = grid.points[grid.positive]
    a_grid, table = ra_table(spec, t, t2, kpos, opts)
    h = a_grid[1] - a_grid[0]
    plateau = table[:, -1]
    probe = int(0.8 * (len(a_grid) - 1))
    drift = np.max(np.abs(table[:, probe:] - plateau[:, None]))
    if drift > opts.tail_tol:
        raise TailNotResolved(f"tail_not_resolved: R(k, a) still moves by {drift:.2e} beyond a={a_grid[probe]:.2f}")
    d = table - plateau[:, None]
    kp = grid.points
    alpha, beta = _filon_ab(-kp * lam * h)
    w = np.zeros((len(a_grid), len(kp)), dtype=complex)
    w[:-1] += h * np.exp(-1j * np.outer(a_grid[:-1], kp * lam)) * alpha[None, :]
    w[1:] += h * np.exp(-1j * np.outer(a_grid[:-1], kp * lam)) * beta[None, :]
    pos_rows = lam / (2 * np.pi) * (d @ w) + plateau[:, None] * (-1j / (2 * np.pi * kp[None, :]))
    # rows at -k are conjugates of rows at k with k' reflected
    neg_rows = np.conj(pos_rows[::-1, ::-1])
    matrix = np.vstack([neg_rows, pos_rows])
    plateau_full = np.concatenate([np.conj(plateau[::-1]), plateau])
    return PairKernel(matrix, plateau_full / 2.0, plateau_full)


@dataclass(frozen=True, eq=False)
class ShockKernel:
    """Assembled cascade kernel on one grid.

    ``matrix`` has rows (T, k) and columns (T', k') flattened type-major:
    index T * 2L + j.  Entries are P(T') kappa(T', T) R(k, k' | T, T').
    ``offset[j, T]`` collects the zero-frequency terms, which multiply
    f(0) = 1.  The cascade map pairs column k' with f at -k'.
    """

    grid: Grid
    lam: float
    matrix: NDArray[np.complex128]
    offset: NDArray[np.complex128]
    pairing: str = PAIRING
    meta: dict = field(default_factory=dict)

    @property
    def num_types(self) -> int:
        return self.offset.shape[1]

    def block(self, t: int, t2: int) -> NDArray[np.complex128]:
        n = self.grid.size
        return self.matrix[t * n : (t + 1) * n, t2 * n : (t2 + 1) * n]

    def save(self, path: str | Path) -> None:
        header = {
            "format": "irfn-shock-kernel",
            "version": KERNEL_FORMAT_VERSION,
            "delta": self.grid.delta,
            "L": self.grid.L,
            "M": self.num_types,
            "lambda": self.lam,
            "pairing": self.pairing,
            "meta": self.meta,
        }
        with open(path, "wb") as fh:
            np.savez(fh, header=np.array(json.dumps(header, sort_keys=True)), matrix=self.matrix, offset=self.offset)

    @classmethod
    def load(cls, path: str | Path) -> ShockKernel:
        with np.load(path, allow_pickle=False) as data:
            header = json.loads(str(data["header"]))
            if header.get("format") != "irfn-shock-kernel" or header.get("version") != KERNEL_FORMAT_VERSION:
                raise ValueError(f"unsupported kernel file header {header}")
            grid = Grid(header["delta"], header["L"])
            return cls(grid, header["lambda"], data["matrix"], data["offset"], header["pairing"], header.get("meta", {}))


def build_shock_kernel(
    spec: ModelSpec, grid: Grid, lam: float | None = None, opts: KernelOptions = KernelOptions()
) -> ShockKernel:
    """Assemble the (2L M) x (2L M) kernel; computed once and reused for every cascade step."""
    lam = spec.recovery_lambda if lam is None else lam
    m, n = spec.num_types, grid.size
    matrix = np.zeros((m * n, m * n), dtype=complex)
    offset = np.zeros((n, m), dtype=complex)
    for t in range(m):
        for t2 in range(m):
            weight = spec.type_probs[t2] * spec.kernel[t2, t]
            if weight == 0:
                continue
            try:
                pk = kernel_R_fourier(spec, t, t2, grid, lam, opts)
            except (TailNotResolved, QuadratureFailure) as exc:
                raise type(exc)(f"{exc} [creditor type {t + 1}, debtor type {t2 + 1}]") from exc
            matrix[t * n : (t + 1) * n, t2 * n : (t2 + 1) * n] = weight * pk.matrix
            offset[:, t] += weight * pk.delta_coef
    return ShockKernel(grid, lam, matrix, offset, meta={"spec": spec.name})
