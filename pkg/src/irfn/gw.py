"""Multi-type Poisson Galton-Watson process approximating skeleton neighbourhoods."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .model import ModelSpec

CRITICAL_TOL = 1e-9


class MaxIterExceeded(RuntimeError):
    def __init__(self, message: str, last: NDArray[np.float64]):
        super().__init__(message)
        self.last = last


class PopulationExplosion(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class OffspringLaw:
    """Poisson offspring means: ``means[T, T2]`` is the mean number of type-T2 children of a type-T node."""

    means: NDArray[np.float64]

    def __post_init__(self) -> None:
        m = np.atleast_2d(np.asarray(self.means, dtype=float))
        if m.shape[0] != m.shape[1] or np.any(m < 0) or not np.all(np.isfinite(m)):
            raise ValueError("offspring means must form a square non-negative matrix")
        object.__setattr__(self, "means", m)

    @property
    def num_types(self) -> int:
        return self.means.shape[0]

    @classmethod
    def from_spec(cls, spec: ModelSpec, orientation: str = "out") -> OffspringLaw:
        """``out`` follows edges v -> w (means P(T2) kappa(T, T2)); ``in`` follows them backwards."""
        if orientation == "out":
            return cls(spec.out_rates())
        if orientation == "in":
            return cls(spec.in_rates())
        raise ValueError(f"orientation must be 'in' or 'out', got {orientation!r}")

    @classmethod
    def single(cls, mean: float) -> OffspringLaw:
        return cls(np.array([[float(mean)]]))


def _check_cube(a: ArrayLike, m: int) -> NDArray[np.float64]:
    a = np.asarray(a, dtype=float).reshape(-1)
    if a.shape != (m,):
        raise ValueError(f"argument must have {m} components")
    if np.any(a < 0) or np.any(a > 1) or not np.all(np.isfinite(a)):
        raise ValueError("PGF argument must lie in the unit cube [0, 1]^M")
    return a


def _pgf(means: NDArray[np.float64], a: NDArray[np.float64]) -> NDArray[np.float64]:
    return np.exp(means @ (a - 1.0))


def offspring_pgf(law: OffspringLaw, a: ArrayLike) -> NDArray[np.float64]:
    """G_T(a) = exp[sum_T2 means[T, T2] (a_T2 - 1)]."""
    return _pgf(law.means, _check_cube(a, law.num_types))


def path_count_pgf(law: OffspringLaw, n: int, a: ArrayLike) -> NDArray[np.float64]:
    """H_n = G composed n times, i.e. the PGF of generation n."""
    if n < 1:
        raise ValueError("n must be at least 1")
    x = _check_cube(a, law.num_types)
    for _ in range(n):
        x = _pgf(law.means, x)
    return x


def _perron_irreducible(block: NDArray[np.float64], tol: float, max_iter: int) -> float:
    m = block.shape[0]
    if m == 1:
        return float(block[0, 0])
    # (I + B)^(m-1) is strictly positive for irreducible B, so the iteration converges geometrically;
    # the Collatz-Wielandt bounds bracket the root at every step
    shifted = np.linalg.matrix_power(block + np.eye(m), m - 1)
    v = np.ones(m) / m
    lo = hi = 1.0
    for _ in range(max_iter):
        w = shifted @ v
        ratio = w / v
        lo, hi = float(ratio.min()), float(ratio.max())
        v = w / w.sum()
        if hi - lo <= tol * hi:
            break
    mu = 0.5 * (lo + hi)
    # undo the shift and the power: mu = (1 + rho)^(m-1)
    return mu ** (1.0 / (m - 1)) - 1.0


def spectral_radius_power(means: NDArray[np.float64], tol: float = 1e-15, max_iter: int = 200_000) -> float:
    """Perron root by power iteration, run separately on each strongly connected block."""
    from scipy.sparse.csgraph import connected_components

    means = np.asarray(means, dtype=float)
    _, labels = connected_components(means > 0, directed=True, connection="strong")
    return max(_perron_irreducible(means[np.ix_(labels == c, labels == c)], tol, max_iter) for c in np.unique(labels))


def spectral_radius_eig(means: NDArray[np.float64]) -> float:
    return float(np.max(np.abs(np.linalg.eigvals(means))))


@dataclass(frozen=True)
class ExtinctionResult:
    xi: NDArray[np.float64]
    iterations: int
    residual: float
    critical_eigenvalue: float
    critical: bool = False


def extinction_probability(law: OffspringLaw, tol: float = 1e-12, max_iter: int = 1_000_000) -> ExtinctionResult:
    """Least fixed point of G, by iterating xi_n = G(xi_{n-1}) from 0.

    At the critical point (spectral radius 1 within 1e-9) convergence is only
    algebraic; the classical answer xi = 1 is returned with ``critical`` set.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    rho = spectral_radius_eig(law.means)
    m = law.num_types
    if abs(rho - 1.0) < CRITICAL_TOL:
        return ExtinctionResult(np.ones(m), 0, 0.0, rho, critical=True)
    # iterate the survival probability y = 1 - xi; 1 - G(1 - y) = -expm1(-means @ y) keeps full
    # relative precision near y = 0, so a subcritical law lands on xi = 1 exactly
    y = np.ones(m)
    for it in range(1, max_iter + 1):
        nxt = -np.expm1(-(law.means @ y))
        change = float(np.max(np.abs(nxt - y)))
        y = nxt
        if change < tol:
            break
    else:
        raise MaxIterExceeded(f"max_iter_exceeded: change still {change:.3e} after {max_iter} iterations", 1.0 - y)
    for _ in range(200_000):
        nxt = -np.expm1(-(law.means @ y))
        if np.array_equal(nxt, y):
            break
        y = nxt
    x = 1.0 - y
    residual = float(np.max(np.abs(x - _pgf(law.means, x))))
    return ExtinctionResult(x, it, residual, rho)


@dataclass(frozen=True)
class GWTree:
    """``counts[n, T2]`` is the number of type-T2 nodes in generation n (generation 0 is the root)."""

    counts: NDArray[np.int64]
    extinct: bool


def simulate_gw_tree(
    law: OffspringLaw, root_type: int, max_depth: int, seed: int | np.random.Generator, cap: int = 10_000_000
) -> GWTree:
    """One tree grown generation by generation; raises PopulationExplosion past ``cap`` nodes."""
    if max_depth < 1:
        raise ValueError("max_depth must be at least 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    m = law.num_types
    counts = np.zeros((max_depth + 1, m), dtype=np.int64)
    counts[0, root_type] = 1
    total = 1
    for n in range(1, max_depth + 1):
        # a sum of independent Poisson counts is Poisson with the summed mean
        counts[n] = rng.poisson(counts[n - 1] @ law.means)
        total += int(counts[n].sum())
        if total > cap:
            raise PopulationExplosion(f"population_explosion: more than {cap} nodes by generation {n}")
        if not counts[n].any():
            return GWTree(counts[: n + 1], True)
    return GWTree(counts, False)


@dataclass(frozen=True)
class GWBatch:
    extinct: NDArray[np.bool_]
    generation_counts: NDArray[np.int64]  # (trees, max_depth + 1, M), frozen once a tree passes the cap
    capped: NDArray[np.bool_]

    @property
    def extinct_fraction(self) -> float:
        return float(self.extinct.mean())


def simulate_gw_batch(
    law: OffspringLaw,
    root_type: int,
    n_trees: int,
    max_depth: int,
    seed: int | np.random.SeedSequence,
    cap: int = 1_000_000,
) -> GWBatch:
    """Many independent trees at once.

    A tree whose current generation exceeds ``cap`` is stopped and counted as
    surviving; it would still die out with probability at most xi**cap.
    """
    if max_depth < 1:
        raise ValueError("max_depth must be at least 1")
    rng = np.random.default_rng(seed)
    m = law.num_types
    counts = np.zeros((n_trees, max_depth + 1, m), dtype=np.int64)
    counts[:, 0, root_type] = 1
    live = np.ones(n_trees, dtype=bool)
    capped = np.zeros(n_trees, dtype=bool)
    for n in range(1, max_depth + 1):
        idx = np.flatnonzero(live)
        if idx.size == 0:
            break
        counts[idx, n] = rng.poisson(counts[idx, n - 1] @ law.means)
        size = counts[idx, n].sum(axis=1)
        big = size > cap
        capped[idx[big]] = True
        live[idx[big | (size == 0)]] = False
    extinct = counts[:, max_depth].sum(axis=1) == 0
    extinct &= ~capped
    return GWBatch(extinct, counts, capped)


def extinction_sweep(means: ArrayLike, tol: float = 1e-12) -> list[tuple[float, float, float, bool]]:
    """Single-type sweep: rows (mean, xi, spectral radius, critical flag)."""
    out = []
    for mu in np.asarray(means, dtype=float):
        r = extinction_probability(OffspringLaw.single(mu), tol=tol)
        out.append((float(mu), float(r.xi[0]), r.critical_eigenvalue, r.critical))
    return out
