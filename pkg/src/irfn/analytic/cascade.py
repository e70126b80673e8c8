"""The analytic cascade map on characteristic-function grids and its fixed points."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.typing import NDArray

from ..model import ModelSpec
from .grid import CfGrid, Grid, auto_grid, default_probability, initial_cf
from .kernel import KernelOptions, ShockKernel, build_shock_kernel


class DivergentExponent(ArithmeticError):
    pass


class NoConvergence(RuntimeError):
    def __init__(self, message: str, result: EquilibriumResult):
        super().__init__(message)
        self.result = result


@dataclass
class OpCounter:
    """Real floating-point operations, counted from array shapes.

    A complex multiply-add is 8 real flops, a complex product 6, a complex
    exponential is charged 20.
    """

    flops: int = 0

    def matvec(self, rows: int, cols: int) -> None:
        self.flops += 8 * rows * cols

    def elementwise(self, n: int, cost: int) -> None:
        self.flops += cost * n


def cascade_map_step(
    kernel: ShockKernel, f0: CfGrid, fn: CfGrid, counter: OpCounter | None = None
) -> tuple[CfGrid, CfGrid]:
    """One application of the cascade map.

    Returns (f_S, f_next): the CF of the shock received by a type-T bank and
    the CF of its next buffer, f_next(k) = f0(k) f_S(-k).
    """
    grid = kernel.grid
    if f0.grid != grid or fn.grid != grid:
        raise ValueError("kernel and CF grids differ")
    n, m = grid.size, kernel.num_types
    vec = fn.reflected().T.reshape(-1)
    expo = grid.delta * (kernel.matrix @ vec).reshape(m, n).T + kernel.offset
    expo = 0.5 * (expo + np.conj(expo[::-1]))
    worst = float(expo.real.max(initial=0.0))
    if worst > 1e-6:
        raise DivergentExponent(f"divergent_exponent: Re exponent reaches {worst:.3e}")
    f_s = np.exp(expo)
    f_next = f0.values * f_s[::-1]
    if counter is not None:
        counter.matvec(n * m, n * m)
        counter.elementwise(n * m, 2 + 2 + 20 + 6)  # scale, offset, exp, product
    return CfGrid(grid, f_s), CfGrid(grid, f_next)


@dataclass
class EquilibriumResult:
    f_star: CfGrid
    residual: float
    iterations: int
    converged: bool
    damped_from: int | None = None
    changes: list[float] = field(default_factory=list)


def solve_equilibrium(
    kernel: ShockKernel, f0: CfGrid, tol: float = 1e-10, max_iter: int = 1000
) -> EquilibriumResult:
    """Iterate the cascade map from f0 until the sup-norm change drops below ``tol``.

    Plain substitution is used until two successive increments point in
    opposite directions; from then on the update is damped by 1/2.
    Raises NoConvergence (carrying the last iterate) otherwise.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    fn = f0.values
    prev_step = None
    damping, damped_from = 1.0, None
    changes: list[float] = []
    for it in range(1, max_iter + 1):
        _, nxt = cascade_map_step(kernel, f0, CfGrid(f0.grid, fn))
        step = nxt.values - fn
        change = float(np.max(np.abs(step)))
        changes.append(change)
        if change < tol:
            fn = nxt.values
            _, again = cascade_map_step(kernel, f0, nxt)
            residual = float(np.max(np.abs(again.values - fn)))
            return EquilibriumResult(CfGrid(f0.grid, fn), residual, it, True, damped_from, changes)
        if damped_from is None and prev_step is not None and np.vdot(prev_step, step).real < 0:
            damping, damped_from = 0.5, it
        fn = fn + damping * step
        prev_step = step
    _, again = cascade_map_step(kernel, f0, CfGrid(f0.grid, fn))
    residual = float(np.max(np.abs(again.values - fn)))
    result = EquilibriumResult(CfGrid(f0.grid, fn), residual, max_iter, False, damped_from, changes)
    tail = ", ".join(f"{c:.2e}" for c in changes[-5:])
    raise NoConvergence(f"no_convergence after {max_iter} iterations; last changes {tail}", result)


def default_probabilities(f: CfGrid) -> NDArray[np.float64]:
    """P(Delta < 0 | T) for every type."""
    return f.default_probabilities()


def blended_default_probability(spec: ModelSpec, f: CfGrid) -> float:
    return float(np.dot(spec.type_probs, default_probabilities(f)))


@dataclass
class AnalyticReport:
    """Per-step and equilibrium default probabilities from the analytic cascade."""

    grid: Grid
    step_probs: list[NDArray[np.float64]]
    equilibrium: EquilibriumResult
    type_probs: NDArray[np.float64]
    first_shock: CfGrid

    @property
    def equilibrium_probs(self) -> NDArray[np.float64]:
        return default_probabilities(self.equilibrium.f_star)

    def blended(self, probs: NDArray[np.float64]) -> float:
        return float(np.dot(self.type_probs, probs))

    def to_csv(self, path: str | Path) -> None:
        steps = len(self.step_probs)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(
                ["type"]
                + [f"default_probability_step_{n}" for n in range(steps)]
                + ["default_probability_equilibrium", "residual", "iterations"]
            )
            eq = self.equilibrium_probs
            rows = [(str(t + 1), [p[t] for p in self.step_probs], eq[t]) for t in range(len(eq))]
            rows.append(("all", [self.blended(p) for p in self.step_probs], self.blended(eq)))
            for label, per_step, final in rows:
                w.writerow(
                    [label]
                    + [repr(float(x)) for x in per_step]
                    + [repr(float(final)), repr(self.equilibrium.residual), self.equilibrium.iterations]
                )


def run_analytic(
    spec: ModelSpec,
    grid: Grid | None = None,
    kernel: ShockKernel | None = None,
    steps: int = 5,
    tol: float = 1e-10,
    max_iter: int = 1000,
    opts: KernelOptions = KernelOptions(),
) -> AnalyticReport:
    """Build (or reuse) the kernel, record ``steps`` map iterations and solve for the equilibrium.

    ``step_probs[n]`` is the default probability after n applications of the
    map, so entry 0 is the initial insolvency probability.
    """
    if kernel is None:
        grid = auto_grid(spec) if grid is None else grid
        kernel = build_shock_kernel(spec, grid, opts=opts)
    grid = kernel.grid
    f0 = initial_cf(spec, grid)
    fn = f0
    probs = [default_probabilities(f0)]
    first_shock = None
    for _ in range(steps):
        f_s, fn = cascade_map_step(kernel, f0, fn)
        first_shock = f_s if first_shock is None else first_shock
        probs.append(default_probabilities(fn))
    if first_shock is None:
        first_shock, _ = cascade_map_step(kernel, f0, f0)
    eq = solve_equilibrium(kernel, f0, tol, max_iter)
    return AnalyticReport(grid, probs, eq, spec.type_probs.copy(), first_shock)


__all__ = [
    "AnalyticReport",
    "DivergentExponent",
    "EquilibriumResult",
    "NoConvergence",
    "OpCounter",
    "blended_default_probability",
    "cascade_map_step",
    "default_probabilities",
    "default_probability",
    "run_analytic",
    "solve_equilibrium",
]
