"""Seeded Monte Carlo trials of the finite-N cascade.

Seeds are hierarchical: trial i at size N uses SeedSequence(seed, spawn_key=(N, i)),
so adding trials or sizes never changes the streams of existing ones.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
from numpy.typing import NDArray

from .model import ModelSpec
from .network import Trigger, apply_trigger, cascade_step, run_cascade, sample_network


def trial_seed(seed: int, n: int, trial: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(seed, spawn_key=(n, trial))


@dataclass(frozen=True)
class TrialResult:
    """Default fractions after each recorded step (row 0 is the initial state), overall and per type."""

    overall: NDArray[np.float64]  # (steps + 1,)
    by_type: NDArray[np.float64]  # (steps + 1, M)
    equilibrium: float
    equilibrium_by_type: NDArray[np.float64]
    cascade_steps: int


def run_trial(
    spec: ModelSpec, n: int, seed: int, trial: int, steps: int = 5, lam: float | None = None, trigger: Trigger | None = None
) -> TrialResult:
    lam = spec.recovery_lambda if lam is None else lam
    net = sample_network(spec, n, trial_seed(seed, n, trial))
    if trigger is not None:
        if trigger.kind == "iid":
            # each trial draws its own shocks from a sub-stream of its seed
            stream = np.random.SeedSequence(seed, spawn_key=(n, trial, 1)).generate_state(1)[0]
            trigger = replace(trigger, seed=int(stream))
        net = apply_trigger(net, trigger)
    trace = run_cascade(net, lam)
    frac = list(trace.default_fraction)
    by_type = list(trace.default_fraction_by_type)
    # the cascade is frozen once converged, so pad with the final state
    frac += [frac[-1]] * (steps + 1 - len(frac))
    by_type += [by_type[-1]] * (steps + 1 - len(by_type))
    return TrialResult(
        np.array(frac[: steps + 1]),
        np.array(by_type[: steps + 1]),
        frac[-1],
        np.asarray(trace.default_fraction_by_type[-1]),
        trace.steps,
    )


def _trial_job(args):
    return run_trial(*args)


@dataclass(frozen=True)
class MCSummary:
    n: int
    trials: int
    step_mean: NDArray[np.float64]  # (steps + 1,)
    step_stderr: NDArray[np.float64]
    step_mean_by_type: NDArray[np.float64]  # (steps + 1, M)
    equilibrium_mean: float
    equilibrium_stderr: float
    equilibrium_by_type: NDArray[np.float64]
    results: tuple[TrialResult, ...]


def _stderr(x: NDArray[np.float64], axis: int = 0) -> NDArray[np.float64]:
    n = x.shape[axis]
    return np.std(x, axis=axis, ddof=1) / np.sqrt(n) if n > 1 else np.zeros(np.delete(x.shape, axis))


def monte_carlo(
    spec: ModelSpec,
    n: int,
    trials: int,
    seed: int,
    steps: int = 5,
    workers: int = 1,
    lam: float | None = None,
    trigger: Trigger | None = None,
) -> MCSummary:
    """Run ``trials`` independent cascades; results are identical for any worker count."""
    if trials < 1:
        raise ValueError("trials must be at least 1")
    jobs = [(spec, n, seed, i, steps, lam, trigger) for i in range(trials)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_trial_job, jobs))
    else:
        results = [_trial_job(j) for j in jobs]
    overall = np.array([r.overall for r in results])
    by_type = np.array([r.by_type for r in results])
    eq = np.array([r.equilibrium for r in results])
    eq_t = np.array([r.equilibrium_by_type for r in results])
    return MCSummary(
        n,
        trials,
        overall.mean(axis=0),
        _stderr(overall),
        np.nanmean(by_type, axis=0),
        float(eq.mean()),
        float(_stderr(eq)),
        np.nanmean(eq_t, axis=0),
        tuple(results),
    )


def first_shock_samples(spec: ModelSpec, n: int, total: int, seed: int, lam: float | None = None) -> NDArray[np.float64]:
    """Pool S^(0)_v over all banks of as many independent networks as needed to reach ``total`` samples."""
    lam = spec.recovery_lambda if lam is None else lam
    out, got, trial = [], 0, 0
    while got < total:
        net = sample_network(spec, n, trial_seed(seed, n, trial))
        _, _, s = cascade_step(net, net.delta0, lam)
        out.append(s)
        got += n
        trial += 1
    return np.concatenate(out)[:total]
