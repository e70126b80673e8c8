from __future__ import annotations

import numpy as np
import pytest

from irfn import BalanceLaw, DistributionFamily, ModelSpec
from irfn.analytic import auto_grid, build_shock_kernel

D = DistributionFamily


def benchmark_spec(lam: float = 0.5) -> ModelSpec:
    """M=1, kappa=2, Exp(1) exposures, Delta ~ Normal(2, 1)."""
    bal = BalanceLaw(D.exponential(1.0), D.normal(0.0, 1.0), D.normal(2.0, 1.0))
    return ModelSpec.homogeneous([1.0], [[2.0]], D.exponential(1.0), bal, lam, "benchmark")


def two_type_spec(lam: float = 0.5) -> ModelSpec:
    bal1 = BalanceLaw(D.exponential(1.0), D.normal(0.0, 1.0), D.normal(2.0, 1.0))
    bal2 = BalanceLaw(D.exponential(1.0), D.normal(0.0, 1.0), D.normal(1.5, 1.0))
    exposure = ((D.exponential(1.0), D.gamma(2.0, 0.5)), (D.exponential(1.0), D.exponential(1.0)))
    return ModelSpec([0.5, 0.5], [[2.0, 1.0], [1.0, 2.0]], exposure, (bal1, bal2), lam, "two-type")


@pytest.fixture(scope="session")
def bench() -> ModelSpec:
    return benchmark_spec()


@pytest.fixture(scope="session")
def bench_kernel(bench):
    return build_shock_kernel(bench, auto_grid(bench))


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)
