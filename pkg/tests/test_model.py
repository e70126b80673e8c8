from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from conftest import benchmark_spec, two_type_spec
from irfn import BalanceLaw, DistributionFamily, ModelSpec, SpecError, load_spec, loss_fraction, save_spec, shock_transmission, validate_spec
from irfn.analytic import standard_grid
from irfn.distributions import DistributionError, empirical_cf

D = DistributionFamily
finite = st.floats(-1e6, 1e6, allow_nan=False)
lams = st.floats(1e-3, 1.0)


# ---------------------------------------------------------------- g_lambda and G_lambda


@pytest.mark.parametrize("u, lam, expected", [(0.7, 0.5, 0.0), (-0.2, 0.5, 0.4), (-1.0, 0.5, 1.0)])
def test_loss_fraction_examples(u, lam, expected):
    assert loss_fraction(u, lam) == pytest.approx(expected, abs=1e-15)


@pytest.mark.parametrize("lam", [0.0, -0.1, 1.5, np.nan])
def test_loss_fraction_rejects_bad_lambda(lam):
    with pytest.raises(ValueError):
        loss_fraction(-0.1, lam)


@given(finite, finite, lams)
def test_loss_fraction_monotone_lipschitz(u1, u2, lam):
    g1, g2 = loss_fraction(u1, lam), loss_fraction(u2, lam)
    assert 0.0 <= g1 <= 1.0
    if u1 <= u2:
        assert g1 >= g2
    assert abs(g1 - g2) <= abs(u1 - u2) / lam + 1e-12


def test_loss_fraction_range_by_grid_scan():
    u = np.linspace(-3, 3, 6001)
    g = loss_fraction(u, 0.7)
    assert g.min() == 0.0 and g.max() == 1.0
    assert np.all(np.diff(g) <= 0)


@pytest.mark.parametrize(
    "x, y, z, lam, expected",
    [(1, 0.5, 1, 1, 0.0), (1, -0.5, 1, 1, 0.25), (0.3, -10, 2, 0.5, 2.0), (0.0, -1.0, 0.0, 1.0, 0.0)],
)
def test_shock_transmission_examples(x, y, z, lam, expected):
    assert shock_transmission(x, y, z, lam) == pytest.approx(expected)


@given(st.floats(0, 1e3), finite, st.floats(0, 1e3), lams)
def test_shock_transmission_properties(x, y, z, lam):
    g = shock_transmission(x, y, z, lam)
    assert 0.0 <= g <= z + 1e-12
    assert shock_transmission(x, y, 0.0, lam) == 0.0
    if y >= 0:
        assert g == 0.0


# ---------------------------------------------------------------- validation


def test_validate_valid_spec():
    bal = BalanceLaw(D.exponential(1.0), D.normal(0, 1), D.normal(1, 1))
    spec = ModelSpec.homogeneous([0.5, 0.5], [[2, 1], [1, 2]], D.exponential(1.0), bal, 1.0)
    assert validate_spec(spec) == []


def test_validate_codes():
    spec = two_type_spec()
    assert [v.code for v in validate_spec(spec.replace(type_probs=np.array([0.5, 0.4])))] == ["type_probs_not_normalized"]
    assert [v.code for v in validate_spec(spec.replace(recovery_lambda=0.0))] == ["lambda_out_of_range"]
    assert "kernel_negative" in [v.code for v in validate_spec(spec.replace(kernel=np.array([[1, -1], [0, 1]])))]
    assert "kernel_exceeds_n" in [v.code for v in validate_spec(spec, n=2)]
    bad_exp = ((D.normal(1, 1), D.exponential(1.0)), (D.exponential(1.0), D.exponential(1.0)))
    assert "exposure_not_positive" in [v.code for v in validate_spec(spec.replace(exposure=bad_exp))]
    bad_bal = (BalanceLaw(D.normal(0, 1), D.normal(0, 1), D.normal(0, 1)), spec.balance[1])
    assert "asset_not_positive" in [v.code for v in validate_spec(spec.replace(balance=bad_bal))]
    with pytest.raises(SpecError) as info:
        spec.replace(recovery_lambda=2.0, type_probs=np.array([0.9, 0.0])).check()
    assert {v.code for v in info.value.violations} == {"lambda_out_of_range", "type_probs_not_normalized"}


def test_spec_yaml_round_trip(tmp_path):
    spec = two_type_spec()
    save_spec(spec, tmp_path / "s.yaml")
    back = load_spec(tmp_path / "s.yaml")
    assert back.to_dict() == spec.to_dict()
    assert back.exposure[0][1].family == "gamma"


def test_bundled_configs_load():
    from pathlib import Path

    root = Path(__file__).parents[1] / "configs"
    assert validate_spec(load_spec(root / "benchmark_spec.yaml")) == []
    two = load_spec(root / "two_type_spec.yaml")
    assert validate_spec(two) == [] and two.exposure[0][1].family == "gamma"


def test_rates_orientation():
    spec = two_type_spec().replace(kernel=np.array([[0.0, 3.0], [1.0, 0.0]]))
    # a type-1 bank owes type-2 banks at rate P(2) kappa(1, 2) and borrows from them at P(2) kappa(2, 1)
    assert spec.out_rates()[0, 1] == pytest.approx(1.5)
    assert spec.in_rates()[0, 1] == pytest.approx(0.5)


# ---------------------------------------------------------------- distribution families

LAWS = [
    D.exponential(1.5),
    D.gamma(2.0, 0.5),
    D.lognormal(0.0, 0.5),
    D.normal(2.0, 1.0),
    D.shifted_gamma(3.0, 0.5, -1.0),
]


@pytest.mark.parametrize("law", LAWS, ids=lambda d: d.family)
def test_family_consistency(law, rng):
    k = standard_grid().points
    f = law.cf(k)
    assert law.cf(np.array([0.0]))[0] == pytest.approx(1.0)
    assert np.allclose(law.cf(-k), np.conj(f), atol=1e-12)
    assert np.all(np.abs(f) <= 1 + 1e-9)
    lo, hi = law.ppf(1e-12), law.ppf(1 - 1e-12)
    mass, _ = integrate.quad(lambda x: float(law.pdf(x)), lo, hi, limit=200, epsabs=1e-10)
    assert mass == pytest.approx(1.0, abs=1e-6)
    x = law.sample(rng, 100_000)
    assert abs(x.mean() - law.mean()) < 5 * law.std() / np.sqrt(len(x))
    assert np.max(np.abs(empirical_cf(x, k) - f)) < 0.02
    assert law.cdf(law.ppf(0.3)) == pytest.approx(0.3)


def test_empirical_family(rng):
    x = rng.exponential(1.0, 20_000)
    law = D.empirical(x)
    assert law.is_positive
    assert law.mean() == pytest.approx(x.mean())
    assert law.cdf(np.inf) == 1.0 and law.sf(-1.0) == 1.0
    back = D.from_dict(law.to_dict())
    assert np.array_equal(back.samples, law.samples)
    grid = np.linspace(0, 20, 20001)
    assert integrate.trapezoid(law.pdf(grid), grid) == pytest.approx(1.0, abs=1e-3)


def test_empirical_cf_examples(rng):
    assert empirical_cf([0.0, 0.0], [0.0, 1.0, 5.0]) == pytest.approx(np.ones(3))
    assert empirical_cf([3.0, -1.0], [0.0])[0] == 1.0
    x = rng.exponential(1.0, 1_000_000)
    assert abs(empirical_cf(x, [1.0])[0] - 1 / (1 - 1j)) < 0.01


def test_family_errors():
    with pytest.raises(DistributionError):
        D("weibull", {})
    with pytest.raises(DistributionError):
        D.exponential(-1.0)
    with pytest.raises(DistributionError):
        D.empirical([])
