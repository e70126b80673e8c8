from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import two_type_spec
from irfn.gw import (
    MaxIterExceeded,
    OffspringLaw,
    PopulationExplosion,
    extinction_probability,
    extinction_sweep,
    offspring_pgf,
    path_count_pgf,
    simulate_gw_batch,
    simulate_gw_tree,
    spectral_radius_eig,
    spectral_radius_power,
)

XI_MEAN_2 = 0.20318786997997994


def test_pgf_examples():
    law = OffspringLaw.single(2.0)
    assert offspring_pgf(law, [1.0])[0] == 1.0
    assert offspring_pgf(law, [0.0])[0] == pytest.approx(np.exp(-2), abs=1e-12)
    two = OffspringLaw(np.array([[0.5, 0.0], [0.0, 0.5]]))  # P=(0.5,0.5), kappa=I
    g = offspring_pgf(two, [1.0, 0.0])
    assert g[0] == 1.0 and g[1] == pytest.approx(np.exp(-0.5), abs=1e-15)
    assert path_count_pgf(law, 2, [0.0])[0] == pytest.approx(np.exp(2 * (np.exp(-2) - 1)), abs=1e-12)
    assert path_count_pgf(law, 2, [0.0])[0] == pytest.approx(0.177403, abs=1e-6)
    assert np.array_equal(path_count_pgf(law, 1, [0.4]), offspring_pgf(law, [0.4]))


@pytest.mark.parametrize("a", [[-0.1], [1.2], [np.nan]])
def test_pgf_rejects_outside_cube(a):
    with pytest.raises(ValueError):
        offspring_pgf(OffspringLaw.single(2.0), a)
    with pytest.raises(ValueError):
        path_count_pgf(OffspringLaw.single(2.0), 3, a)


def test_path_count_increasing_from_zero():
    law = OffspringLaw.from_spec(two_type_spec())
    vals = np.array([path_count_pgf(law, n, [0.0, 0.0]) for n in range(1, 30)])
    assert np.all(np.diff(vals, axis=0) >= 0)


@settings(max_examples=50, deadline=None)
@given(
    st.lists(st.floats(0.0, 4.0), min_size=4, max_size=4),
    st.lists(st.floats(0.0, 1.0), min_size=2, max_size=2),
    st.lists(st.floats(0.0, 1.0), min_size=2, max_size=2),
)
def test_pgf_maps_cube_monotone(m, a, b):
    law = OffspringLaw(np.array(m).reshape(2, 2))
    lo, hi = np.minimum(a, b), np.maximum(a, b)
    g_lo, g_hi = offspring_pgf(law, lo), offspring_pgf(law, hi)
    assert np.all((g_lo >= 0) & (g_hi <= 1)) and np.all(g_lo <= g_hi)
    assert np.array_equal(offspring_pgf(law, [1.0, 1.0]), [1.0, 1.0])


def test_extinction_examples():
    assert extinction_probability(OffspringLaw.single(0.5)).xi[0] == 1.0
    r = extinction_probability(OffspringLaw.single(2.0))
    assert r.xi[0] == pytest.approx(XI_MEAN_2, abs=1e-10)
    assert r.critical_eigenvalue == pytest.approx(2.0) and r.residual < 1e-12 and not r.critical
    crit = extinction_probability(OffspringLaw.single(1.0))
    assert crit.critical and crit.xi[0] == 1.0
    with pytest.raises(ValueError):
        extinction_probability(OffspringLaw.single(2.0), tol=0.0)


def test_extinction_iteration_monotone():
    law = OffspringLaw.from_spec(two_type_spec())
    x = np.zeros(2)
    for _ in range(200):
        nxt = offspring_pgf(law, x)
        assert np.all(nxt >= x)
        x = nxt
    assert np.allclose(x, extinction_probability(law).xi, atol=1e-10)


def test_max_iter_exceeded():
    with pytest.raises(MaxIterExceeded) as err:
        extinction_probability(OffspringLaw.single(1.01), max_iter=5)
    assert err.value.last.shape == (1,)


def test_sweep_crosses_criticality():
    rows = extinction_sweep(np.linspace(0.2, 3.0, 29))
    for mu, xi, rho, crit in rows:
        assert rho == pytest.approx(mu)
        assert (xi < 1.0) == (rho > 1.0 + 1e-9)
    m2 = np.array([[0.6, 0.9], [0.3, 0.2]])
    for s in np.linspace(0.2, 2.5, 24):
        r = extinction_probability(OffspringLaw(s * m2))
        assert (r.xi.min() < 1.0) == (r.critical_eigenvalue > 1.0 + 1e-9)


@settings(max_examples=80, deadline=None)
@given(st.lists(st.one_of(st.just(0.0), st.floats(0.01, 5.0)), min_size=9, max_size=9))
def test_spectral_radius_methods_agree(m):
    means = np.array(m).reshape(3, 3)
    assert spectral_radius_power(means) == pytest.approx(spectral_radius_eig(means), abs=1e-10)


def test_spectral_radius_defective_and_reducible():
    nilpotent = np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [0.0, 0.0, 0.0]])
    assert spectral_radius_power(nilpotent) == 0.0
    blocks = np.array([[0.0, 2.0, 5.0], [2.0, 0.0, 0.0], [0.0, 0.0, 0.7]])
    assert spectral_radius_power(blocks) == pytest.approx(2.0, abs=1e-12)


def test_orientations():
    spec = two_type_spec()
    out = OffspringLaw.from_spec(spec, "out").means
    inn = OffspringLaw.from_spec(spec, "in").means
    assert np.allclose(out, spec.type_probs[None, :] * spec.kernel)
    assert np.allclose(inn, spec.type_probs[None, :] * spec.kernel.T)
    with pytest.raises(ValueError):
        OffspringLaw.from_spec(spec, "up")
    with pytest.raises(ValueError):
        OffspringLaw(np.array([[-1.0]]))


def test_zero_kernel_extinct_at_first_generation():
    tree = simulate_gw_tree(OffspringLaw(np.zeros((2, 2))), 0, 10, seed=1)
    assert tree.extinct and tree.counts.shape[0] == 2 and tree.counts[1].sum() == 0
    with pytest.raises(ValueError):
        simulate_gw_tree(OffspringLaw.single(1.0), 0, 0, seed=1)


def test_population_explosion():
    with pytest.raises(PopulationExplosion, match="population_explosion"):
        simulate_gw_tree(OffspringLaw.single(5.0), 0, 40, seed=2, cap=10_000)


def test_first_generation_means():
    law = OffspringLaw.from_spec(two_type_spec())
    batch = simulate_gw_batch(law, 1, 100_000, 1, seed=4)
    z1 = batch.generation_counts[:, 1, :]
    se = z1.std(axis=0, ddof=1) / np.sqrt(len(z1))
    assert np.all(np.abs(z1.mean(axis=0) - law.means[1]) < 4 * se)


@pytest.mark.parametrize("a", [(0.3, 0.3), (0.3, 0.7), (0.7, 0.3), (0.7, 0.7)])
def test_generation_pgf_identity(a):
    law = OffspringLaw.from_spec(two_type_spec())
    batch = simulate_gw_batch(law, 0, 50_000, 3, seed=9)
    for n in (1, 2, 3):
        prod = np.prod(np.power(a, batch.generation_counts[:, n, :]), axis=1)
        se = prod.std(ddof=1) / np.sqrt(len(prod))
        # H_n(a) for a root of type 0
        assert abs(prod.mean() - path_count_pgf(law, n, a)[0]) < 4 * se + 1e-12


def test_batch_determinism_and_extinct_fraction():
    law = OffspringLaw.single(2.0)
    a = simulate_gw_batch(law, 0, 20_000, 50, seed=11)
    b = simulate_gw_batch(law, 0, 20_000, 50, seed=11)
    assert np.array_equal(a.extinct, b.extinct)
    assert abs(a.extinct_fraction - XI_MEAN_2) < 0.015
