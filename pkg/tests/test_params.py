from __future__ import annotations

import math

import numpy as np
import pytest

from greenwalk.errors import ConfigurationError
from greenwalk.estimate import InterrogationGrid, naive_estimate
from greenwalk.geometry import Domain
from greenwalk.params import (
    empirical_variation, plan, pool_runs, predicted_variation, recommended_dt, sigma_n_curve,
    walkers_for_variation,
)
from greenwalk.sde import TransportModel, simulate_swarm

C = 4 * math.pi * math.exp(0.25)


def test_recommended_dt():
    assert recommended_dt(1e-4, 0.05) == 2e-3
    assert recommended_dt(2e-4, 0.05) == 2 * recommended_dt(1e-4, 0.05)
    assert recommended_dt(0.05, 0.05) == 1.0


def test_recommended_dt_round_trip():
    for dt in (1e-3, 2e-3, 0.37):
        assert recommended_dt(0.05 * dt, 0.05) == pytest.approx(dt, rel=1e-15)


def test_predicted_variation_structure():
    a = predicted_variation(0.05, 2e-3, 0.01, 0.01, 1000)
    assert predicted_variation(0.05, 2e-3, 0.01, 0.01, 2000) == pytest.approx(a / 2, rel=1e-15)
    # dx dy = D0 dt cancels
    assert predicted_variation(0.05, 2e-3, 0.01, 0.01, 1000) == pytest.approx(C / 1000, rel=1e-14)


def test_walkers_fixed_point():
    args = (0.05, 2e-3, 0.01, 0.01)
    for n in (1, 7, 323, 10**4, 10**6, 12_345_677):
        assert walkers_for_variation(predicted_variation(*args, n), *args) == n


def test_walkers_smallest_satisfying():
    args = (0.05, 1e-3, 0.02, 0.01)
    for target in (0.3, 0.05, 1e-3, 7.3e-5):
        n = walkers_for_variation(target, *args)
        assert predicted_variation(*args, n) <= target
        assert n == 1 or predicted_variation(*args, n - 1) > target


def test_walkers_halving_and_monotone():
    args = (0.05, 2e-3, 0.01, 0.01)
    n1 = walkers_for_variation(0.01, *args)
    n2 = walkers_for_variation(0.005, *args)
    assert n2 in (2 * n1 - 1, 2 * n1)
    targets = np.geomspace(1e-5, 1.0, 40)
    ns = [walkers_for_variation(t, *args) for t in targets]
    assert all(a >= b for a, b in zip(ns, ns[1:]))


def test_plan():
    p = plan(0.01, 0.01, 0.05, 0.05)
    assert p.dt == 2e-3 and p.dA == pytest.approx(1e-4)
    assert p.predicted_variation <= 0.05
    assert p.as_dict()["n_walkers"] == p.n_walkers


def test_sigma_n_curve():
    np.testing.assert_allclose(sigma_n_curve([1e-3, 16e-3], 1e-3), [1.0, 0.5])
    with pytest.raises(ValueError):
        sigma_n_curve(0.0, 1e-3)


def _run(seed, n):
    g = InterrogationGrid(0.0, 1.0, 0.0, 1.0, 10, 10, (0.2,))
    simulate_swarm((0.5, 0.5), 1.0, n, 1e-2, 0.2, TransportModel.constant(), Domain.rectangle(), True, g, seed)
    return g


def test_pool_with_itself():
    g = _run(1, 500)
    pooled, n = pool_runs([g, g], [500, 500])
    assert n == 1000
    np.testing.assert_allclose(naive_estimate(pooled, 0, n).values, naive_estimate(g, 0, 500).values, rtol=1e-15)


def test_pool_disjoint_seeds():
    g1, g2 = _run(1, 500), _run(2, 300)
    pooled, n = pool_runs([g1, g2], [500, 300])
    expect = (500 * naive_estimate(g1, 0, 500).values + 300 * naive_estimate(g2, 0, 300).values) / 800
    np.testing.assert_allclose(naive_estimate(pooled, 0, n).values, expect, rtol=1e-13)


def test_pool_commutative_associative():
    gs = [_run(s, 200) for s in (3, 4, 5)]
    a, _ = pool_runs(gs, [200] * 3)
    b, _ = pool_runs(gs[::-1], [200] * 3)
    ab, _ = pool_runs(gs[:2], [200] * 2)
    c, _ = pool_runs([ab, gs[2]], [400, 200])
    np.testing.assert_array_equal(a.cells, b.cells)
    np.testing.assert_allclose(a.cells, c.cells, rtol=1e-15)


def test_pool_errors():
    with pytest.raises(ConfigurationError):
        pool_runs([], [])
    other = InterrogationGrid(0.0, 2.0, 0.0, 1.0, 10, 10, (0.2,))
    with pytest.raises(ConfigurationError):
        pool_runs([_run(1, 50), other], [50, 50])


def test_empirical_variation_reported():
    v = empirical_variation(_run(1, 2000), 0)
    assert np.isfinite(v) and v > 0
