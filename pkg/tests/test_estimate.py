from __future__ import annotations

import numpy as np
import pytest

from greenwalk.analytic import field_values
from greenwalk.errors import ConfigurationError, SmoothingDegenerateError, UndefinedMetricError
from greenwalk.estimate import (
    CIRCULAR, SQUARE, GreensField, InterrogationGrid, SmoothingConfig, accumulate_snapshot, apply_decay,
    emax, grid_from_swarm_extent, naive_estimate, sigma_g, smooth_at, smooth_field, to_greens,
)
from greenwalk.geometry import Domain
from greenwalk.sde import TransportModel, simulate_swarm


def _grid(n=4, ext=(0.0, 1.0, 0.0, 1.0)):
    return InterrogationGrid(*ext, n, n, (1.0,))


def test_centroid_walker_lands_in_its_cell():
    g = _grid()
    accumulate_snapshot(np.array([[0.375, 0.625]]), 1.0, g, 0)
    assert g.cells[0, 2, 1] == 1.0 and g.cells.sum() == 1.0


def test_edge_walker_goes_to_higher_cell():
    g = _grid()
    accumulate_snapshot(np.array([[0.5, 0.25]]), 1.0, g, 0)
    assert g.cells[0, 1, 2] == 1.0


def test_weights_add():
    g = _grid()
    accumulate_snapshot(np.full((4, 2), 0.1), np.full(4, 0.5), g, 0)
    assert g.cells[0, 0, 0] == 2.0


def test_outside_and_dead_walkers_skipped():
    g = _grid()
    pts = np.array([[1.0, 0.5], [-0.1, 0.5], [0.5, 0.5]])
    accumulate_snapshot(pts, 1.0, g, 0, alive=np.array([True, True, False]))
    assert g.cells.sum() == 0.0


def test_naive_estimate_arithmetic():
    g = InterrogationGrid(0.0, 1.0, 0.0, 1.0, 2, 2, (1.0,))
    g.cells[0, 0, 0] = 2.0
    f = naive_estimate(g, 0, 4)
    assert g.dA == 0.25
    assert f.values[0, 0] == 2.0


def test_naive_estimate_zero():
    g = _grid()
    assert np.all(naive_estimate(g, 0, 10).values == 0)


def test_to_greens_heaviside():
    f = naive_estimate(_grid(), 0, 1).with_values(np.ones((4, 4)))
    assert np.all(to_greens(f, -0.1).values == 0)
    assert np.all(to_greens(f, 0.5).values == 1)


def _field(values, ext=(0.0, 1.0, 0.0, 1.0)):
    v = np.asarray(values, dtype=float)
    return GreensField(*ext, v.shape[1], v.shape[0], 1.0, v)


def test_decay():
    f = _field(np.full((3, 3), 2.0))
    np.testing.assert_array_equal(apply_decay(f, 0.0, 5.0).values, f.values)
    np.testing.assert_allclose(apply_decay(f, 0.5, 2.0).values, 2.0 * np.exp(-1.0), rtol=1e-15)


def test_decay_commutes_with_smoothing():
    rng = np.random.default_rng(0)
    f = _field(rng.random((12, 12)))
    dom = Domain.rectangle()
    a = smooth_at(apply_decay(f, 0.5, 2.0), 2, dom).values
    b = apply_decay(smooth_at(f, 2, dom), 0.5, 2.0).values
    np.testing.assert_allclose(a, b, rtol=1e-14)


def test_constant_field_chooses_identity():
    f = _field(np.full((10, 10), 3.0))
    for shape in (SQUARE, CIRCULAR):
        out, a = smooth_field(f, SmoothingConfig(shape, 5, f), Domain.rectangle())
        assert a == 0
        np.testing.assert_array_equal(out.values, f.values)


def test_identity_candidate_set():
    rng = np.random.default_rng(1)
    f = _field(rng.random((10, 10)))
    ref = _field(np.ones((10, 10)))
    out, a = smooth_field(f, SmoothingConfig(SQUARE, 0, ref), Domain.rectangle())
    assert a == 0
    np.testing.assert_array_equal(out.values, f.values)


def test_smoothing_dominance_and_choice():
    rng = np.random.default_rng(2)
    xc = (np.arange(30) + 0.5) / 30
    X, Y = np.meshgrid(xc, xc)
    exact = np.sin(np.pi * X) * np.sin(np.pi * Y)
    ref = _field(exact)
    noisy = _field(exact + rng.normal(scale=0.2, size=exact.shape))
    out, a = smooth_field(noisy, SmoothingConfig(SQUARE, 10, ref), Domain.rectangle())
    assert a > 0
    assert sigma_g(out, ref) <= sigma_g(noisy, ref)
    assert out.meta["window"] == a


def test_square_window_mean_interior():
    rng = np.random.default_rng(3)
    v = rng.random((9, 9))
    out = smooth_at(_field(v), 1, Domain.rectangle())
    assert out.values[4, 4] == pytest.approx(v[3:6, 3:6].mean(), rel=1e-13)
    # cells touching the wall keep their own value (window clipped to zero)
    assert out.values[0, 4] == v[0, 4]
    assert out.values[1, 1] == pytest.approx(v[0:3, 0:3].mean(), rel=1e-13)


def test_circular_window_uses_centroid_distance():
    v = np.zeros((11, 11))
    v[5, 7] = 1.0  # distance 2 from the centre cell
    v[7, 7] = 1.0  # distance 2*sqrt(2) > 2
    out = smooth_at(_field(v), 2, Domain.rectangle(), CIRCULAR)
    assert out.values[5, 5] == pytest.approx(1.0 / 13.0, rel=1e-13)


def test_circular_window_clipped_by_disk():
    v = np.ones((20, 20))
    v[10, 10] = 5.0
    out = smooth_at(_field(v), 3, Domain.disk(), CIRCULAR)
    assert out.values[10, 0] == v[10, 0]


def test_smoothing_preserves_interior_mass():
    rng = np.random.default_rng(4)
    v = np.zeros((30, 30))
    v[10:20, 10:20] = rng.random((10, 10))
    out = smooth_at(_field(v), 3, Domain.rectangle())
    assert out.values.sum() == pytest.approx(v.sum(), rel=1e-13)


def test_smoothing_degenerate():
    z = _field(np.zeros((5, 5)))
    with pytest.raises(SmoothingDegenerateError):
        smooth_field(z, SmoothingConfig(SQUARE, 2, z), Domain.rectangle())


def test_smoothing_needs_fixed_width_without_reference():
    with pytest.raises(ConfigurationError):
        smooth_field(_field(np.ones((5, 5))), SmoothingConfig(SQUARE, 2, None), Domain.rectangle())


def test_emax_values():
    ex = _field(np.linspace(1, 2, 16).reshape(4, 4))
    assert emax(ex, ex) == 0.0
    assert emax(ex.with_values(1.1 * ex.values), ex) == pytest.approx(0.10, rel=1e-12)
    assert emax(ex.with_values(0.7 * ex.values), ex) == pytest.approx(0.3, rel=1e-12)


def test_emax_support_mask():
    ex = _field([[1.0, 0.0005], [1.0, 1.0]])
    est = _field([[1.0, 1.0], [1.0, 1.0]])
    assert emax(est, ex, 1e-3) == 0.0


def test_emax_zero_exact():
    z = _field(np.zeros((2, 2)))
    with pytest.raises(UndefinedMetricError):
        emax(z, z)


def test_sigma_g_values():
    ref = _field(np.arange(1.0, 10.0).reshape(3, 3))
    assert sigma_g(ref, ref) == 0
    assert sigma_g(ref.with_values(ref.values + 0.3), ref) == pytest.approx(0.3)
    d1 = sigma_g(ref.with_values(ref.values + np.linspace(-1, 1, 9).reshape(3, 3)), ref)
    d2 = sigma_g(ref.with_values(ref.values + 2 * np.linspace(-1, 1, 9).reshape(3, 3)), ref)
    assert d2 == pytest.approx(2 * d1)


def test_sigma_g_skips_cells_zero_in_both():
    ref = _field([[0.0, 1.0], [1.0, 1.0]])
    est = _field([[0.0, 2.0], [1.0, 1.0]])
    assert sigma_g(est, ref) == pytest.approx(1.0 / 3.0)


def test_geometry_mismatch():
    with pytest.raises(ConfigurationError):
        sigma_g(_field(np.ones((2, 2))), _field(np.ones((3, 3))))


def test_swarm_extent_point_cloud():
    assert grid_from_swarm_extent(np.tile([1.0, 2.0], (10, 1))) == (0.0, 1.0, 0.0, 2.0)


def test_swarm_extent_symmetric():
    rng = np.random.default_rng(5)
    p = rng.random((1000, 1))
    ext = grid_from_swarm_extent(np.hstack([p, p]))
    assert ext[1] == ext[3]


def test_free_space_normalization():
    """Unbounded, gamma = 0: sum G dA is 1 when the grid covers the swarm, <= 1 otherwise."""
    g = InterrogationGrid(-3.0, 3.0, -3.0, 3.0, 30, 30, (0.5,))
    simulate_swarm((0.0, 0.0), 0.5, 4000, 1e-2, 0.5, TransportModel.constant(), Domain.unbounded(), False, g, 7)
    f = naive_estimate(g, 0, 4000)
    assert f.values.sum() * f.dA == pytest.approx(1.0, abs=1e-12)
    small = InterrogationGrid(-0.1, 0.1, -0.1, 0.1, 4, 4, (0.5,))
    simulate_swarm((0.0, 0.0), 0.5, 4000, 1e-2, 0.5, TransportModel.constant(), Domain.unbounded(), False,
                   small, 7)
    assert naive_estimate(small, 0, 4000).values.sum() * small.dA < 1.0


def test_free_space_peak_small_run():
    """Peak of the naive estimate tracks 1/(4 pi D tau) at a moderate sample size."""
    g = InterrogationGrid(-1.5, 1.5, -1.5, 1.5, 30, 30, (1.0,))
    simulate_swarm((0.0, 0.0), 1.0, 40_000, 1e-2, 1.0, TransportModel.constant(), Domain.unbounded(), False,
                   g, 7, shards=2)
    f = naive_estimate(g, 0, 40_000)
    ref = f.with_values(field_values("free", *f.centers(), (0.0, 0.0), 1.0))
    assert emax(f, ref, 0.5) < 0.15
