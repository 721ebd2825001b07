from __future__ import annotations

import numpy as np
import pytest
from scipy import integrate

from oracles import groundwater_oracle, square_kernel_oracle
from greenwalk.analytic import (
    GroundwaterParams, MagicRuleProblem, SeriesParams, disk_kernel, gf_disk_dirichlet, gf_free_space,
    gf_groundwater, gf_square_dirichlet, magic_rule_solve, square_kernel,
)
from greenwalk.errors import ConvergenceError, DomainError, PreconditionError, ResolutionError
from greenwalk.geometry import Domain

D0 = 0.05
FREE_PEAK = 1.0 / (4.0 * np.pi * D0)


# -- free space --------------------------------------------------------------
def test_free_space_peak():
    assert gf_free_space((0.3, 0.3), (0.3, 0.3), 1.0, D0) == pytest.approx(1.5915494309, rel=1e-10)


def test_free_space_symmetry():
    a, b = np.array([0.1, 0.7]), np.array([-0.4, 0.2])
    assert gf_free_space(a, b, 0.7, D0) == gf_free_space(b, a, 0.7, D0)


def test_free_space_integrates_to_one():
    val, _ = integrate.dblquad(lambda y, x: gf_free_space((x, y), (0.0, 0.0), 1.0, D0), -5, 5, -5, 5)
    assert val == pytest.approx(1.0, abs=1e-8)


def test_free_space_rejects_nonpositive_tau():
    with pytest.raises(DomainError):
        gf_free_space((0, 0), (0, 0), 0.0, D0)


# -- square ------------------------------------------------------------------
def test_square_zero_on_wall():
    for xp in ((0.0, 0.3), (1.0, 0.3), (0.4, 0.0), (0.4, 1.0)):
        assert abs(gf_square_dirichlet((0.5, 0.5), xp, 0.2, D0)) < 1e-10


def test_square_symmetry():
    a, b = (0.2, 0.7), (0.6, 0.35)
    assert gf_square_dirichlet(a, b, 0.3, D0) == pytest.approx(gf_square_dirichlet(b, a, 0.3, D0), rel=1e-13)


def test_square_small_tau_matches_free_space():
    sq = gf_square_dirichlet((0.5, 0.5), (0.5, 0.5), 1e-3, D0)
    fr = gf_free_space((0.5, 0.5), (0.5, 0.5), 1e-3, D0)
    assert sq / fr == pytest.approx(1.0, abs=1e-3)


def test_square_against_crank_nicolson_oracle():
    oracle = square_kernel_oracle((0.5, 0.5), (0.5, 0.5), 1.0, D0, n_cells=512, dt=1e-4)
    assert gf_square_dirichlet((0.5, 0.5), (0.5, 0.5), 1.0, D0) == pytest.approx(oracle, rel=5e-3)


def test_square_bounded_by_free_space():
    rng = np.random.default_rng(0)
    x, xp = rng.random((200, 2)), rng.random((200, 2))
    for tau in (0.05, 0.5, 2.0):
        # up to the absolute truncation error of the sine series
        assert np.all(gf_square_dirichlet(x, xp, tau, D0) <= gf_free_space(x, xp, tau, D0) + 1e-8)


def test_square_series_cap():
    with pytest.raises(ConvergenceError):
        gf_square_dirichlet((0.5, 0.5), (0.5, 0.5), 1e-4, D0, SeriesParams(max_terms=20))


def _smooth_phi(p):
    return np.sin(np.pi * p[..., 0]) * np.sin(np.pi * p[..., 1]) * (1 + p[..., 0])


def _delta_error(kern, x, eps, n=300, ext=(0.0, 1.0, 0.0, 1.0), mask=None):
    x0, x1, y0, y1 = ext
    hx, hy = (x1 - x0) / n, (y1 - y0) / n
    X, Y = np.meshgrid(x0 + (np.arange(n) + 0.5) * hx, y0 + (np.arange(n) + 0.5) * hy)
    P = np.stack([X, Y], -1)
    w = np.ones(X.shape) if mask is None else mask(P)
    val = np.sum(kern(np.asarray(x), P, eps) * _smooth_phi(P) * w) * hx * hy
    return abs(val - _smooth_phi(np.asarray(x)))


def test_square_delta_property_with_eps_halving():
    kern = square_kernel(D0)
    x = (0.4, 0.55)
    errs = [_delta_error(kern, x, eps) for eps in (0.02, 0.01, 0.005, 0.0025)]
    # first order in eps: each halving roughly halves the error
    for a, b in zip(errs, errs[1:]):
        assert 1.8 < a / b < 2.2
    # leading term eps * D0 * laplacian(phi)
    px, py = x
    lap = -2 * np.pi**2 * _smooth_phi(np.array(x)) + 2 * np.pi * np.cos(np.pi * px) * np.sin(np.pi * py)
    assert errs[-1] == pytest.approx(abs(0.0025 * D0 * lap), rel=0.02)


# -- disk --------------------------------------------------------------------
def test_disk_zero_on_circle():
    for th in np.linspace(0, 2 * np.pi, 7):
        xp = (0.5 + 0.5 * np.cos(th), 0.5 + 0.5 * np.sin(th))
        assert abs(gf_disk_dirichlet((0.6, 0.45), xp, 0.2, D0)) < 1e-10


def test_disk_rotation_invariance():
    x, xp = np.array([0.7, 0.5]), np.array([0.45, 0.6])
    base = gf_disk_dirichlet(x, xp, 0.3, D0)
    for th in (0.3, 1.7, 4.0):
        c, s = np.cos(th), np.sin(th)
        rot = np.array([[c, -s], [s, c]])
        xr = 0.5 + rot @ (x - 0.5)
        xpr = 0.5 + rot @ (xp - 0.5)
        assert gf_disk_dirichlet(xr, xpr, 0.3, D0) == pytest.approx(base, rel=1e-10)


def test_disk_small_tau_matches_free_space_at_center():
    params = SeriesParams(max_orders=60, max_zeros=200)
    val = gf_disk_dirichlet((0.5, 0.5), (0.5, 0.5), 1e-3, D0, params)
    assert val / gf_free_space((0.5, 0.5), (0.5, 0.5), 1e-3, D0) == pytest.approx(1.0, abs=1e-3)


def test_disk_table_exhaustion():
    with pytest.raises(ConvergenceError):
        gf_disk_dirichlet((0.5, 0.5), (0.5, 0.5), 1e-3, D0, SeriesParams(max_orders=5, max_zeros=10))


def test_disk_bounded_by_square_of_same_diameter():
    rng = np.random.default_rng(1)
    th, r = rng.random(100) * 2 * np.pi, 0.45 * np.sqrt(rng.random(100))
    x = np.column_stack([0.5 + r * np.cos(th), 0.5 + r * np.sin(th)])
    xp = np.array([0.75, 0.5])
    assert np.all(gf_disk_dirichlet(x, xp, 0.5, D0) <= gf_square_dirichlet(x, xp, 0.5, D0) + 1e-12)


def test_disk_delta_property():
    kern = disk_kernel(D0)
    inside = lambda P: (np.hypot(P[..., 0] - 0.5, P[..., 1] - 0.5) < 0.5).astype(float)
    errs = [_delta_error(kern, (0.6, 0.45), eps, n=80, mask=inside) for eps in (0.08, 0.04, 0.02)]
    assert errs[0] > errs[1] > errs[2]
    assert errs[1] / errs[2] > 1.5


# -- groundwater -------------------------------------------------------------
GW = GroundwaterParams()
LAUNCH = (0.06, 0.06)


def test_groundwater_decay_scaling():
    x = np.array([[0.05, 0.08], [0.1, 0.02]])
    no_decay = GroundwaterParams(gamma=0.0)
    np.testing.assert_allclose(gf_groundwater(x, 2.0, LAUNCH, 0.0, GW),
                               np.exp(-1.0) * gf_groundwater(x, 2.0, LAUNCH, 0.0, no_decay), rtol=1e-14)


def test_groundwater_quadrant_normalization():
    p = GroundwaterParams(gamma=0.0)
    fx = lambda u: gf_groundwater(np.array([u, LAUNCH[1]]), 5.0, LAUNCH, 0.0, p)
    # the density is a product of axis factors; integrate one axis and square
    marginal, _ = integrate.quad(lambda u: fx(u), 0, np.inf, limit=200)
    axis_norm = marginal / gf_groundwater(np.array([LAUNCH[0], LAUNCH[1]]), 5.0, LAUNCH, 0.0, p) \
        * integrate.quad(lambda u: gf_groundwater(np.array([LAUNCH[0], u]), 5.0, LAUNCH, 0.0, p), 0, np.inf,
                         limit=200)[0]
    assert axis_norm == pytest.approx(1.0, abs=1e-3)


def test_groundwater_quadrant_normalization_2d_quadrature():
    p = GroundwaterParams(gamma=0.0)
    edges = np.geomspace(1e-6, 50.0, 1201)
    c = np.sqrt(edges[1:] * edges[:-1])
    w = np.diff(edges)
    X, Y = np.meshgrid(c, c)
    vals = gf_groundwater(np.stack([X, Y], -1), 5.0, LAUNCH, 0.0, p)
    assert np.sum(vals * np.outer(w, w)) == pytest.approx(1.0, abs=1e-3)


def test_groundwater_against_log_grid_oracle():
    g = np.linspace(0.01, 1.0, 50)
    P = np.stack(np.meshgrid(g, g), -1)
    exact = gf_groundwater(P, 5.0, LAUNCH, 0.0, GW)
    oracle = groundwater_oracle(P, LAUNCH, 5.0, GW.D0, GW.v0, GW.gamma)
    mask = exact >= 1e-3 * exact.max()
    assert np.max(np.abs(oracle[mask] / exact[mask] - 1)) < 0.01


def test_groundwater_time_varying_psi_uses_integral():
    p = GroundwaterParams(psi1=lambda s: 2.0, psi2=lambda s: 2.0, gamma=0.0)
    q = GroundwaterParams(gamma=0.0)
    x = np.array([0.08, 0.05])
    assert gf_groundwater(x, 1.0, LAUNCH, 0.0, p) == pytest.approx(gf_groundwater(x, 2.0, LAUNCH, 0.0, q), rel=1e-9)


def test_groundwater_domain_errors():
    with pytest.raises(DomainError):
        gf_groundwater((-0.1, 0.2), 1.0, LAUNCH, 0.0, GW)
    with pytest.raises(DomainError):
        gf_groundwater((0.1, 0.2), 0.0, LAUNCH, 0.0, GW)


# -- convolution solver ------------------------------------------------------
SQ = Domain.rectangle()


def _square_gf(x, xp, tau):
    return square_kernel(D0)(x, xp, tau)


def test_null_forcing_gives_zero():
    zero = lambda p, t=None: np.zeros(np.shape(p)[:-1])
    prob = MagicRuleProblem(SQ, D0, source=zero, phi=lambda p: zero(p), g=zero, h=zero)
    assert magic_rule_solve(prob, _square_gf, (0.5, 0.5), 1.0) == 0.0


def test_eigenmode_initial_condition():
    phi = lambda p: np.sin(np.pi * p[..., 0]) * np.sin(np.pi * p[..., 1])
    prob = MagicRuleProblem(SQ, D0, phi=phi)
    val = magic_rule_solve(prob, _square_gf, (0.5, 0.5), 1.0)
    assert val == pytest.approx(np.exp(-2 * np.pi**2 * D0), rel=1e-2)


def test_mollified_delta_reproduces_green_function():
    x0, w = np.array([0.4, 0.55]), 2.0 / 64
    phi = lambda p: np.exp(-np.sum((p - x0) ** 2, -1) / (2 * w * w)) / (2 * np.pi * w * w)
    prob = MagicRuleProblem(SQ, D0, phi=phi, n_space=128)
    val = magic_rule_solve(prob, _square_gf, (0.5, 0.5), 0.5)
    assert val == pytest.approx(gf_square_dirichlet((0.5, 0.5), x0, 0.5, D0), rel=0.02)


def test_dirichlet_data_constant_one():
    one = lambda p, t=None: np.ones(np.shape(p)[:-1])
    prob = MagicRuleProblem(SQ, D0, phi=lambda p: one(p), g=one)
    assert magic_rule_solve(prob, _square_gf, (0.5, 0.5), 1.0) == pytest.approx(1.0, abs=2e-3)


def test_superposition_is_linear():
    f = lambda p, t: np.cos(p[..., 0]) * (1 + t)
    g = lambda p, t: p[..., 1] * t
    h = lambda p, t: np.sin(3 * p[..., 0])
    phi = lambda p: p[..., 0] * (1 - p[..., 0])
    flux = lambda p, t: 0.3 * p[..., 1]
    dom = Domain.rectangle(bc={"left": "dirichlet", "bottom": "dirichlet", "right": "neumann", "top": "neumann"})

    def solve(a, b):
        lin = lambda u, v: (lambda *args: a * u(*args) + b * v(*args))
        prob = MagicRuleProblem(dom, D0, source=lin(f, f), phi=lin(phi, phi), g=lin(g, g), h=lin(h, h),
                                advective_flux=lin(flux, flux), advective_segments=("top",),
                                n_space=16, n_time=16)
        return magic_rule_solve(prob, _square_gf, (0.3, 0.6), 0.5, check=False)

    def single(scale, which):
        kw = dict(source=None, phi=None, g=None, h=None, advective_flux=None)
        data = dict(source=f, phi=phi, g=g, h=h, advective_flux=flux)
        kw[which] = lambda *args: scale * data[which](*args)
        prob = MagicRuleProblem(dom, D0, advective_segments=("top",), n_space=16, n_time=16, **kw)
        return magic_rule_solve(prob, _square_gf, (0.3, 0.6), 0.5, check=False)

    parts = [single(1.0, k) for k in ("source", "phi", "g", "h", "advective_flux")]
    total = solve(1.0, 0.0)
    assert total == pytest.approx(sum(parts), rel=1e-12)
    assert solve(2.0, 1.5) == pytest.approx(3.5 * total, rel=1e-12)


def test_resolution_error_when_underresolved():
    x0, w = np.array([0.4, 0.55]), 0.01
    phi = lambda p: np.exp(-np.sum((p - x0) ** 2, -1) / (2 * w * w)) / (2 * np.pi * w * w)
    prob = MagicRuleProblem(SQ, D0, phi=phi, n_space=8, n_time=8)
    with pytest.raises(ResolutionError):
        magic_rule_solve(prob, _square_gf, (0.4, 0.55), 0.01)


def test_solver_preconditions():
    with pytest.raises(PreconditionError):
        MagicRuleProblem(SQ, D0, n_space=1)
    with pytest.raises(PreconditionError):
        magic_rule_solve(MagicRuleProblem(SQ, D0), _square_gf, (0.5, 0.5), 0.0)


def test_disk_solver_eigenmode():
    from scipy.special import jn_zeros, jv
    j01 = jn_zeros(0, 1)[0]
    phi = lambda p: jv(0, j01 * np.hypot(p[..., 0] - 0.5, p[..., 1] - 0.5) / 0.5)
    prob = MagicRuleProblem(Domain.disk(), D0, phi=phi, n_space=96)
    val = magic_rule_solve(prob, disk_kernel(D0), (0.5, 0.5), 1.0)
    assert val == pytest.approx(np.exp(-D0 * (j01 / 0.5) ** 2), rel=1e-2)
