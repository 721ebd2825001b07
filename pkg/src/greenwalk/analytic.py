"""Reference Green's functions and the convolution ("magic rule") solver.

All kernels take a response point ``x``, impulse points ``xp`` (broadcastable
``(..., 2)`` arrays) and the elapsed time ``tau = t - t'`` and return the
transition density of a walker moving from one to the other.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy import integrate, special

from .errors import ConvergenceError, DomainError, PreconditionError, ResolutionError
from .geometry import DIRICHLET, NEUMANN, Domain


@dataclass(frozen=True)
class SeriesParams:
    """Truncation controls for eigenfunction series.

    ``max_terms`` caps the sine modes per axis of the square and the radial
    zeros per order of the disk; ``max_orders`` caps the disk's angular
    orders. A series stops once the next term's bound drops below
    ``tail_tolerance`` times the running sum of term bounds.
    """

    max_terms: int = 200
    tail_tolerance: float = 1e-10
    max_orders: int = 30
    max_zeros: int = 60

    def __post_init__(self):
        if self.max_terms < 1 or self.max_orders < 1 or self.max_zeros < 1:
            raise ValueError("term counts must be >= 1")
        if not self.tail_tolerance > 0:
            raise ValueError("tail_tolerance must be positive")


DEFAULT_SERIES = SeriesParams()


def _pts(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.shape[-1] != 2:
        raise ValueError("points must have a trailing dimension of 2")
    return a


# --------------------------------------------------------------------------
# free space
# --------------------------------------------------------------------------
def gf_free_space(x, xp, tau, D0: float):
    """Planar heat kernel ``exp(-|x - x'|^2 / (4 D0 tau)) / (4 pi D0 tau)``."""
    tau = np.asarray(tau, dtype=float)
    if np.any(tau <= 0):
        raise DomainError("elapsed time must be positive")
    if not D0 > 0:
        raise DomainError("D0 must be positive")
    d = _pts(x) - _pts(xp)
    r2 = np.sum(d * d, axis=-1)
    return np.exp(-r2 / (4.0 * D0 * tau)) / (4.0 * np.pi * D0 * tau)


# --------------------------------------------------------------------------
# rectangle with absorbing walls
# --------------------------------------------------------------------------
def _sine_modes(rate: float, params: SeriesParams) -> int:
    """Number of sine modes with amplitudes exp(-n^2 rate) needed for the tail bound."""
    n = np.arange(1, params.max_terms + 2)
    amp = np.exp(-(n * n) * rate)
    run = np.cumsum(amp)
    ok = np.nonzero(amp[1:] < params.tail_tolerance * run[:-1])[0]
    if ok.size == 0:
        raise ConvergenceError(
            f"sine series needs more than max_terms={params.max_terms} modes (rate {rate:.3g})")
    return int(ok[0]) + 1


def _sine_kernel_1d(u, up, tau, D0, length, n_modes):
    n = np.arange(1, n_modes + 1)
    k = n * np.pi / length
    u = np.asarray(u, dtype=float)[..., None]
    up = np.asarray(up, dtype=float)[..., None]
    tau = np.asarray(tau, dtype=float)[..., None]
    terms = np.sin(k * u) * np.sin(k * up) * np.exp(-(k * k) * D0 * tau)
    return (2.0 / length) * np.sum(terms, axis=-1)


def square_kernel(D0: float, params: SeriesParams = DEFAULT_SERIES, extents=(0.0, 1.0, 0.0, 1.0)) -> Callable:
    """Unvalidated rectangle kernel ``K(x, xp, tau)``.

    Points outside the rectangle are allowed (the series is the odd periodic
    extension), which finite-difference gradients at the walls rely on.
    """
    x0, x1, y0, y1 = (float(e) for e in extents)
    lx, ly = x1 - x0, y1 - y0

    def kern(x, xp, tau):
        x, xp = _pts(x), _pts(xp)
        tau = np.asarray(tau, dtype=float)
        if np.any(tau <= 0):
            raise DomainError("elapsed time must be positive")
        tmin = float(np.min(tau))
        nx = _sine_modes(np.pi**2 * D0 * tmin / lx**2, params)
        ny = _sine_modes(np.pi**2 * D0 * tmin / ly**2, params)
        gx = _sine_kernel_1d(x[..., 0] - x0, xp[..., 0] - x0, tau, D0, lx, nx)
        gy = _sine_kernel_1d(x[..., 1] - y0, xp[..., 1] - y0, tau, D0, ly, ny)
        return gx * gy

    return kern


def gf_square_dirichlet(x, xp, tau, D0: float, params: SeriesParams = DEFAULT_SERIES,
                        extents=(0.0, 1.0, 0.0, 1.0)):
    """Green's function of a rectangle (default: the unit square) with absorbing walls.

    Product of two one-dimensional sine eigenseries.
    """
    x0, x1, y0, y1 = extents
    for p in (_pts(x), _pts(xp)):
        if np.any((p[..., 0] < x0) | (p[..., 0] > x1) | (p[..., 1] < y0) | (p[..., 1] > y1)):
            raise DomainError("points must lie in the closed rectangle")
    return square_kernel(D0, params, extents)(x, xp, tau)


# --------------------------------------------------------------------------
# disk with absorbing wall
# --------------------------------------------------------------------------
@lru_cache(maxsize=8)
def _bessel_table(n_orders: int, n_zeros: int):
    """Zeros j_{m,k} and normalisations 1 / J_{m+1}(j_{m,k})^2, shape (orders, zeros)."""
    zeros = np.array([special.jn_zeros(m, n_zeros) for m in range(n_orders)])
    norm = 1.0 / special.jv(np.arange(n_orders)[:, None] + 1, zeros) ** 2
    zeros.setflags(write=False)
    norm.setflags(write=False)
    return zeros, norm


def disk_kernel(D0: float, params: SeriesParams = DEFAULT_SERIES, center=(0.5, 0.5), radius=0.5) -> Callable:
    """Unvalidated disk kernel ``K(x, xp, tau)`` from the Bessel–Fourier series.

    Truncation is checked on the evaluated points: the contributions of the
    last included angular order and of the last included radial zero must
    both fall below ``tail_tolerance`` times the largest running sum of
    term magnitudes.
    """
    cx, cy = float(center[0]), float(center[1])
    R = float(radius)
    M, K = params.max_orders, params.max_zeros

    def kern(x, xp, tau):
        x, xp = _pts(x), _pts(xp)
        tau = np.asarray(tau, dtype=float)
        if np.any(tau <= 0):
            raise DomainError("elapsed time must be positive")
        x, xp, tau = np.broadcast_arrays(x, xp, tau[..., None])
        tau = tau[..., 0]
        shape = tau.shape
        x, xp, tau = x.reshape(-1, 2), xp.reshape(-1, 2), tau.ravel()
        r = np.hypot(x[:, 0] - cx, x[:, 1] - cy) / R
        rp = np.hypot(xp[:, 0] - cx, xp[:, 1] - cy) / R
        dth = np.arctan2(x[:, 1] - cy, x[:, 0] - cx) - np.arctan2(xp[:, 1] - cy, xp[:, 0] - cx)
        zeros, norm = _bessel_table(M, K)
        # Bessel values depend on radius only; grids share few distinct radii
        ur, r_inv = np.unique(r, return_inverse=True)
        urp, rp_inv = np.unique(rp, return_inverse=True)
        out = np.zeros(r.shape)
        mag = np.zeros(r.shape)
        last_order = np.zeros(r.shape)
        last_zero = np.zeros(r.shape)
        for m in range(M):
            eps = 1.0 if m == 0 else 2.0
            j = zeros[m]
            t = (eps / (np.pi * R * R)) * norm[m] * special.jv(m, np.outer(ur, j))[r_inv] \
                * special.jv(m, np.outer(urp, j))[rp_inv] * np.exp(-np.outer(tau, j * j) * D0 / (R * R))
            t *= np.cos(m * dth)[:, None]
            out += t.sum(axis=1)
            mag += np.abs(t).sum(axis=1)
            last_zero = np.maximum(last_zero, np.abs(t[:, -1]))
            if m == M - 1:
                last_order = np.abs(t).sum(axis=1)
        scale = params.tail_tolerance * max(float(mag.max(initial=0.0)), np.finfo(float).tiny)
        if last_order.max(initial=0.0) > scale or last_zero.max(initial=0.0) > scale:
            raise ConvergenceError(
                f"Bessel table ({M} orders x {K} zeros) exhausted before reaching the tail tolerance")
        return out.reshape(shape)

    return kern


def gf_disk_dirichlet(x, xp, tau, D0: float, params: SeriesParams = DEFAULT_SERIES,
                      center=(0.5, 0.5), radius=0.5):
    """Green's function of a disk with an absorbing wall (default: radius 0.5 at (0.5, 0.5))."""
    for p in (_pts(x), _pts(xp)):
        if np.any(np.hypot(p[..., 0] - center[0], p[..., 1] - center[1]) > radius * (1 + 1e-12)):
            raise DomainError("points must lie in the closed disk")
    return disk_kernel(D0, params, center, radius)(x, xp, tau)


# --------------------------------------------------------------------------
# groundwater transport in the first quadrant
# --------------------------------------------------------------------------
@dataclass(frozen=True)
class GroundwaterParams:
    """Coefficients of the quadrant transport test.

    ``v = v0 (a1 x + a2, b1 y + b2) psi(m t)`` and
    ``D = D0 ((a1 x + a2)^2, (b1 y + b2)^2) psi(m t)``, decay ``gamma``.
    """

    D0: float = 0.05
    v0: float = 0.2
    a1: float = 1.0
    a2: float = 0.0
    b1: float = 1.0
    b2: float = 0.0
    gamma: float = 0.5
    m: float = 1.0
    psi1: Callable | None = field(default=None, compare=False)
    psi2: Callable | None = field(default=None, compare=False)


def _psi_integral(psi, m, t0, t1) -> float:
    if psi is None:
        return t1 - t0
    val, _ = integrate.quad(lambda s: psi(m * s), t0, t1)
    return val


def _lognormal_axis(u, u0, coef, D0, v0, Psi):
    """Density of u = coef*x + c at elapsed 'time' Psi for du = v0 coef psi u dt + coef sqrt(2 D0 psi) u dW."""
    s2 = 2.0 * coef * coef * D0 * Psi
    mean = np.log(u0) + (coef * v0 - coef * coef * D0) * Psi
    with np.errstate(divide="ignore", invalid="ignore"):
        lu = np.log(u)
        dens = np.exp(-(lu - mean) ** 2 / (2.0 * s2)) / (u * np.sqrt(2.0 * np.pi * s2))
    return abs(coef) * np.where(u > 0, dens, 0.0)


def gf_groundwater(x, t: float, xp, tp: float, params: GroundwaterParams = GroundwaterParams()):
    """Forward transition density of the quadrant transport model, times exp(-gamma (t - t')).

    With ``u = a1 x + a2`` each axis is a geometric Brownian motion, so the
    density is a product of two lognormals in ``u`` and ``w = b1 y + b2``.
    Time-varying ``psi`` enters only through its integral over ``[t', t]``.
    """
    if not t > tp:
        raise DomainError("response time must follow the impulse time")
    x, xp = _pts(x), _pts(xp)
    if np.any(x <= 0) or np.any(xp <= 0):
        raise DomainError("points must lie in the open first quadrant")
    p = params
    u, u0 = p.a1 * x[..., 0] + p.a2, p.a1 * xp[..., 0] + p.a2
    w, w0 = p.b1 * x[..., 1] + p.b2, p.b1 * xp[..., 1] + p.b2
    if np.any(u0 <= 0) or np.any(w0 <= 0):
        raise DomainError("impulse point must map to positive (a1 x + a2, b1 y + b2)")
    Px = _psi_integral(p.psi1, p.m, tp, t)
    Py = _psi_integral(p.psi2, p.m, tp, t)
    fx = _lognormal_axis(u, u0, p.a1, p.D0, p.v0, Px)
    fy = _lognormal_axis(w, w0, p.b1, p.D0, p.v0, Py)
    return fx * fy * np.exp(-p.gamma * (t - tp))


# --------------------------------------------------------------------------
# grid materialisation
# --------------------------------------------------------------------------
def field_values(kind: str, centers_x, centers_y, point, tau: float, D0: float = 0.05,
                 params: SeriesParams = DEFAULT_SERIES, domain: Domain | None = None,
                 groundwater: GroundwaterParams | None = None, launch_time: float = 0.0):
    """Evaluate a reference Green's function at cell centroids.

    ``kind`` is one of ``free``, ``square``, ``disk`` or ``groundwater``.
    For backward kinds ``point`` is the response point; for ``groundwater``
    it is the impulse point launched at ``launch_time``. Cells outside the
    domain get zero.
    """
    pts = np.stack([centers_x, centers_y], axis=-1)
    point = np.asarray(point, dtype=float)
    if kind == "free":
        return gf_free_space(pts, point, tau, D0)
    if kind == "square":
        x0, x1, y0, y1 = domain.params if domain is not None else (0.0, 1.0, 0.0, 1.0)
        inside = (pts[..., 0] > x0) & (pts[..., 0] < x1) & (pts[..., 1] > y0) & (pts[..., 1] < y1)
        vals = square_kernel(D0, params, (x0, x1, y0, y1))(pts, point, tau)
        return np.where(inside, vals, 0.0)
    if kind == "disk":
        cx, cy, r = domain.params if domain is not None else (0.5, 0.5, 0.5)
        inside = np.hypot(pts[..., 0] - cx, pts[..., 1] - cy) < r
        vals = disk_kernel(D0, params, (cx, cy), r)(pts, point, tau)
        return np.where(inside, vals, 0.0)
    if kind == "groundwater":
        gp = groundwater or GroundwaterParams()
        inside = (pts[..., 0] > 0) & (pts[..., 1] > 0)
        safe = np.where(inside[..., None], pts, 1.0)
        vals = gf_groundwater(safe, launch_time + tau, point, launch_time, gp)
        return np.where(inside, vals, 0.0)
    raise ValueError(f"unknown reference kind {kind!r}")


# --------------------------------------------------------------------------
# convolution solver
# --------------------------------------------------------------------------
def _zero(p, t):
    return np.zeros(np.shape(p)[:-1])


@dataclass
class MagicRuleProblem:
    """Forcing, initial and boundary data for the convolution solver.

    All data are callables ``f(points, t)`` over ``(n, 2)`` points (``phi``
    takes points only). ``g`` is used on Dirichlet segments, ``h`` (the given
    outward normal gradient of the solution) on Neumann segments and
    ``advective_flux`` (the outward advective flux ``eta v.n``) on the
    segments listed in ``advective_segments``.
    """

    domain: Domain
    D0: float
    source: Callable | None = None
    phi: Callable | None = None
    g: Callable | None = None
    h: Callable | None = None
    advective_flux: Callable | None = None
    advective_segments: tuple = ()
    n_space: int = 64
    n_time: int = 64
    tolerance: float = 1e-3

    def __post_init__(self):
        if self.n_space < 2 or self.n_time < 2:
            raise PreconditionError("quadrature resolutions must be >= 2")
        if self.domain.shape not in ("rectangle", "disk"):
            raise PreconditionError("convolution solver supports rectangle and disk domains")
        unknown = set(self.advective_segments) - set(self.domain.segment_names)
        if unknown:
            raise PreconditionError(f"unknown advective segments {sorted(unknown)}")


def _area_nodes(domain: Domain, n: int):
    """Midpoint nodes and weights covering the domain."""
    if domain.shape == "rectangle":
        x0, x1, y0, y1 = domain.params
    else:
        cx, cy, r = domain.params
        x0, x1, y0, y1 = cx - r, cx + r, cy - r, cy + r
    hx, hy = (x1 - x0) / n, (y1 - y0) / n
    X, Y = np.meshgrid(x0 + (np.arange(n) + 0.5) * hx, y0 + (np.arange(n) + 0.5) * hy)
    pts = np.column_stack([X.ravel(), Y.ravel()])
    pts = pts[domain.contains(pts)]
    return pts, np.full(pts.shape[0], hx * hy), max(hx, hy)


def _boundary_nodes(domain: Domain, n: int):
    """Midpoint nodes on each segment: (points, arc weights, outward normals, segment ids)."""
    if domain.shape == "disk":
        cx, cy, r = domain.params
        m = 4 * n
        th = (np.arange(m) + 0.5) * 2 * np.pi / m
        nrm = np.column_stack([np.cos(th), np.sin(th)])
        return np.column_stack([cx + r * nrm[:, 0], cy + r * nrm[:, 1]]), np.full(m, 2 * np.pi * r / m), \
            nrm, np.zeros(m, dtype=int)
    x0, x1, y0, y1 = domain.params
    pts, wts, nrms, segs = [], [], [], []
    sx = x0 + (np.arange(n) + 0.5) * (x1 - x0) / n
    sy = y0 + (np.arange(n) + 0.5) * (y1 - y0) / n
    walls = [  # left, right, bottom, top
        (np.column_stack([np.full(n, x0), sy]), (y1 - y0) / n, (-1.0, 0.0)),
        (np.column_stack([np.full(n, x1), sy]), (y1 - y0) / n, (1.0, 0.0)),
        (np.column_stack([sx, np.full(n, y0)]), (x1 - x0) / n, (0.0, -1.0)),
        (np.column_stack([sx, np.full(n, y1)]), (x1 - x0) / n, (0.0, 1.0)),
    ]
    for k, (p, w, nv) in enumerate(walls):
        pts.append(p)
        wts.append(np.full(n, w))
        nrms.append(np.tile(nv, (n, 1)))
        segs.append(np.full(n, k))
    return np.vstack(pts), np.concatenate(wts), np.vstack(nrms), np.concatenate(segs)


def _solve_once(problem: MagicRuleProblem, gf: Callable, x, t: float, n_space: int, n_time: int) -> float:
    dom = problem.domain
    x = np.asarray(x, dtype=float)
    apts, aw, h = _area_nodes(dom, n_space)
    total = 0.0
    if problem.phi is not None:
        total += float(np.sum(gf(x, apts, np.full(apts.shape[0], t)) * problem.phi(apts) * aw))
    dt = t / n_time
    times = (np.arange(n_time) + 0.5) * dt
    bpts, bw, bn, bseg = _boundary_nodes(dom, n_space)
    kinds = np.array([dom.bcs[s].kind for s in bseg])
    names = np.array(dom.segment_names)[bseg]
    dmask = kinds == DIRICHLET
    nmask = kinds == NEUMANN
    fmask = np.isin(names, list(problem.advective_segments))
    step = 0.5 * h
    for tp in times:
        tau = t - tp
        if problem.source is not None:
            total += dt * float(np.sum(gf(x, apts, tau) * problem.source(apts, tp) * aw))
        if problem.g is not None and dmask.any():
            p, n = bpts[dmask], bn[dmask]
            dG = (gf(x, p + step * n, tau) - gf(x, p - step * n, tau)) / (2.0 * step)
            total -= dt * problem.D0 * float(np.sum(problem.g(p, tp) * dG * bw[dmask]))
        if problem.h is not None and nmask.any():
            p = bpts[nmask]
            total += dt * problem.D0 * float(np.sum(gf(x, p, tau) * problem.h(p, tp) * bw[nmask]))
        if problem.advective_flux is not None and fmask.any():
            p = bpts[fmask]
            total -= dt * float(np.sum(gf(x, p, tau) * problem.advective_flux(p, tp) * bw[fmask]))
    return total


def magic_rule_solve(problem: MagicRuleProblem, gf: Callable, x, t: float, check: bool = True) -> float:
    """Solution value at ``(x, t)`` from Green's-function convolutions.

    Sums the source, initial-condition, Dirichlet, Neumann and advective
    boundary convolutions by midpoint quadrature in space and time; the
    Dirichlet term uses central differences of ``gf`` with step half a cell.
    ``gf(x, xp, tau)`` must accept ``(n, 2)`` impulse points. With
    ``check`` the result is compared to a half-resolution solve and a
    :class:`ResolutionError` is raised when they differ by more than ten
    times ``problem.tolerance`` (relative to max(1, |value|)).
    """
    if not t > 0:
        raise PreconditionError("solution time must be positive")
    val = _solve_once(problem, gf, x, t, problem.n_space, problem.n_time)
    if check:
        coarse = _solve_once(problem, gf, x, t, max(problem.n_space // 2, 2), max(problem.n_time // 2, 2))
        if abs(val - coarse) > 10.0 * problem.tolerance * max(1.0, abs(val)):
            raise ResolutionError(
                f"quadrature unresolved: {val!r} vs half-resolution {coarse!r}; raise n_space/n_time")
    return val
