"""Domains, exact step-crossing detection and walker/boundary interaction.

Boundary segments carry one of three conditions:

* Dirichlet walls absorb the walker.
* Neumann walls reflect it specularly about the tangent line at the hit point.
* Robin walls absorb with probability ``min(1, kappa * sqrt(pi * D_n * dt))``
  and reflect otherwise, where ``D_n`` is the diffusion along the wall normal.

Crossings are found by intersecting the step chord with the boundary, not by
testing endpoints only, so grazing exits are not missed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Mapping

import numpy as np

from .errors import ConfigurationError, DegenerateStepError, PreconditionError
from .swarm import WalkerState

GEOM_TOL = 1e-12
MAX_REFLECTIONS = 4

DIRICHLET = "dirichlet"
NEUMANN = "neumann"
ROBIN = "robin"


@dataclass(frozen=True)
class BCKind:
    """Boundary condition on one segment; ``kappa`` is used by Robin only."""

    kind: str
    kappa: float = 0.0

    def __post_init__(self):
        if self.kind not in (DIRICHLET, NEUMANN, ROBIN):
            raise ValueError(f"unknown boundary kind {self.kind!r}")
        if self.kind == ROBIN and not (self.kappa >= 0):
            raise ValueError("Robin kappa must be >= 0")
        if self.kind == ROBIN and math.isnan(self.kappa):
            raise ValueError("Robin kappa must not be NaN")

    @classmethod
    def dirichlet(cls) -> "BCKind":
        return cls(DIRICHLET)

    @classmethod
    def neumann(cls) -> "BCKind":
        return cls(NEUMANN)

    @classmethod
    def robin(cls, kappa: float) -> "BCKind":
        return cls(ROBIN, float(kappa))

    @classmethod
    def parse(cls, spec) -> "BCKind":
        """Accept ``"dirichlet"``, ``"neumann"``, ``{"robin": kappa}`` or a BCKind."""
        if isinstance(spec, BCKind):
            return spec
        if isinstance(spec, str):
            return cls(spec.lower())
        if isinstance(spec, Mapping) and len(spec) == 1:
            (k, v), = spec.items()
            if str(k).lower() == ROBIN:
                kappa = v["kappa"] if isinstance(v, Mapping) else v
                return cls.robin(float(kappa))
        raise ValueError(f"cannot parse boundary condition {spec!r}")


@dataclass(frozen=True)
class StepOutcome:
    """Result of classifying one step: inside, or the first boundary crossing."""

    inside: bool
    segment: int = -1
    hit_point: tuple[float, float] | None = None
    hit_fraction: float | None = None

    @property
    def crossed(self) -> bool:
        return not self.inside


_SEGMENT_NAMES = {
    "rectangle": ("left", "right", "bottom", "top"),
    "disk": ("circle",),
    "quadrant": ("left", "bottom"),
    "unbounded": (),
}


@dataclass(frozen=True)
class Domain:
    """A fixed 2-D region with a boundary condition on each boundary segment.

    Use the constructors :meth:`rectangle`, :meth:`disk`, :meth:`quadrant` and
    :meth:`unbounded`. Segment order is fixed per shape: rectangles use
    ``left, right, bottom, top``; the quadrant ``x > 0, y > 0`` uses ``left``
    (x = 0) and ``bottom`` (y = 0); the disk has one ``circle`` segment.
    """

    shape: str
    params: tuple[float, ...]
    bcs: tuple[BCKind, ...]

    def __post_init__(self):
        names = _SEGMENT_NAMES.get(self.shape)
        if names is None:
            raise ValueError(f"unknown shape {self.shape!r}")
        if len(self.bcs) != len(names):
            raise ValueError(f"{self.shape} needs {len(names)} boundary conditions")
        if self.shape == "rectangle":
            x0, x1, y0, y1 = self.params
            if not (x1 > x0 and y1 > y0):
                raise ValueError("rectangle extents must be increasing")
        if self.shape == "disk" and not self.params[2] > 0:
            raise ValueError("disk radius must be positive")

    # -- constructors -----------------------------------------------------
    @classmethod
    def _with_bcs(cls, shape, params, bc):
        names = _SEGMENT_NAMES[shape]
        if isinstance(bc, Mapping) and not (len(bc) == 1 and str(next(iter(bc))).lower() == ROBIN):
            unknown = set(bc) - set(names) - {"default"}
            if unknown:
                raise ConfigurationError(f"unknown segments {sorted(unknown)}", "domain.boundary")
            default = bc.get("default")
            kinds = []
            for name in names:
                if name not in bc and default is None:
                    raise ConfigurationError(f"missing boundary condition for {name!r}", "domain.boundary")
                kinds.append(BCKind.parse(bc.get(name, default)))
            return cls(shape, tuple(float(p) for p in params), tuple(kinds))
        kind = BCKind.parse(bc)
        return cls(shape, tuple(float(p) for p in params), (kind,) * len(names))

    @classmethod
    def rectangle(cls, x_min=0.0, x_max=1.0, y_min=0.0, y_max=1.0, bc=DIRICHLET) -> "Domain":
        return cls._with_bcs("rectangle", (x_min, x_max, y_min, y_max), bc)

    @classmethod
    def disk(cls, center=(0.5, 0.5), radius=0.5, bc=DIRICHLET) -> "Domain":
        return cls._with_bcs("disk", (center[0], center[1], radius), bc)

    @classmethod
    def quadrant(cls, bc=NEUMANN) -> "Domain":
        return cls._with_bcs("quadrant", (), bc)

    @classmethod
    def unbounded(cls) -> "Domain":
        return cls("unbounded", (), ())

    # -- queries ----------------------------------------------------------
    @property
    def segment_names(self) -> tuple[str, ...]:
        return _SEGMENT_NAMES[self.shape]

    @property
    def has_absorbing(self) -> bool:
        return any(b.kind != NEUMANN for b in self.bcs)

    def bc(self, segment: int) -> BCKind:
        return self.bcs[segment]

    def contains(self, points) -> np.ndarray:
        """Strict interior test, vectorised over ``(..., 2)`` points."""
        p = np.asarray(points, dtype=float)
        x, y = p[..., 0], p[..., 1]
        if self.shape == "rectangle":
            x0, x1, y0, y1 = self.params
            return (x > x0) & (x < x1) & (y > y0) & (y < y1)
        if self.shape == "disk":
            cx, cy, r = self.params
            return (x - cx) ** 2 + (y - cy) ** 2 < r * r
        if self.shape == "quadrant":
            return (x > 0) & (y > 0)
        return np.isfinite(x) & np.isfinite(y)

    def normals(self, segment: np.ndarray, hit: np.ndarray) -> np.ndarray:
        """Outward unit normals at hit points on the given segments."""
        seg = np.asarray(segment)
        hit = np.asarray(hit, dtype=float)
        n = np.zeros(hit.shape, dtype=float)
        if self.shape == "disk":
            cx, cy, r = self.params
            n[..., 0] = (hit[..., 0] - cx) / r
            n[..., 1] = (hit[..., 1] - cy) / r
            return n
        # straight walls: left, right, bottom, top (quadrant uses left, bottom)
        if self.shape == "rectangle":
            table = np.array([[-1.0, 0.0], [1.0, 0.0], [0.0, -1.0], [0.0, 1.0]])
        else:
            table = np.array([[-1.0, 0.0], [0.0, -1.0]])
        return table[seg]

    def first_crossing(self, p0, p1, from_boundary: bool = False):
        """Vectorised first crossing of chords ``p0 -> p1``.

        Returns ``(crossed, segment, fraction, hit)`` arrays. A chord whose end
        lies exactly on the boundary counts as crossing. With
        ``from_boundary`` the chords start on the boundary (after a
        reflection) and crossings at fraction ``<= GEOM_TOL`` are ignored.
        """
        p0 = np.asarray(p0, dtype=float)
        p1 = np.asarray(p1, dtype=float)
        n = p0.shape[0]
        seg = np.full(n, -1, dtype=np.int64)
        frac = np.full(n, np.inf)
        hit = p1.copy()
        if self.shape == "unbounded" or n == 0:
            return np.zeros(n, dtype=bool), seg, frac, hit
        d = p1 - p0
        if self.shape == "disk":
            cx, cy, r = self.params
            rel = p0 - (cx, cy)
            out = (p1[:, 0] - cx) ** 2 + (p1[:, 1] - cy) ** 2 >= r * r
            idx = np.nonzero(out)[0]
            a = np.einsum("ij,ij->i", d[idx], d[idx])
            b = 2.0 * np.einsum("ij,ij->i", rel[idx], d[idx])
            c = np.einsum("ij,ij->i", rel[idx], rel[idx]) - r * r
            disc = np.sqrt(np.maximum(b * b - 4.0 * a * c, 0.0))
            q = -0.5 * (b + np.where(b >= 0, disc, -disc))
            with np.errstate(divide="ignore", invalid="ignore"):
                t = np.where(b >= 0, c / q, q / a)
            t = np.clip(np.nan_to_num(t, nan=1.0), 0.0, 1.0)
            h = p0[idx] + t[:, None] * d[idx]
            rad = np.hypot(h[:, 0] - cx, h[:, 1] - cy)
            h[:, 0] = cx + r * (h[:, 0] - cx) / rad
            h[:, 1] = cy + r * (h[:, 1] - cy) / rad
            seg[idx] = 0
            frac[idx] = t
            hit[idx] = h
            return out, seg, frac, hit

        if self.shape == "rectangle":
            x0, x1, y0, y1 = self.params
            walls = ((0, x0, -1), (0, x1, 1), (1, y0, -1), (1, y1, 1))
        else:
            walls = ((0, 0.0, -1), (1, 0.0, -1))
        ts = np.full((n, len(walls)), np.inf)
        t_lo = GEOM_TOL if from_boundary else -1.0
        with np.errstate(divide="ignore", invalid="ignore"):
            for k, (ax, val, side) in enumerate(walls):
                beyond = (p1[:, ax] - val) * side >= 0
                t = (val - p0[:, ax]) / d[:, ax]
                ok = beyond & (t > t_lo) & (t <= 1.0 + GEOM_TOL)
                ts[ok, k] = np.clip(t[ok], 0.0, 1.0)
        tmin = ts.min(axis=1)
        crossed = np.isfinite(tmin)
        if not crossed.any():
            return crossed, seg, frac, hit
        tied = ts <= (tmin + GEOM_TOL)[:, None]
        is_dir = np.array([b.kind == DIRICHLET for b in self.bcs])
        prefer = tied & is_dir[None, :]
        choice = np.where(prefer.any(axis=1), prefer.argmax(axis=1), tied.argmax(axis=1))
        idx = np.nonzero(crossed)[0]
        seg[idx] = choice[idx]
        frac[idx] = tmin[idx]
        h = p0[idx] + tmin[idx, None] * d[idx]
        for k, (ax, val, _) in enumerate(walls):
            on = choice[idx] == k
            h[on, ax] = val
        hit[idx] = h
        return crossed, seg, frac, hit


def mirror(p1, hit, normal) -> np.ndarray:
    """Mirror points across the tangent lines through ``hit`` with ``normal``."""
    p1 = np.asarray(p1, dtype=float)
    off = np.einsum("...i,...i->...", p1 - hit, normal)
    return p1 - 2.0 * off[..., None] * normal


def classify_step(p0, p1, domain: Domain) -> StepOutcome:
    """Classify the step ``p0 -> p1``: inside, or the first crossing."""
    p0 = np.asarray(p0, dtype=float).reshape(1, 2)
    p1 = np.asarray(p1, dtype=float).reshape(1, 2)
    if not domain.contains(p0)[0]:
        raise PreconditionError(f"step origin {tuple(p0[0])} is not strictly inside the domain")
    crossed, seg, frac, hit = domain.first_crossing(p0, p1)
    if not crossed[0]:
        return StepOutcome(True)
    return StepOutcome(False, int(seg[0]), (float(hit[0, 0]), float(hit[0, 1])), float(frac[0]))


def absorb(walker: WalkerState, audit=None) -> WalkerState:
    """Kill a walker at a Dirichlet wall; its weight is added to ``audit.absorbed_weight``."""
    if not walker.alive:
        raise PreconditionError("cannot absorb a walker that is already dead")
    if audit is not None:
        audit.absorbed_weight += walker.weight
    return replace(walker, alive=False)


def reflect(p1, outcome: StepOutcome, domain: Domain) -> np.ndarray:
    """Specular reflection of the overshoot ``p1`` at the crossing in ``outcome``.

    Corner double crossings are re-reflected, at most ``MAX_REFLECTIONS`` times.
    """
    if outcome.inside:
        raise PreconditionError("reflect needs a crossing outcome")
    p = np.asarray(p1, dtype=float).reshape(1, 2)
    hit = np.asarray(outcome.hit_point, dtype=float).reshape(1, 2)
    seg = np.array([outcome.segment])
    for _ in range(MAX_REFLECTIONS):
        p = mirror(p, hit, domain.normals(seg, hit))
        if domain.contains(p)[0]:
            return p[0]
        crossed, seg, _, hit = domain.first_crossing(hit, p, from_boundary=True)
        if not crossed[0]:
            break
    raise DegenerateStepError(f"reflected point {tuple(p[0])} did not re-enter the domain")


def robin_absorption_probability(kappa: float, d_normal, dt: float):
    """``min(1, kappa * sqrt(pi * D_n * dt))``; infinite kappa always absorbs."""
    if math.isinf(kappa):
        return np.ones_like(np.asarray(d_normal, dtype=float))
    return np.minimum(1.0, kappa * np.sqrt(np.pi * np.asarray(d_normal, dtype=float) * dt))


def robin_absorption_probability_batch(kappa, d_normal, dt: float) -> np.ndarray:
    kappa = np.asarray(kappa, dtype=float)
    with np.errstate(invalid="ignore"):
        p = np.minimum(1.0, kappa * np.sqrt(np.pi * np.asarray(d_normal, dtype=float) * dt))
    return np.where(np.isinf(kappa), 1.0, p)


def normal_diffusion(domain: Domain, segment, hit, diffusion) -> np.ndarray:
    """Diffusion along the wall normal: ``n . diag(D) . n``."""
    nrm = domain.normals(segment, hit)
    diffusion = np.asarray(diffusion, dtype=float)
    return diffusion[..., 0] * nrm[..., 0] ** 2 + diffusion[..., 1] * nrm[..., 1] ** 2


def robin_interact(walker: WalkerState, outcome: StepOutcome, kappa: float, model, dt: float,
                   stream, t: float = 0.0, domain: Domain | None = None) -> WalkerState:
    """Partially absorbing wall: absorb with the Robin probability, else reflect.

    ``walker.position`` is the overshooting end point of the step. One uniform
    is drawn from ``stream`` whatever the outcome.
    """
    if outcome.inside:
        raise PreconditionError("robin_interact needs a crossing outcome")
    if domain is None:
        raise PreconditionError("robin_interact needs the domain to reflect against")
    hit = np.asarray(outcome.hit_point, dtype=float).reshape(1, 2)
    diff = np.asarray(model.diffusion(hit, t), dtype=float).reshape(1, 2)
    d_n = normal_diffusion(domain, np.array([outcome.segment]), hit, diff)
    p_abs = float(robin_absorption_probability(kappa, d_n, dt)[0])
    u = float(stream.uniforms(1)[0])
    if u < p_abs:
        return replace(walker, alive=False)
    pos = reflect(walker.position, outcome, domain)
    return replace(walker, position=(float(pos[0]), float(pos[1])))


def resolve_boundary(p0, p1, domain: Domain, diffusion_at, dt: float, stream):
    """Apply boundary conditions to a batch of steps.

    Parameters
    ----------
    p0, p1 : ndarray, shape (n, 2)
        Step origins (inside the domain) and proposed end points.
    diffusion_at : callable
        ``diffusion_at(points) -> (m, 2)`` diagonal diffusion, used for Robin walls.
    stream : RngStream
        Source of the Robin acceptance uniforms, drawn in walker order.

    Returns
    -------
    positions : ndarray, shape (n, 2)
        Final positions (unchanged rows for absorbed walkers).
    absorbed : ndarray of bool
    """
    pos = np.array(p1, dtype=float, copy=True)
    absorbed = np.zeros(pos.shape[0], dtype=bool)
    # every supported domain is convex, so a chord can only exit if its end point does
    cand = np.nonzero(~domain.contains(pos))[0]
    crossed, seg, _, hit = domain.first_crossing(np.asarray(p0, dtype=float)[cand], pos[cand])
    active = cand[crossed]
    seg, hit = seg[crossed], hit[crossed]
    kinds = np.array([{DIRICHLET: 0, NEUMANN: 1, ROBIN: 2}[b.kind] for b in domain.bcs], dtype=np.int64)
    kappas = np.array([b.kappa for b in domain.bcs])
    seg_a, hit_a = seg, hit
    for _ in range(MAX_REFLECTIONS):
        if active.size == 0:
            break
        kind = kinds[seg_a]
        dead = kind == 0
        robin = np.nonzero(kind == 2)[0]
        if robin.size:
            d_n = normal_diffusion(domain, seg_a[robin], hit_a[robin], diffusion_at(hit_a[robin]))
            p_abs = robin_absorption_probability_batch(kappas[seg_a[robin]], d_n, dt)
            u = stream.uniforms(robin.size)
            dead[robin] = u < p_abs
        absorbed[active[dead]] = True
        keep = ~dead
        active, seg_a, hit_a = active[keep], seg_a[keep], hit_a[keep]
        if active.size == 0:
            break
        new = mirror(pos[active], hit_a, domain.normals(seg_a, hit_a))
        pos[active] = new
        crossed, seg2, _, hit2 = domain.first_crossing(hit_a, new, from_boundary=True)
        again = crossed | ~domain.contains(new)
        if np.any(again & ~crossed):
            raise DegenerateStepError("reflected walker landed on the boundary; reduce dt")
        active, seg_a, hit_a = active[again], seg2[again], hit2[again]
    if active.size:
        raise DegenerateStepError(
            f"{active.size} walkers failed to re-enter after {MAX_REFLECTIONS} reflections; reduce dt")
    return pos, absorbed
