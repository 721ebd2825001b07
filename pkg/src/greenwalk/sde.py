"""Euler–Maruyama transport of walker swarms.

A walker moves by ``drift * dt + sqrt(2 * D_ii * dt) * z_i`` per axis, where
the drift is ``-v`` in backward mode and ``+v`` in forward mode, ``D`` is the
diagonal diffusion and ``z`` is a pair of standard normals. Decay is never
simulated; it is applied to estimated fields afterwards.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigurationError, DomainError, ModelEvaluationError, SwarmExtinctionError
from .estimate import InterrogationGrid, accumulate_snapshot
from .geometry import Domain, resolve_boundary
from .respawn import DEFAULT_REORDER_INTERVAL, WeightLedger, absorb_and_split, maybe_reorder
from .rng import RngStream
from .swarm import WalkerState, WalkerSwarm

__all__ = [
    "BACKWARD", "FORWARD", "TransportModel", "WalkerState", "WalkerSwarm", "SwarmAudit",
    "SwarmResult", "em_step", "em_step_batch", "simulate_swarm", "step_count",
]

BACKWARD = "backward"
FORWARD = "forward"
_STEP_RTOL = 1e-9


def _const2(value) -> np.ndarray:
    arr = np.broadcast_to(np.asarray(value, dtype=float), (2,)).copy()
    return arr


@dataclass(frozen=True)
class TransportModel:
    """Coefficients of a diagonal advection-diffusion-decay model.

    Parameters
    ----------
    velocity, diffusion : callable
        ``f(points, t) -> (n, 2)`` for ``points`` of shape ``(n, 2)`` and a
        scalar physical time ``t``. ``diffusion`` returns the diagonal
        entries ``(D_xx, D_yy)``.
    decay : float
        First-order decay rate gamma >= 0, applied to fields, not walkers.
    direction : {"backward", "forward"}
    params : dict
        Parameter echo for manifests and reference solutions.
    """

    velocity: Callable
    diffusion: Callable
    decay: float = 0.0
    direction: str = BACKWARD
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.direction not in (BACKWARD, FORWARD):
            raise ConfigurationError(f"unknown direction {self.direction!r}", "model.direction")
        if not (np.isfinite(self.decay) and self.decay >= 0):
            raise ConfigurationError("decay must be finite and >= 0", "model.decay")

    @classmethod
    def constant(cls, velocity=(0.0, 0.0), diffusion=0.05, decay: float = 0.0,
                 direction: str = BACKWARD) -> "TransportModel":
        """Uniform velocity and diagonal diffusion (scalar means isotropic)."""
        v, d = _const2(velocity), _const2(diffusion)
        if np.any(d < 0):
            raise ConfigurationError("diffusion entries must be >= 0", "model.diffusion")

        def vel(p, t, _v=v):
            return np.broadcast_to(_v, np.shape(p))

        def dif(p, t, _d=d):
            return np.broadcast_to(_d, np.shape(p))

        return cls(vel, dif, float(decay), direction,
                   {"kind": "constant", "velocity": v.tolist(), "diffusion": d.tolist()})

    @classmethod
    def groundwater(cls, D0=0.05, v0=0.2, a1=1.0, a2=0.0, b1=1.0, b2=0.0, psi1=None, psi2=None,
                    m=1.0, gamma=0.5, direction: str = FORWARD) -> "TransportModel":
        """Linearly accelerating flow with quadratically growing dispersion.

        ``v = v0 * (a1 x + a2, b1 y + b2) * psi(m t)`` and
        ``D = D0 * ((a1 x + a2)^2, (b1 y + b2)^2) * psi(m t)``, where ``psi1``
        and ``psi2`` default to the constant 1.
        """
        p1 = psi1 if psi1 is not None else (lambda s: 1.0)
        p2 = psi2 if psi2 is not None else (lambda s: 1.0)

        def lin(p):
            p = np.asarray(p, dtype=float)
            return np.column_stack([a1 * p[..., 0] + a2, b1 * p[..., 1] + b2]).reshape(p.shape)

        def psi(t):
            return np.array([p1(m * t), p2(m * t)], dtype=float)

        def vel(p, t):
            return v0 * lin(p) * psi(t)

        def dif(p, t):
            return D0 * lin(p) ** 2 * psi(t)

        params = {"kind": "groundwater", "D0": D0, "v0": v0, "a1": a1, "a2": a2, "b1": b1, "b2": b2,
                  "m": m, "gamma": gamma}
        return cls(vel, dif, float(gamma), direction, params)

    def coefficients(self, points, t: float) -> tuple[np.ndarray, np.ndarray]:
        """Drift (sign applied) and diagonal diffusion at ``points``; validated."""
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        v = np.asarray(self.velocity(pts, t), dtype=float)
        d = np.asarray(self.diffusion(pts, t), dtype=float)
        if not (np.isfinite(np.sum(v)) and np.isfinite(np.sum(d))) and not (
                np.all(np.isfinite(v)) and np.all(np.isfinite(d))):
            bad = np.nonzero(~(np.isfinite(v).all(axis=-1) & np.isfinite(d).all(axis=-1)))[0]
            k = int(bad[0]) if bad.size else 0
            raise ModelEvaluationError("non-finite transport coefficient", tuple(pts[k]), t)
        if d.size and d.min() < 0:
            k = int(np.nonzero((d < 0).any(axis=-1))[0][0])
            raise ModelEvaluationError("negative diffusion entry", tuple(pts[k]), t)
        drift = -v if self.direction == BACKWARD else v
        return drift, d

    def diffusion_at(self, t: float) -> Callable:
        return lambda pts: np.asarray(self.diffusion(np.asarray(pts).reshape(-1, 2), t), dtype=float).reshape(-1, 2)


def em_step_batch(positions, t: float, dt: float, model: TransportModel, z) -> np.ndarray:
    """One Euler–Maruyama step for many walkers with given normals ``z`` of shape (n, 2)."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    pos = np.asarray(positions, dtype=float).reshape(-1, 2)
    drift, d = model.coefficients(pos, t)
    return pos + drift * dt + np.sqrt(2.0 * d * dt) * np.asarray(z, dtype=float).reshape(-1, 2)


def em_step(pos, t: float, dt: float, model: TransportModel, stream: RngStream | None = None, z=None) -> np.ndarray:
    """One Euler–Maruyama step for a single walker.

    Two normals are drawn from ``stream`` unless ``z`` is supplied.
    """
    if z is None:
        if stream is None:
            raise ValueError("either stream or z is required")
        z = stream.normals(2)
    return em_step_batch(np.asarray(pos, dtype=float)[None, :], t, dt, model, np.asarray(z)[None, :])[0]


@dataclass
class SwarmAudit:
    """Per-step swarm bookkeeping; entry 0 is the launch state."""

    alive: list = field(default_factory=list)
    total_weight: list = field(default_factory=list)
    absorbed_weight: list = field(default_factory=list)
    absorbed_count: list = field(default_factory=list)
    split_count: list = field(default_factory=list)
    launch_total: float = 0.0

    def record(self, swarm: WalkerSwarm, absorbed_total: float, n_absorbed: int, n_split: int) -> None:
        self.alive.append(swarm.n_alive)
        self.total_weight.append(swarm.total_weight())
        self.absorbed_weight.append(float(absorbed_total))
        self.absorbed_count.append(int(n_absorbed))
        self.split_count.append(int(n_split))

    def __len__(self) -> int:
        return len(self.alive)

    def summary(self) -> dict:
        return {
            "steps": max(len(self.alive) - 1, 0),
            "final_alive": self.alive[-1] if self.alive else 0,
            "final_weight": self.total_weight[-1] if self.total_weight else 0.0,
            "absorbed_weight": self.absorbed_weight[-1] if self.absorbed_weight else 0.0,
            "absorbed_count": int(sum(self.absorbed_count)),
            "split_count": int(sum(self.split_count)),
        }


@dataclass
class SwarmResult:
    grid: InterrogationGrid
    audit: SwarmAudit
    swarm: WalkerSwarm
    snapshots: dict = field(default_factory=dict)


def step_count(time: float, dt: float, what: str = "time") -> int:
    """Integer number of steps in ``time``; raise if it is not a multiple of dt."""
    k = int(round(time / dt))
    if k < 0 or abs(k * dt - time) > _STEP_RTOL * max(1.0, abs(time)):
        raise ConfigurationError(f"{what} {time!r} is not a multiple of dt={dt!r}", what)
    return k


def _shard_bounds(n: int, shards: int) -> list[tuple[int, int]]:
    edges = np.linspace(0, n, shards + 1).round().astype(int)
    return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:])]


def simulate_swarm(launch, launch_time: float, n_walkers: int, dt: float, horizon: float,
                   model: TransportModel, domain: Domain, respawn_on: bool, grid: InterrogationGrid,
                   seed: int, *, shards: int = 1, threads: int = 1, ledger_scope: str = "shard",
                   m: int = DEFAULT_REORDER_INTERVAL, keep_snapshots: bool = False) -> SwarmResult:
    """Launch ``n_walkers`` at ``launch`` and accumulate their weights on ``grid``.

    Parameters
    ----------
    launch_time : float
        Physical time of the launch. Coefficients at step ``k`` are evaluated
        at ``launch_time - k dt`` (backward) or ``launch_time + k dt`` (forward).
    horizon : float
        Total elapsed time, a multiple of ``dt``.
    grid : InterrogationGrid
        Snapshot times are elapsed times and must be multiples of ``dt``.
        It is filled in place.
    shards : int
        Number of contiguous walker blocks; shard ``s`` draws from stream
        ``(seed, s)``. Results depend on ``shards`` but never on ``threads``.
    ledger_scope : {"shard", "global"}
        Whether respawn splits stay within a shard or search the whole swarm.
    keep_snapshots : bool
        Keep a copy of the swarm at each snapshot in ``result.snapshots``.

    Returns
    -------
    SwarmResult
    """
    if ledger_scope not in ("shard", "global"):
        raise ConfigurationError(f"unknown ledger scope {ledger_scope!r}", "respawn.ledger_scope")
    if shards < 1 or threads < 1:
        raise ConfigurationError("shards and threads must be >= 1", "run.shards")
    if not dt > 0:
        raise ConfigurationError("dt must be positive", "run.dt")
    launch = np.asarray(launch, dtype=float)
    if not bool(domain.contains(launch[None, :])[0]):
        raise DomainError(f"launch point {tuple(launch)} is not strictly inside the domain")
    n_steps = step_count(horizon, dt, "run.horizon")
    snap_steps: dict[int, list[int]] = {}
    for k, tau in enumerate(grid.snapshot_times):
        s = step_count(tau, dt, "grid.snapshots")
        if s > n_steps:
            raise ConfigurationError(f"snapshot {tau!r} lies beyond the horizon {horizon!r}", "grid.snapshots")
        snap_steps.setdefault(s, []).append(k)

    audit = SwarmAudit(launch_total=float(n_walkers))
    swarm = WalkerSwarm.launch(launch, n_walkers)
    result = SwarmResult(grid, audit, swarm)
    if n_walkers == 0:
        return result

    shards = min(shards, n_walkers)
    bounds = _shard_bounds(n_walkers, shards)
    streams = [RngStream(seed, s) for s in range(shards)]
    if ledger_scope == "global":
        ledgers = [WeightLedger(swarm.weights, None, m)]
        owner = [0] * shards
    else:
        ledgers = [WeightLedger(swarm.weights, np.arange(a, b), m) for a, b in bounds]
        owner = list(range(shards))
    sign = -1.0 if model.direction == BACKWARD else 1.0
    absorbed_total = 0.0

    def capture(step):
        for k in snap_steps.get(step, ()):
            accumulate_snapshot(swarm.positions, swarm.weights, grid, k, alive=swarm.alive)
            if keep_snapshots:
                result.snapshots[k] = swarm.copy()

    def advance(s: int, t: float) -> np.ndarray:
        a, b = bounds[s]
        z = streams[s].normals(2 * (b - a)).reshape(-1, 2)
        alive = swarm.alive[a:b]
        if alive.all():
            idx = slice(a, b)
            zs = z
        else:
            idx = np.arange(a, b)[alive]
            if idx.size == 0:
                return idx
            zs = z[idx - a]
        p0 = swarm.positions[idx]
        p1 = em_step_batch(p0, t, dt, model, zs)
        if domain.segment_names:
            p1, dead = resolve_boundary(p0, p1, domain, model.diffusion_at(t), dt, streams[s])
        else:
            dead = np.zeros(p1.shape[0], dtype=bool)
        swarm.positions[idx] = p1
        return np.arange(a, b)[dead] if isinstance(idx, slice) else idx[dead]

    audit.record(swarm, 0.0, 0, 0)
    capture(0)
    pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 and shards > 1 else None
    try:
        for step in range(1, n_steps + 1):
            t = launch_time + sign * (step - 1) * dt
            if pool is not None:
                dead_lists = list(pool.map(lambda s: advance(s, t), range(shards)))
            else:
                dead_lists = [advance(s, t) for s in range(shards)]
            n_abs = n_split = 0
            for s, dead in enumerate(dead_lists):
                if dead.size == 0:
                    continue
                n_abs += dead.size
                w_dead = float(np.sum(swarm.weights[dead]))
                absorbed_total += w_dead
                if respawn_on:
                    ledger = ledgers[owner[s]]
                    try:
                        n_split += absorb_and_split(swarm, ledger, dead)
                    except SwarmExtinctionError as exc:
                        audit.record(swarm, absorbed_total, n_abs, n_split)
                        raise SwarmExtinctionError(str(exc), audit) from exc
                else:
                    swarm.alive[dead] = False
            if respawn_on:
                for ledger in ledgers:
                    maybe_reorder(ledger, step)
            audit.record(swarm, absorbed_total, n_abs, n_split)
            capture(step)
    finally:
        if pool is not None:
            pool.shutdown()
    return result
