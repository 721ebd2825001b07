"""End-to-end estimation runs driven by a :class:`RunConfig`.

Shared by the command line and the acceptance suite: build the grid, run the
swarm, turn accumulated weights into Green's-function fields, apply decay,
and, when a reference is configured, smooth and score each snapshot.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .analytic import field_values
from .config import RunConfig, groundwater_params
from .errors import ConfigurationError
from .estimate import (
    GreensField, InterrogationGrid, SmoothingConfig, apply_decay, emax, grid_from_swarm_extent,
    naive_estimate, sigma_g, smooth_field, support_mask, to_greens,
)
from .sde import BACKWARD, SwarmAudit, simulate_swarm, step_count

_PILOT_SEED_SALT = 0x9E3779B97F4A7C15
_MASK64 = (1 << 64) - 1


@dataclass
class SnapshotResult:
    label: float
    elapsed: float
    raw: GreensField
    final: GreensField
    reference: GreensField | None = None
    window: int | None = None
    metrics: dict = field(default_factory=dict)


@dataclass
class EstimateRun:
    config: RunConfig
    grid: InterrogationGrid
    audit: SwarmAudit
    snapshots: list
    extents: tuple
    swarm: object = None


def pilot_extents(cfg: RunConfig) -> tuple:
    """Grid extents ``[0, mu + sigma]`` per axis from a pilot swarm at ``grid.pilot.time``."""
    p = cfg.grid.pilot
    n = int(p.get("n_walkers", max(1, cfg.n_walkers // 5)))
    dt = float(p.get("dt", cfg.dt))
    tau = cfg.elapsed(float(p["time"]))
    if tau <= 0:
        raise ConfigurationError("pilot time must follow the launch in walker time", "grid.pilot.time")
    horizon = step_count(tau, dt, "grid.pilot.time") * dt
    dummy = InterrogationGrid(0.0, 1.0, 0.0, 1.0, 1, 1, ())
    seed = (cfg.seed ^ _PILOT_SEED_SALT) & _MASK64
    res = simulate_swarm(cfg.launch, cfg.launch_time, n, dt, horizon, cfg.model, cfg.domain, cfg.respawn,
                         dummy, seed, shards=cfg.shards, threads=cfg.threads, ledger_scope=cfg.ledger_scope,
                         m=cfg.reorder_interval)
    return grid_from_swarm_extent(res.swarm.positions, res.swarm.weights, res.swarm.alive)


def build_grid(cfg: RunConfig, extents=None) -> InterrogationGrid:
    extents = extents or cfg.grid.extents or pilot_extents(cfg)
    pairs = sorted((cfg.elapsed(s), s) for s in cfg.grid.snapshots)
    taus = tuple(round(step_count(t, cfg.dt) * cfg.dt, 15) for t, _ in pairs)
    return InterrogationGrid(*extents, cfg.grid.nx, cfg.grid.ny, taus, labels=tuple(s for _, s in pairs))


def reference_field(cfg: RunConfig, like: GreensField, tau: float) -> GreensField | None:
    """Analytic reference on the field's grid (decay included), or None."""
    kind = cfg.reference["kind"]
    if kind == "none":
        return None
    if tau <= 0:
        raise ConfigurationError("reference needs a positive elapsed time", "grid.snapshots")
    xc, yc = like.centers()
    if kind == "groundwater":
        vals = field_values(kind, xc, yc, cfg.launch, tau, groundwater=groundwater_params(cfg),
                            launch_time=cfg.launch_time)
    else:
        mp = cfg.model.params
        if mp.get("kind") != "constant" or any(v != 0 for v in mp["velocity"]) \
                or mp["diffusion"][0] != mp["diffusion"][1]:
            raise ConfigurationError(f"{kind!r} reference needs isotropic pure diffusion", "reference.kind")
        domain = cfg.domain if kind != "free" else None
        vals = field_values(kind, xc, yc, cfg.launch, tau, D0=mp["diffusion"][0],
                            params=cfg.reference["series"], domain=domain)
        vals = vals * np.exp(-cfg.model.decay * tau)
    return like.with_values(vals, kind="reference", reference=kind, elapsed=tau)


def score(est: GreensField, ref: GreensField, floor_fraction: float) -> dict:
    return {
        "emax": emax(est, ref, floor_fraction),
        "sigma_g": sigma_g(est, ref),
        "masked_cells": int(np.count_nonzero(support_mask(ref, floor_fraction))),
        "floor_fraction": floor_fraction,
    }


def postprocess(cfg: RunConfig, grid: InterrogationGrid, k: int, smoothing: dict | None = None) -> SnapshotResult:
    """Field, reference, smoothing and metrics for snapshot ``k``."""
    sm = cfg.smoothing if smoothing is None else smoothing
    tau = grid.snapshot_times[k]
    meta = dict(seed=cfg.seed, dt=cfg.dt, respawn=cfg.respawn, mode=cfg.mode, elapsed=tau,
                shards=cfg.shards, kind="estimate")
    raw = naive_estimate(grid, k, max(cfg.n_walkers, 1), **meta)
    raw = apply_decay(to_greens(raw, tau), cfg.model.decay, tau)
    out = SnapshotResult(grid.labels[k], tau, raw, raw)
    ref = reference_field(cfg, raw, tau) if tau > 0 else None
    out.reference = ref
    ff = cfg.reference["floor_fraction"]
    if ref is not None:
        out.metrics["raw"] = score(raw, ref, ff)
    if sm.get("enabled"):
        sc = SmoothingConfig(sm["window"], sm["n_cap"], ref, sm.get("fixed_width"))
        if ref is None and sc.fixed_width is None:
            raise ConfigurationError("smoothing without a reference needs smoothing.fixed_width",
                                     "smoothing.fixed_width")
        out.final, out.window = smooth_field(raw, sc, cfg.domain)
        if ref is not None:
            out.metrics["smoothed"] = score(out.final, ref, ff)
            out.metrics["smoothed"]["window"] = out.window
    if ref is not None:
        best = out.metrics.get("smoothed", out.metrics["raw"])
        out.final = out.final.with_values(out.final.values, emax=best["emax"], sigma_g=best["sigma_g"])
    return out


def run_estimate(cfg: RunConfig, extents=None) -> EstimateRun:
    grid = build_grid(cfg, extents)
    res = simulate_swarm(cfg.launch, cfg.launch_time, cfg.n_walkers, cfg.dt, cfg.horizon, cfg.model,
                         cfg.domain, cfg.respawn, grid, cfg.seed, shards=cfg.shards, threads=cfg.threads,
                         ledger_scope=cfg.ledger_scope, m=cfg.reorder_interval)
    snaps = [postprocess(cfg, grid, k) for k in range(len(grid.snapshot_times))]
    return EstimateRun(cfg, grid, res.audit, snaps, grid.extents, res.swarm)


__all__ = ["EstimateRun", "SnapshotResult", "build_grid", "pilot_extents", "postprocess", "reference_field",
           "run_estimate", "score", "BACKWARD"]
