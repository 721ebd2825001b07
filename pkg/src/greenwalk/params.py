"""Choosing the time step and walker count for a given interrogation grid.

The cell area is tied to the step by ``dA = D0 * dt``; the walker count is
sized so that the early-time relative variation in captured walkers,
``4 pi e^(1/4) D0 dt / (N dx dy)``, meets a target.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .estimate import InterrogationGrid

_VARIATION_CONST = 4.0 * math.pi * math.exp(0.25)


@dataclass(frozen=True)
class ParamPlan:
    dx: float
    dy: float
    dA: float
    dt: float
    n_walkers: int
    predicted_variation: float

    def as_dict(self) -> dict:
        return {"dx": self.dx, "dy": self.dy, "dA": self.dA, "dt": self.dt,
                "n_walkers": self.n_walkers, "predicted_variation": self.predicted_variation}


def recommended_dt(dA: float, D0: float) -> float:
    """Time step whose mean-square step length matches the cell area: dA / D0."""
    if not (dA > 0 and D0 > 0):
        raise ValueError("dA and D0 must be positive")
    return dA / D0


def predicted_variation(D0: float, dt: float, dx: float, dy: float, n_walkers) -> float:
    """Largest relative spatial variation in captured walkers, 4 pi e^(1/4) D0 dt / (N dx dy)."""
    if not (D0 > 0 and dt > 0 and dx > 0 and dy > 0 and n_walkers > 0):
        raise ValueError("all inputs must be positive")
    return _VARIATION_CONST * D0 * dt / (n_walkers * dx * dy)


def walkers_for_variation(target: float, D0: float, dt: float, dx: float, dy: float) -> int:
    """Smallest N whose :func:`predicted_variation` does not exceed ``target``."""
    if not target > 0:
        raise ValueError("target must be positive")
    n = max(1, math.ceil(_VARIATION_CONST * D0 * dt / (target * dx * dy)))
    # correct the floating-point estimate against the exact predicate
    while n > 1 and predicted_variation(D0, dt, dx, dy, n - 1) <= target:
        n -= 1
    while predicted_variation(D0, dt, dx, dy, n) > target:
        n += 1
    return n


def plan(dx: float, dy: float, D0: float, target: float) -> ParamPlan:
    """Full plan: dt from the cell area, then N from the variation target."""
    dA = dx * dy
    dt = recommended_dt(dA, D0)
    n = walkers_for_variation(target, D0, dt, dx, dy)
    return ParamPlan(dx, dy, dA, dt, n, predicted_variation(D0, dt, dx, dy, n))


def sigma_n_curve(tau, dt: float) -> np.ndarray:
    """Order-of-magnitude scaling (dt / tau)^(1/4) of capture variation; diagnostic only."""
    tau = np.asarray(tau, dtype=float)
    if np.any(tau <= 0) or not dt > 0:
        raise ValueError("tau and dt must be positive")
    return (dt / tau) ** 0.25


def empirical_variation(grid: InterrogationGrid, snapshot: int) -> float:
    """Relative spread (std / mean) of non-empty cell weights at one snapshot."""
    w = grid.cells[snapshot]
    w = w[w > 0]
    if w.size == 0:
        return float("nan")
    return float(np.std(w) / np.mean(w))


def pool_runs(runs, n_list) -> tuple[InterrogationGrid, int]:
    """Sum the accumulated weights of runs that share one grid; return it with the pooled N."""
    runs = list(runs)
    n_list = list(n_list)
    if not runs:
        raise ConfigurationError("no runs to pool", "pool")
    if len(runs) != len(n_list):
        raise ConfigurationError("one walker count is needed per run", "pool")
    first = runs[0]
    for r in runs[1:]:
        if not first.same_geometry(r) or r.snapshot_times != first.snapshot_times:
            raise ConfigurationError("runs must share grid geometry and snapshot times", "pool")
    pooled = first.empty_like()
    # sort per cell before summing so the result does not depend on run order
    pooled.cells = np.sort(np.stack([r.cells for r in runs]), axis=0).sum(axis=0)
    return pooled, int(sum(n_list))
