"""Monte Carlo Green's functions from random-walker swarms.

Walkers are launched from a response point (backward mode) or an impulse
point (forward mode), stepped with Euler–Maruyama under a diagonal
advection-diffusion model, absorbed or reflected at walls, respawned by
weight splitting, and binned on an interrogation grid. The binned weights
give Green's-function estimates that can be area-averaged and compared
against analytic references.
"""

from __future__ import annotations

from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # source checkout without installation
    __version__ = "0.1.0"

from .analytic import (
    GroundwaterParams, MagicRuleProblem, SeriesParams, gf_disk_dirichlet, gf_free_space, gf_groundwater,
    gf_square_dirichlet, magic_rule_solve,
)
from .estimate import (
    GreensField, InterrogationGrid, SmoothingConfig, accumulate_snapshot, apply_decay, emax,
    grid_from_swarm_extent, naive_estimate, sigma_g, smooth_field, to_greens,
)
from .geometry import BCKind, Domain, StepOutcome, absorb, classify_step, reflect, robin_interact
from .params import ParamPlan, pool_runs, predicted_variation, recommended_dt, walkers_for_variation
from .respawn import WeightLedger, absorb_and_split, maybe_reorder
from .rng import RngStream, make_streams, standard_normal
from .sde import SwarmAudit, TransportModel, WalkerState, WalkerSwarm, em_step, simulate_swarm

__all__ = [
    "BCKind", "Domain", "GreensField", "GroundwaterParams", "InterrogationGrid", "MagicRuleProblem",
    "ParamPlan", "RngStream", "SeriesParams", "SmoothingConfig", "StepOutcome", "SwarmAudit",
    "TransportModel", "WalkerState", "WalkerSwarm", "WeightLedger", "absorb", "absorb_and_split",
    "accumulate_snapshot", "apply_decay", "classify_step", "em_step", "emax", "gf_disk_dirichlet",
    "gf_free_space", "gf_groundwater", "gf_square_dirichlet", "grid_from_swarm_extent", "magic_rule_solve",
    "make_streams", "maybe_reorder", "naive_estimate", "pool_runs", "predicted_variation", "recommended_dt",
    "reflect", "robin_interact", "sigma_g", "simulate_swarm", "smooth_field", "standard_normal", "to_greens",
    "walkers_for_variation",
]
