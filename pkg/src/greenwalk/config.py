"""Run configuration: YAML files validated into a :class:`RunConfig`.

All quantities are dimensionless. Snapshot times are forward times ``t'``:
a backward run launched at response time ``T`` records elapsed time
``T - t'``; a forward run launched at impulse time ``t0`` records ``t' - t0``.

Example::

    seed: 7
    run: {mode: backward, launch: [0.5, 0.5], launch_time: 2.0,
          n_walkers: 100000, dt: 1.0e-3, respawn: true}
    model: {kind: constant, diffusion: 0.05}
    domain: {shape: rectangle, boundary: dirichlet}
    grid: {extents: [0, 1, 0, 1], nx: 50, ny: 50, snapshots: [1.0]}
    reference: {kind: square, floor_fraction: 0.1}
    smoothing: {window: square, n_cap: 20}
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .analytic import GroundwaterParams, SeriesParams
from .errors import ConfigurationError
from .geometry import Domain
from .sde import BACKWARD, FORWARD, TransportModel, step_count

SECTIONS = {"seed", "run", "model", "domain", "grid", "reference", "smoothing", "solve", "params", "output"}


@dataclass
class GridSpec:
    extents: tuple | None
    nx: int
    ny: int
    snapshots: tuple
    pilot: dict = field(default_factory=dict)


@dataclass
class RunConfig:
    seed: int
    mode: str
    launch: tuple
    launch_time: float
    n_walkers: int
    dt: float
    horizon: float
    respawn: bool
    reorder_interval: int
    ledger_scope: str
    shards: int
    threads: int
    model: TransportModel
    domain: Domain
    grid: GridSpec
    reference: dict
    smoothing: dict
    solve: dict
    plan: dict
    raw: dict

    def elapsed(self, t_forward: float) -> float:
        """Elapsed walker time for a forward-time snapshot label."""
        return self.launch_time - t_forward if self.mode == BACKWARD else t_forward - self.launch_time


def _get(d: dict, key: str, path: str, default=None, required=False):
    if not isinstance(d, dict):
        raise ConfigurationError("expected a mapping", path)
    if key not in d:
        if required:
            raise ConfigurationError("missing required key", f"{path}.{key}" if path else key)
        return default
    return d[key]


def _num(v, path, lo=None, strict_lo=None, integer=False):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigurationError(f"expected a number, got {v!r}", path)
    if integer and int(v) != v:
        raise ConfigurationError(f"expected an integer, got {v!r}", path)
    if not np.isfinite(v):
        raise ConfigurationError("must be finite", path)
    if lo is not None and v < lo:
        raise ConfigurationError(f"must be >= {lo}", path)
    if strict_lo is not None and not v > strict_lo:
        raise ConfigurationError(f"must be > {strict_lo}", path)
    return int(v) if integer else float(v)


def _vec2(v, path):
    if not (isinstance(v, (list, tuple)) and len(v) == 2):
        raise ConfigurationError("expected a pair of numbers", path)
    return tuple(_num(x, f"{path}[{i}]") for i, x in enumerate(v))


def _diffusion(v, path):
    """Scalar, diagonal pair, or 2x2 matrix (must be diagonal)."""
    if isinstance(v, (list, tuple)) and len(v) == 2 and all(isinstance(r, (list, tuple)) for r in v):
        m = np.array([[_num(x, f"{path}[{i}][{j}]") for j, x in enumerate(r)] for i, r in enumerate(v)])
        if m.shape != (2, 2):
            raise ConfigurationError("diffusion matrix must be 2x2", path)
        if m[0, 1] != 0 or m[1, 0] != 0:
            raise ConfigurationError("diffusion must be diagonal (off-diagonal entries are not supported)", path)
        d = (m[0, 0], m[1, 1])
    elif isinstance(v, (list, tuple)):
        d = _vec2(v, path)
    else:
        s = _num(v, path)
        d = (s, s)
    if min(d) < 0:
        raise ConfigurationError("diffusion entries must be >= 0", path)
    return d


def _model(raw: dict, mode: str) -> TransportModel:
    kind = _get(raw, "kind", "model", "constant")
    if kind == "constant":
        known = {"kind", "D0", "diffusion", "velocity", "decay"}
        _no_unknown(raw, known, "model")
        d0 = _get(raw, "D0", "model", 0.05)
        diff = _diffusion(_get(raw, "diffusion", "model", d0), "model.diffusion")
        vel = _vec2(_get(raw, "velocity", "model", [0.0, 0.0]), "model.velocity")
        decay = _num(_get(raw, "decay", "model", 0.0), "model.decay", lo=0.0)
        return TransportModel.constant(vel, diff, decay, mode)
    if kind == "groundwater":
        known = {"kind", "D0", "v0", "a1", "a2", "b1", "b2", "gamma", "m"}
        _no_unknown(raw, known, "model")
        kw = {k: _num(_get(raw, k, "model", dflt), f"model.{k}")
              for k, dflt in dict(D0=0.05, v0=0.2, a1=1.0, a2=0.0, b1=1.0, b2=0.0, gamma=0.5, m=1.0).items()}
        if kw["D0"] < 0 or kw["gamma"] < 0:
            raise ConfigurationError("D0 and gamma must be >= 0", "model")
        return TransportModel.groundwater(direction=mode, **kw)
    raise ConfigurationError(f"unknown model kind {kind!r}", "model.kind")


def _domain(raw: dict) -> Domain:
    shape = _get(raw, "shape", "domain", required=True)
    bc = _get(raw, "boundary", "domain", "dirichlet")
    try:
        if shape == "rectangle":
            ext = _get(raw, "extents", "domain", [0.0, 1.0, 0.0, 1.0])
            if not (isinstance(ext, (list, tuple)) and len(ext) == 4):
                raise ConfigurationError("expected [x_min, x_max, y_min, y_max]", "domain.extents")
            return Domain.rectangle(*[_num(e, "domain.extents") for e in ext], bc=bc)
        if shape == "disk":
            c = _vec2(_get(raw, "center", "domain", [0.5, 0.5]), "domain.center")
            r = _num(_get(raw, "radius", "domain", 0.5), "domain.radius", strict_lo=0.0)
            return Domain.disk(c, r, bc=bc)
        if shape == "quadrant":
            return Domain.quadrant(bc=_get(raw, "boundary", "domain", "neumann"))
        if shape == "unbounded":
            return Domain.unbounded()
    except ConfigurationError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(str(exc), "domain") from exc
    raise ConfigurationError(f"unknown shape {shape!r}", "domain.shape")


def _no_unknown(d: dict, known: set, path: str) -> None:
    extra = set(d) - known
    if extra:
        raise ConfigurationError(f"unknown keys {sorted(extra)}", path)


def parse_config(raw: dict, seed: int | None = None, threads: int | None = None) -> RunConfig:
    """Validate a configuration mapping; ``seed``/``threads`` override the file values."""
    if not isinstance(raw, dict):
        raise ConfigurationError("configuration must be a mapping", "")
    raw = copy.deepcopy(raw)
    _no_unknown(raw, SECTIONS, "")
    if seed is not None:
        raw["seed"] = int(seed)
    seed_v = _num(raw.get("seed", 0), "seed", lo=0, integer=True)
    run = raw.setdefault("run", {})
    if threads is not None:
        run["threads"] = int(threads)
    _no_unknown(run, {"mode", "launch", "launch_time", "n_walkers", "dt", "horizon", "respawn",
                      "reorder_interval", "ledger_scope", "shards", "threads"}, "run")
    mode = _get(run, "mode", "run", BACKWARD)
    if mode not in (BACKWARD, FORWARD):
        raise ConfigurationError(f"mode must be {BACKWARD!r} or {FORWARD!r}", "run.mode")
    launch = _vec2(_get(run, "launch", "run", required=True), "run.launch")
    launch_time = _num(_get(run, "launch_time", "run", 0.0), "run.launch_time")
    n_walkers = _num(_get(run, "n_walkers", "run", required=True), "run.n_walkers", lo=0, integer=True)
    dt = _num(_get(run, "dt", "run", required=True), "run.dt", strict_lo=0.0)
    respawn = _get(run, "respawn", "run", False)
    if not isinstance(respawn, bool):
        raise ConfigurationError("expected true/false", "run.respawn")
    m = _num(_get(run, "reorder_interval", "run", 10), "run.reorder_interval", lo=1, integer=True)
    scope = _get(run, "ledger_scope", "run", "shard")
    if scope not in ("shard", "global"):
        raise ConfigurationError("must be 'shard' or 'global'", "run.ledger_scope")
    shards = _num(_get(run, "shards", "run", 1), "run.shards", lo=1, integer=True)
    nthreads = _num(_get(run, "threads", "run", 1), "run.threads", lo=1, integer=True)

    model = _model(raw.get("model", {}), mode)
    domain = _domain(_get(raw, "domain", "", required=True))

    g = _get(raw, "grid", "", required=True)
    _no_unknown(g, {"extents", "nx", "ny", "snapshots", "pilot"}, "grid")
    ext = _get(g, "extents", "grid", required=True)
    if ext == "swarm":
        extents = None
    elif isinstance(ext, (list, tuple)) and len(ext) == 4:
        extents = tuple(_num(e, f"grid.extents[{i}]") for i, e in enumerate(ext))
        if not (extents[1] > extents[0] and extents[3] > extents[2]):
            raise ConfigurationError("extents must be increasing", "grid.extents")
    else:
        raise ConfigurationError("expected [x_min, x_max, y_min, y_max] or 'swarm'", "grid.extents")
    nx = _num(_get(g, "nx", "grid", 50), "grid.nx", lo=1, integer=True)
    ny = _num(_get(g, "ny", "grid", nx), "grid.ny", lo=1, integer=True)
    snaps = _get(g, "snapshots", "grid", required=True)
    if not isinstance(snaps, (list, tuple)) or not snaps:
        raise ConfigurationError("expected a non-empty list of forward times", "grid.snapshots")
    snaps = tuple(_num(s, f"grid.snapshots[{i}]") for i, s in enumerate(snaps))
    pilot = dict(_get(g, "pilot", "grid", {}) or {})
    _no_unknown(pilot, {"n_walkers", "dt", "time"}, "grid.pilot")
    if extents is None and "time" not in pilot:
        raise ConfigurationError("swarm-derived extents need pilot.time", "grid.pilot")

    elapsed = []
    for i, s in enumerate(snaps):
        tau = launch_time - s if mode == BACKWARD else s - launch_time
        if tau < 0:
            raise ConfigurationError(f"snapshot {s} precedes the launch in walker time", f"grid.snapshots[{i}]")
        step_count(tau, dt, f"grid.snapshots[{i}]")
        elapsed.append(tau)
    horizon = _get(run, "horizon", "run", max(elapsed))
    horizon = _num(horizon, "run.horizon", lo=0.0)
    step_count(horizon, dt, "run.horizon")
    if max(elapsed) > horizon + 1e-12:
        raise ConfigurationError("a snapshot lies beyond the horizon", "run.horizon")

    ref = dict(raw.get("reference", {}) or {})
    _no_unknown(ref, {"kind", "floor_fraction", "series"}, "reference")
    kind = ref.get("kind", "none")
    if kind not in ("none", "free", "square", "disk", "groundwater"):
        raise ConfigurationError(f"unknown reference kind {kind!r}", "reference.kind")
    ref["kind"] = kind
    ref["floor_fraction"] = _num(ref.get("floor_fraction", 1e-3), "reference.floor_fraction", lo=0.0)
    try:
        ref["series"] = SeriesParams(**(ref.get("series") or {}))
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(str(exc), "reference.series") from exc

    sm = dict(raw.get("smoothing", {}) or {})
    _no_unknown(sm, {"enabled", "window", "n_cap", "fixed_width"}, "smoothing")
    sm.setdefault("enabled", kind != "none" or sm.get("fixed_width") is not None)
    sm.setdefault("window", "square")
    if sm["window"] not in ("square", "circular"):
        raise ConfigurationError("must be 'square' or 'circular'", "smoothing.window")
    sm["n_cap"] = _num(sm.get("n_cap", 20), "smoothing.n_cap", lo=0, integer=True)
    if sm.get("fixed_width") is not None:
        sm["fixed_width"] = _num(sm["fixed_width"], "smoothing.fixed_width", lo=0, integer=True)

    return RunConfig(seed_v, mode, launch, launch_time, n_walkers, dt, horizon, respawn, m, scope,
                     shards, nthreads, model, domain, GridSpec(extents, nx, ny, snaps, pilot), ref, sm,
                     dict(raw.get("solve", {}) or {}), dict(raw.get("params", {}) or {}), raw)


def load_yaml(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config: {exc}", "--config") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"invalid YAML: {exc}", "--config") from exc
    return data or {}


def load_config(path, seed: int | None = None, threads: int | None = None) -> RunConfig:
    return parse_config(load_yaml(path), seed, threads)


def groundwater_params(cfg: RunConfig) -> GroundwaterParams:
    p = cfg.model.params
    return GroundwaterParams(D0=p["D0"], v0=p["v0"], a1=p["a1"], a2=p["a2"], b1=p["b1"], b2=p["b2"],
                             gamma=p["gamma"], m=p["m"])


# --------------------------------------------------------------------------
# convolution-solver and parameter-plan sections
# --------------------------------------------------------------------------
_SOLVE_KEYS = {"D0", "time", "source", "phi", "g", "h", "advective_flux", "advective_segments",
               "n_space", "n_time", "tolerance", "grid", "points", "series"}


def expression(text, path: str, with_time: bool = True):
    """Compile an expression in ``x, y`` (and ``t``) into a vectorised callable over (n, 2) points."""
    import sympy

    x, y, t = sympy.symbols("x y t")
    try:
        expr = sympy.sympify(str(text), locals={"x": x, "y": y, "t": t, "pi": sympy.pi, "e": sympy.E})
    except (sympy.SympifyError, TypeError, SyntaxError) as exc:
        raise ConfigurationError(f"cannot parse expression {text!r}", path) from exc
    allowed = {x, y, t} if with_time else {x, y}
    if not expr.free_symbols <= allowed:
        raise ConfigurationError(f"unknown symbols {sorted(map(str, expr.free_symbols - allowed))}", path)
    fn = sympy.lambdify((x, y, t), expr, "numpy")

    if with_time:
        def call(p, tt):
            p = np.asarray(p, dtype=float)
            return np.broadcast_to(fn(p[..., 0], p[..., 1], tt), p.shape[:-1]).astype(float)
    else:
        def call(p):
            p = np.asarray(p, dtype=float)
            return np.broadcast_to(fn(p[..., 0], p[..., 1], 0.0), p.shape[:-1]).astype(float)
    call.is_zero = bool(expr == 0)
    return call


def parse_solve(raw: dict):
    """Build ``(problem, kernel, time, points, grid)`` for the convolution solver.

    ``points`` is an ``(n, 2)`` array of evaluation points; ``grid`` is
    ``(extents, nx, ny)`` when the output is a field on the domain's
    bounding box, else None.
    """
    from .analytic import MagicRuleProblem, disk_kernel, square_kernel

    if not isinstance(raw, dict):
        raise ConfigurationError("configuration must be a mapping", "")
    domain = _domain(_get(raw, "domain", "", required=True))
    s = _get(raw, "solve", "", required=True) or {}
    _no_unknown(s, _SOLVE_KEYS, "solve")
    D0 = _num(_get(s, "D0", "solve", 0.05), "solve.D0", strict_lo=0.0)
    t = _num(_get(s, "time", "solve", required=True), "solve.time", strict_lo=0.0)
    data = {}
    for key in ("source", "g", "h", "advective_flux"):
        if key in s:
            fn = expression(s[key], f"solve.{key}")
            data[key] = None if fn.is_zero else fn
    if "phi" in s:
        fn = expression(s["phi"], "solve.phi", with_time=False)
        data["phi"] = None if fn.is_zero else fn
    segs = tuple(s.get("advective_segments", ()) or ())
    try:
        series = SeriesParams(**(s.get("series") or {}))
        problem = MagicRuleProblem(domain, D0, advective_segments=segs,
                                   n_space=_num(s.get("n_space", 64), "solve.n_space", lo=2, integer=True),
                                   n_time=_num(s.get("n_time", 64), "solve.n_time", lo=2, integer=True),
                                   tolerance=_num(s.get("tolerance", 1e-3), "solve.tolerance", strict_lo=0.0),
                                   **data)
    except ConfigurationError:
        raise
    except Exception as exc:  # precondition or series-parameter failures
        raise ConfigurationError(str(exc), "solve") from exc
    if domain.shape == "rectangle":
        kernel = square_kernel(D0, series, domain.params)
        x0, x1, y0, y1 = domain.params
    elif domain.shape == "disk":
        cx, cy, r = domain.params
        kernel = disk_kernel(D0, series, (cx, cy), r)
        x0, x1, y0, y1 = cx - r, cx + r, cy - r, cy + r
    else:
        raise ConfigurationError("the solver needs a rectangle or disk domain", "domain.shape")
    grid = None
    if "points" in s:
        pts = np.array([_vec2(p, f"solve.points[{i}]") for i, p in enumerate(s["points"])], dtype=float)
    else:
        gsec = s.get("grid", {}) or {}
        nx = _num(gsec.get("nx", 11), "solve.grid.nx", lo=1, integer=True)
        ny = _num(gsec.get("ny", nx), "solve.grid.ny", lo=1, integer=True)
        xc = x0 + (np.arange(nx) + 0.5) * (x1 - x0) / nx
        yc = y0 + (np.arange(ny) + 0.5) * (y1 - y0) / ny
        X, Y = np.meshgrid(xc, yc)
        pts = np.column_stack([X.ravel(), Y.ravel()])
        grid = ((x0, x1, y0, y1), nx, ny)
    return problem, kernel, t, pts, grid


def parse_plan(raw: dict) -> dict:
    """Validate a ``params`` section: dx, dy, D0 and a variation target."""
    p = dict(raw.get("params", {}) or {}) if isinstance(raw, dict) else {}
    _no_unknown(p, {"dx", "dy", "D0", "target"}, "params")
    out = {}
    for key in ("dx", "dy", "D0"):
        if key not in p:
            raise ConfigurationError("missing required key", f"params.{key}")
        out[key] = _num(p[key], f"params.{key}", strict_lo=0.0)
    out["target"] = _num(p.get("target", 0.05), "params.target", strict_lo=0.0)
    return out
