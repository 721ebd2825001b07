"""Command-line entry point: ``greenwalk <subcommand> [options]``.

Subcommands
-----------
estimate   run a walker swarm and write one field file per snapshot
reference  materialise the analytic Green's function on the run grid
smooth     area-average an existing field file
compare    report e_max, sigma_G and masked-cell count for two field files
solve      evaluate the convolution solution on points or a grid
params     print a time-step / walker-count plan

Exit codes: 0 success, 2 configuration error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .analytic import magic_rule_solve
from .config import load_yaml, parse_config, parse_plan, parse_solve, _domain
from .errors import ConfigurationError, GreenwalkError, SwarmExtinctionError
from .estimate import GreensField, SmoothingConfig, emax, sigma_g, smooth_field, support_mask
from .fieldio import read_field, sha256, write_field
from .params import plan

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


def _label(t: float) -> str:
    return f"{t:g}".replace("-", "m")


def _config_mapping(path) -> dict:
    """YAML config, or the ``config`` block of a run manifest."""
    data = load_yaml(path)
    if isinstance(data, dict) and "manifest_version" in data and "config" in data:
        return data["config"]
    return data


def _write_manifest(out: Path, command: str, config: dict, seed, parameters: dict, files) -> Path:
    outputs = {}
    for f in sorted(set(files), key=lambda p: p.name):
        outputs[f.name] = sha256(f)
        side = f.with_name(f.name + ".json")
        if side.exists():
            outputs[side.name] = sha256(side)
    manifest = {
        "manifest_version": 1,
        "version": __version__,
        "command": command,
        "seed": seed,
        "config": config,
        "parameters": parameters,
        "outputs": outputs,
    }
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=float) + "\n")
    return path


def _write_csv_table(path: Path, header, rows) -> Path:
    lines = [",".join(header)]
    for r in rows:
        lines.append(",".join(v if isinstance(v, str) else f"{v:.17g}" for v in r))
    path.write_text("\n".join(lines) + "\n")
    return path


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------
def cmd_estimate(args) -> int:
    from .pipeline import run_estimate

    raw = _config_mapping(args.config)
    cfg = parse_config(raw, args.seed, args.threads)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    try:
        run = run_estimate(cfg)
    except SwarmExtinctionError as exc:
        if exc.audit is not None:
            _write_audit(out / "audit.csv", exc.audit)
        print(f"runtime error: {exc}", file=sys.stderr)
        if exc.audit is not None:
            print(json.dumps(exc.audit.summary()), file=sys.stderr)
        return EXIT_RUNTIME
    files = []
    metric_rows = []
    for s in run.snapshots:
        lab = _label(s.label)
        files.append(write_field(out / f"estimate_t{lab}.csv", s.final))
        if s.final is not s.raw:
            files.append(write_field(out / f"raw_t{lab}.csv", s.raw))
        if s.reference is not None:
            files.append(write_field(out / f"reference_t{lab}.csv", s.reference))
        for stage, m in s.metrics.items():
            metric_rows.append([f"{s.label:g}", stage, m["emax"], m["sigma_g"], str(m["masked_cells"]),
                                str(m.get("window", 0))])
        if args.figures:
            from .plotting import plot_comparison, plot_field
            if s.reference is not None:
                plot_comparison(s.final, s.reference, out / f"estimate_t{lab}.png",
                                cfg.reference["floor_fraction"], f"t' = {s.label:g}")
            else:
                plot_field(s.final, out / f"estimate_t{lab}.png", f"t' = {s.label:g}")
    files.append(_write_audit(out / "audit.csv", run.audit))
    if metric_rows:
        files.append(_write_csv_table(out / "metrics.csv",
                                      ["time", "stage", "emax", "sigma_g", "masked_cells", "window"], metric_rows))
        for r in metric_rows:
            print(f"t'={r[0]} {r[1]}: e_max={r[2]:.4g} sigma_G={r[3]:.4g} masked={r[4]} window={r[5]}")
    if args.figures:
        from .plotting import plot_audit
        plot_audit(run.audit, out / "audit.png")
    params = {"extents": list(run.extents), "elapsed": list(run.grid.snapshot_times),
              "labels": list(run.grid.labels), "horizon": cfg.horizon, "model": cfg.model.params,
              "audit": run.audit.summary()}
    _write_manifest(out, "estimate", _snapshot(cfg.raw), cfg.seed, params, files)
    return EXIT_OK


def _snapshot(raw: dict) -> dict:
    """Config snapshot for the manifest; thread count never changes results, so drop it."""
    snap = json.loads(json.dumps(raw, default=float))
    snap.get("run", {}).pop("threads", None)
    return snap


def _write_audit(path: Path, audit) -> Path:
    rows = [[str(i), str(a), w, b, str(n), str(s)] for i, (a, w, b, n, s) in enumerate(zip(
        audit.alive, audit.total_weight, audit.absorbed_weight, audit.absorbed_count, audit.split_count))]
    return _write_csv_table(path, ["step", "alive", "total_weight", "absorbed_weight", "absorbed", "splits"], rows)


def cmd_reference(args) -> int:
    from .pipeline import build_grid, reference_field

    raw = _config_mapping(args.config)
    cfg = parse_config(raw, args.seed, args.threads)
    if cfg.reference["kind"] == "none":
        raise ConfigurationError("no reference kind configured", "reference.kind")
    grid = build_grid(cfg)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = []
    for tau, lab in zip(grid.snapshot_times, grid.labels):
        like = GreensField.on_grid(grid, lab, np.zeros((grid.ny, grid.nx)))
        ref = reference_field(cfg, like, tau)
        files.append(write_field(out / f"reference_t{_label(lab)}.csv", ref))
        if args.figures:
            from .plotting import plot_field
            plot_field(ref, out / f"reference_t{_label(lab)}.png", f"reference, t' = {lab:g}")
    _write_manifest(out, "reference", _snapshot(cfg.raw), cfg.seed,
                    {"extents": list(grid.extents), "elapsed": list(grid.snapshot_times)}, files)
    return EXIT_OK


def cmd_smooth(args) -> int:
    fld = read_field(args.input)
    raw = _config_mapping(args.config) if args.config else {}
    domain = _domain(raw["domain"]) if "domain" in raw else None
    if domain is None:
        from .geometry import Domain
        domain = Domain.unbounded()
    sm = dict(raw.get("smoothing", {}) or {})
    ref = read_field(args.reference) if args.reference else None
    window = args.window or sm.get("window", "square")
    n_cap = args.n_cap if args.n_cap is not None else int(sm.get("n_cap", 20))
    width = args.width if args.width is not None else sm.get("fixed_width")
    out_fld, a = smooth_field(fld, SmoothingConfig(window, n_cap, ref, width), domain)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = write_field(out / (Path(args.input).stem + "_smoothed.csv"), out_fld)
    print(f"window={a}")
    if args.figures:
        from .plotting import plot_field
        plot_field(out_fld, path.with_suffix(".png"), f"smoothed, a = {a}")
    return EXIT_OK


def cmd_compare(args) -> int:
    est, ref = read_field(args.estimate), read_field(args.reference)
    if not est.same_geometry(ref):
        raise ConfigurationError("grid geometry differs between the two files", "compare")
    floor = args.floor
    e, s = emax(est, ref, floor), sigma_g(est, ref)
    masked = int(np.count_nonzero(support_mask(ref, floor)))
    print("emax,sigma_g,masked_cells,floor_fraction")
    print(f"{e:.17g},{s:.17g},{masked},{floor:.17g}")
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _write_csv_table(out / "compare.csv", ["emax", "sigma_g", "masked_cells", "floor_fraction"],
                         [[e, s, str(masked), floor]])
    return EXIT_OK


def cmd_solve(args) -> int:
    raw = _config_mapping(args.config)
    problem, kernel, t, pts, grid = parse_solve(raw)
    vals = np.zeros(pts.shape[0])
    inside = problem.domain.contains(pts)
    for k in np.nonzero(inside)[0]:
        vals[k] = magic_rule_solve(problem, kernel, pts[k], t)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = []
    if grid is not None:
        ext, nx, ny = grid
        fld = GreensField(*ext, nx, ny, t, vals.reshape(ny, nx), {"kind": "solution"})
        files.append(write_field(out / f"solution_t{_label(t)}.csv", fld))
        if args.figures:
            from .plotting import plot_field
            plot_field(fld, out / f"solution_t{_label(t)}.png", f"solution, t = {t:g}")
    else:
        files.append(_write_csv_table(out / f"solution_t{_label(t)}.csv", ["x", "y", "eta"],
                                      [[p[0], p[1], v] for p, v in zip(pts, vals)]))
    for p, v in zip(pts[:5], vals[:5]):
        print(f"eta({p[0]:g}, {p[1]:g}, {t:g}) = {v:.10g}")
    _write_manifest(out, "solve", json.loads(json.dumps(raw, default=float)), None, {"time": t}, files)
    return EXIT_OK


def cmd_params(args) -> int:
    raw = _config_mapping(args.config) if args.config else {}
    sec = dict(raw.get("params", {}) or {})
    for key in ("dx", "dy", "D0", "target"):
        v = getattr(args, key if key != "D0" else "D0")
        if v is not None:
            sec[key] = v
    if "dy" not in sec and "dx" in sec:
        sec["dy"] = sec["dx"]
    p = parse_plan({"params": sec})
    result = plan(p["dx"], p["dy"], p["D0"], p["target"])
    for k, v in result.as_dict().items():
        print(f"{k}={v:.17g}" if isinstance(v, float) else f"{k}={v}")
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "params.json").write_text(json.dumps(result.as_dict(), indent=2, sort_keys=True) + "\n")
    return EXIT_OK


# --------------------------------------------------------------------------
def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="greenwalk", description="Monte Carlo Green's-function estimation.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required, help="YAML config or run manifest")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--threads", type=int, default=None, help="worker threads (never changes results)")
        p.add_argument("--out-dir", default="out", help="output directory (default: out)")
        p.add_argument("--figures", action="store_true", help="also write PNG heat maps")

    common(sub.add_parser("estimate", help="run a walker swarm"))
    common(sub.add_parser("reference", help="analytic Green's function on the run grid"))
    p = sub.add_parser("smooth", help="area-average a field file")
    common(p, config_required=False)
    p.add_argument("--input", required=True)
    p.add_argument("--reference", default=None, help="reference field for window selection")
    p.add_argument("--window", choices=["square", "circular"], default=None)
    p.add_argument("--n-cap", type=int, default=None)
    p.add_argument("--width", type=int, default=None, help="fixed half-width when no reference is given")
    p = sub.add_parser("compare", help="error metrics between two field files")
    common(p, config_required=False)
    p.set_defaults(out_dir=None)
    p.add_argument("--estimate", required=True)
    p.add_argument("--reference", required=True)
    p.add_argument("--floor", type=float, default=1e-3, help="support floor fraction (default 1e-3)")
    common(sub.add_parser("solve", help="convolution solution from a Green's function"))
    p = sub.add_parser("params", help="time-step and walker-count plan")
    common(p, config_required=False)
    p.set_defaults(out_dir=None)
    p.add_argument("--dx", type=float, default=None)
    p.add_argument("--dy", type=float, default=None)
    p.add_argument("--D0", type=float, default=None)
    p.add_argument("--target", type=float, default=None, help="target relative variation")
    return parser


COMMANDS = {"estimate": cmd_estimate, "reference": cmd_reference, "smooth": cmd_smooth,
            "compare": cmd_compare, "solve": cmd_solve, "params": cmd_params}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigurationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except GreenwalkError as exc:
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
