"""Field files: delimited text with a small header, plus a JSON sidecar.

Layout::

    # time=1
    # extents=0,1,0,1
    # nx=50 ny=50
    v(0,0),v(1,0),...        <- row j = 0 (lowest y)
    ...

Values use 17 significant digits so every double round-trips exactly.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .errors import ConfigurationError
from .estimate import GreensField

FMT = "%.17g"


def _num(v: float) -> str:
    return FMT % v


def write_field(path, fld: GreensField) -> Path:
    """Write ``fld`` to ``path`` (CSV) and ``path.json`` (metadata); return the CSV path."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [
        f"# time={_num(fld.time)}",
        "# extents=" + ",".join(_num(e) for e in fld.extents),
        f"# nx={fld.nx} ny={fld.ny}",
    ]
    lines += [",".join(_num(v) for v in row) for row in fld.values]
    path.write_text("\n".join(lines) + "\n")
    meta = {"time": fld.time, "extents": list(fld.extents), "nx": fld.nx, "ny": fld.ny, **fld.meta}
    sidecar(path).write_text(json.dumps(_jsonable(meta), indent=2, sort_keys=True) + "\n")
    return path


def sidecar(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return obj


def read_field(path) -> GreensField:
    """Read a field CSV (and its sidecar, if present)."""
    path = Path(path)
    try:
        text = path.read_text().splitlines()
    except OSError as exc:
        raise ConfigurationError(f"cannot read field file: {exc}", str(path)) from exc
    header = {}
    rows = []
    for line in text:
        if line.startswith("#"):
            for part in line[1:].split():
                key, _, val = part.partition("=")
                header[key] = val
        elif line.strip():
            rows.append([float(v) for v in line.split(",")])
    try:
        time = float(header["time"])
        extents = [float(v) for v in header["extents"].split(",")]
        nx, ny = int(header["nx"]), int(header["ny"])
    except (KeyError, ValueError) as exc:
        raise ConfigurationError(f"malformed field header: {exc}", str(path)) from exc
    values = np.array(rows, dtype=float)
    if values.shape != (ny, nx):
        raise ConfigurationError(f"expected {ny}x{nx} values, found {values.shape}", str(path))
    meta = {}
    sc = sidecar(path)
    if sc.exists():
        meta = json.loads(sc.read_text())
        for k in ("time", "extents", "nx", "ny"):
            meta.pop(k, None)
    return GreensField(*extents, nx, ny, time, values, meta)


def sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
