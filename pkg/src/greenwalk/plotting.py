"""Heat-map figures of Green's-function fields, written straight to files.

Figures are built on :class:`matplotlib.figure.Figure` with the Agg canvas,
so no interactive backend or global pyplot state is involved.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

from .estimate import GreensField

_SAVE = dict(dpi=110, metadata={"Software": None})


def _panel(fig, ax, fld: GreensField, title: str, cmap="viridis", values=None, **kw):
    vals = fld.values if values is None else values
    im = ax.imshow(vals, origin="lower", extent=fld.extents, cmap=cmap, aspect="auto", **kw)
    ax.set_title(title, fontsize=9)
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    fig.colorbar(im, ax=ax, shrink=0.85)


def plot_field(fld: GreensField, path, title: str | None = None) -> Path:
    """Single heat map of ``fld``."""
    fig = Figure(figsize=(4.6, 3.8))
    FigureCanvasAgg(fig)
    ax = fig.add_subplot(1, 1, 1)
    _panel(fig, ax, fld, title or f"t = {fld.time:g}")
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, **_SAVE)
    return path


def plot_comparison(est: GreensField, ref: GreensField, path, floor_fraction: float = 0.1,
                    title: str | None = None) -> Path:
    """Estimate, reference and masked relative error side by side."""
    fig = Figure(figsize=(12.0, 3.6))
    FigureCanvasAgg(fig)
    axes = fig.subplots(1, 3)
    vmax = float(max(est.values.max(), ref.values.max()))
    _panel(fig, axes[0], est, "estimate", vmin=0.0, vmax=vmax)
    _panel(fig, axes[1], ref, "reference", vmin=0.0, vmax=vmax)
    mask = ref.values >= floor_fraction * ref.values.max()
    rel = np.full(ref.values.shape, np.nan)
    rel[mask] = (est.values[mask] - ref.values[mask]) / ref.values[mask]
    lim = float(np.nanmax(np.abs(rel))) if mask.any() else 1.0
    _panel(fig, axes[2], ref, "relative error (masked)", cmap="RdBu_r", values=rel, vmin=-lim, vmax=lim)
    if title:
        fig.suptitle(title, fontsize=10)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, **_SAVE)
    return path


def plot_audit(audit, path) -> Path:
    """Alive count and total weight against step index."""
    fig = Figure(figsize=(6.0, 3.4))
    FigureCanvasAgg(fig)
    ax = fig.add_subplot(1, 1, 1)
    steps = np.arange(len(audit.total_weight))
    ax.plot(steps, audit.total_weight, label="total weight")
    ax.plot(steps, audit.alive, label="alive walkers", linestyle="--")
    ax.set_xlabel("step")
    ax.legend(fontsize=8)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, **_SAVE)
    return path
