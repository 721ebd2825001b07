"""Interrogation grids, the naive density estimator, area-averaging smoothing
and error metrics.

Cell ``(j, i)`` of a grid covers ``[x_i, x_{i+1}) x [y_j, y_{j+1})``; arrays
are stored row-major with ``j`` (the y index) first.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy import ndimage

from .errors import ConfigurationError, SmoothingDegenerateError, UndefinedMetricError

SQUARE = "square"
CIRCULAR = "circular"
DEFAULT_N_CAP = 20
DEFAULT_FLOOR_FRACTION = 1e-3


@dataclass
class InterrogationGrid:
    """Uniform cell grid with one accumulated-weight array per snapshot.

    ``snapshot_times`` are elapsed times since launch (backward time for
    backward runs, forward time for forward runs), sorted ascending.
    ``cells`` has shape ``(n_snapshots, ny, nx)``.
    """

    x_min: float
    x_max: float
    y_min: float
    y_max: float
    nx: int
    ny: int
    snapshot_times: tuple = ()
    cells: np.ndarray = None
    labels: tuple = ()

    def __post_init__(self):
        if not (self.nx >= 1 and self.ny >= 1):
            raise ConfigurationError("cell counts must be >= 1", "grid")
        if not (self.x_max > self.x_min and self.y_max > self.y_min):
            raise ConfigurationError("grid extents must be increasing", "grid")
        times = tuple(float(t) for t in self.snapshot_times)
        if any(b < a for a, b in zip(times, times[1:])):
            raise ConfigurationError("snapshot times must be sorted", "grid.snapshots")
        if any(t < 0 for t in times):
            raise ConfigurationError("snapshot times must be non-negative", "grid.snapshots")
        self.snapshot_times = times
        if self.cells is None:
            self.cells = np.zeros((len(times), self.ny, self.nx))
        if not self.labels:
            self.labels = times

    @property
    def extents(self) -> tuple[float, float, float, float]:
        return (self.x_min, self.x_max, self.y_min, self.y_max)

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / self.nx

    @property
    def dy(self) -> float:
        return (self.y_max - self.y_min) / self.ny

    @property
    def dA(self) -> float:
        return self.dx * self.dy

    @property
    def x_edges(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.nx + 1)

    @property
    def y_edges(self) -> np.ndarray:
        return np.linspace(self.y_min, self.y_max, self.ny + 1)

    def centers(self) -> tuple[np.ndarray, np.ndarray]:
        """Cell centroid coordinates as two ``(ny, nx)`` arrays."""
        xc = self.x_min + (np.arange(self.nx) + 0.5) * self.dx
        yc = self.y_min + (np.arange(self.ny) + 0.5) * self.dy
        return np.meshgrid(xc, yc)

    def empty_like(self) -> "InterrogationGrid":
        return InterrogationGrid(*self.extents, self.nx, self.ny, self.snapshot_times, labels=self.labels)

    def same_geometry(self, other) -> bool:
        return (self.nx, self.ny) == (other.nx, other.ny) and np.allclose(
            self.extents, other.extents, rtol=1e-12, atol=0.0)


@dataclass
class GreensField:
    """Green's function values on a grid at one snapshot time.

    ``values`` has shape ``(ny, nx)``; ``meta`` carries provenance
    (walker count, dt, cell area, respawn flag, window, seed, ...).
    """

    x_min: float
    x_max: float
    y_min: float
    y_max: float
    nx: int
    ny: int
    time: float
    values: np.ndarray
    meta: dict = field(default_factory=dict)

    @classmethod
    def on_grid(cls, grid: InterrogationGrid, time: float, values, **meta) -> "GreensField":
        return cls(*grid.extents, grid.nx, grid.ny, float(time), np.asarray(values, dtype=float), dict(meta))

    @property
    def extents(self):
        return (self.x_min, self.x_max, self.y_min, self.y_max)

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / self.nx

    @property
    def dy(self) -> float:
        return (self.y_max - self.y_min) / self.ny

    @property
    def dA(self) -> float:
        return self.dx * self.dy

    def centers(self):
        xc = self.x_min + (np.arange(self.nx) + 0.5) * self.dx
        yc = self.y_min + (np.arange(self.ny) + 0.5) * self.dy
        return np.meshgrid(xc, yc)

    def same_geometry(self, other) -> bool:
        return (self.nx, self.ny) == (other.nx, other.ny) and np.allclose(
            self.extents, other.extents, rtol=1e-12, atol=0.0)

    def with_values(self, values, **meta) -> "GreensField":
        return replace(self, values=np.asarray(values, dtype=float), meta={**self.meta, **meta})

    def cell_index(self, point) -> tuple[int, int]:
        """(j, i) of the half-open cell containing ``point``."""
        i = int(np.searchsorted(np.linspace(self.x_min, self.x_max, self.nx + 1), point[0], side="right") - 1)
        j = int(np.searchsorted(np.linspace(self.y_min, self.y_max, self.ny + 1), point[1], side="right") - 1)
        if not (0 <= i < self.nx and 0 <= j < self.ny):
            raise ValueError(f"point {tuple(point)} lies outside the grid")
        return j, i


@dataclass
class SmoothingConfig:
    """Area-averaging settings.

    With a ``reference`` the half-width is chosen from ``0..n_cap`` by
    minimizing the mean absolute deviation; without one ``fixed_width`` is
    applied as given.
    """

    window_shape: str = SQUARE
    n_cap: int = DEFAULT_N_CAP
    reference: GreensField | None = None
    fixed_width: int | None = None

    def __post_init__(self):
        if self.window_shape not in (SQUARE, CIRCULAR):
            raise ConfigurationError(f"unknown window shape {self.window_shape!r}", "smoothing.window")
        if self.n_cap < 0:
            raise ConfigurationError("n_cap must be >= 0", "smoothing.n_cap")

    @property
    def candidates(self) -> range:
        return range(0, self.n_cap + 1)


def _bin_indices(positions, grid):
    x, y = positions[:, 0], positions[:, 1]
    i = np.searchsorted(grid.x_edges, x, side="right") - 1
    j = np.searchsorted(grid.y_edges, y, side="right") - 1
    ok = (i >= 0) & (i < grid.nx) & (j >= 0) & (j < grid.ny)
    return i, j, ok


def accumulate_snapshot(positions, weights, grid: InterrogationGrid, snapshot: int, alive=None) -> InterrogationGrid:
    """Add each alive walker's weight to the half-open cell containing it.

    Walkers outside the grid extents are skipped. Updates ``grid`` in place
    and returns it.
    """
    if not 0 <= snapshot < len(grid.snapshot_times):
        raise IndexError(f"snapshot index {snapshot} out of range")
    positions = np.asarray(positions, dtype=float).reshape(-1, 2)
    weights = np.broadcast_to(np.asarray(weights, dtype=float), positions.shape[:1])
    if alive is not None:
        positions, weights = positions[alive], weights[alive]
    i, j, ok = _bin_indices(positions, grid)
    flat = j[ok] * grid.nx + i[ok]
    grid.cells[snapshot] += np.bincount(flat, weights=weights[ok], minlength=grid.nx * grid.ny).reshape(grid.ny, grid.nx)
    return grid


def naive_estimate(grid: InterrogationGrid, snapshot: int, n_walkers: int, **meta) -> GreensField:
    """G = W / (N dA) per cell."""
    if n_walkers <= 0:
        raise ValueError("n_walkers must be positive")
    values = grid.cells[snapshot] / (n_walkers * grid.dA)
    return GreensField.on_grid(grid, grid.labels[snapshot], values, n_walkers=int(n_walkers), dA=grid.dA, **meta)


def apply_decay(fld: GreensField, gamma: float, tau: float) -> GreensField:
    """Multiply every value by exp(-gamma * tau)."""
    if gamma < 0 or tau < 0:
        raise ValueError("gamma and tau must be non-negative")
    if gamma == 0.0:
        return fld.with_values(fld.values.copy())
    return fld.with_values(fld.values * np.exp(-gamma * tau), decay=gamma)


def to_greens(fld: GreensField, elapsed: float) -> GreensField:
    """Green's function from a propagator: G = H(elapsed) K (zero before the impulse)."""
    if elapsed < 0:
        return fld.with_values(np.zeros_like(fld.values))
    return fld.with_values(fld.values.copy())


def _window_caps(fld: GreensField, domain, shape: str) -> np.ndarray:
    """Largest half-width per cell whose window stays inside the domain and grid."""
    xc, yc = fld.centers()
    inside = domain.contains(np.column_stack([xc.ravel(), yc.ravel()])).reshape(fld.ny, fld.nx)
    padded = np.pad(inside, 1, constant_values=False)
    if shape == SQUARE:
        dist = ndimage.distance_transform_cdt(padded, metric="chessboard")[1:-1, 1:-1]
        caps = dist - 1
    else:
        dist = ndimage.distance_transform_edt(padded)[1:-1, 1:-1]
        caps = np.ceil(dist).astype(int) - 1
    return np.where(inside, np.maximum(caps, 0), 0)


def _disc(r: int) -> np.ndarray:
    o = np.arange(-r, r + 1)
    return (o[:, None] ** 2 + o[None, :] ** 2 <= r * r).astype(float)


def _window_means(values: np.ndarray, widths, shape: str) -> np.ndarray:
    out = np.empty((len(widths),) + values.shape)
    for k, r in enumerate(widths):
        if r == 0:
            out[k] = values
        elif shape == SQUARE:
            out[k] = ndimage.uniform_filter(values, size=2 * r + 1, mode="constant")
        else:
            kern = _disc(r)
            out[k] = ndimage.correlate(values, kern / kern.sum(), mode="constant")
    return out


def smooth_at(fld: GreensField, a: int, domain, shape: str = SQUARE) -> GreensField:
    """Window-mean smoothing at one half-width, clipped near boundaries."""
    caps = _window_caps(fld, domain, shape)
    eff = np.minimum(a, caps)
    widths = sorted(set(np.unique(eff).tolist()))
    means = _window_means(fld.values, widths, shape)
    pick = np.searchsorted(widths, eff)
    vals = np.take_along_axis(means, pick[None], axis=0)[0]
    return fld.with_values(vals, window=int(a), window_shape=shape)


def smooth_field(fld: GreensField, config: SmoothingConfig, domain) -> tuple[GreensField, int]:
    """Area-average ``fld`` and return the smoothed field with the half-width used.

    With ``config.reference`` set, every half-width in ``0..n_cap`` is tried
    and the one with the smallest :func:`sigma_g` against the reference wins
    (lowest width on ties). Otherwise ``config.fixed_width`` is applied.
    """
    shape = config.window_shape
    ref = config.reference
    if ref is None:
        if config.fixed_width is None:
            raise ConfigurationError("smoothing without a reference needs a fixed window width",
                                     "smoothing.fixed_width")
        return smooth_at(fld, int(config.fixed_width), domain, shape), int(config.fixed_width)
    if not fld.same_geometry(ref):
        raise ConfigurationError("reference grid geometry differs from the estimate", "smoothing.reference")
    caps = _window_caps(fld, domain, shape)
    top = min(config.n_cap, int(caps.max()))
    widths = list(range(top + 1))
    means = _window_means(fld.values, widths, shape)
    best_a, best_s, best_vals = 0, np.inf, fld.values
    for a in config.candidates:
        eff = np.minimum(min(a, top), caps)
        vals = np.take_along_axis(means, eff[None], axis=0)[0]
        try:
            s = _sigma(vals, ref.values)
        except UndefinedMetricError as exc:
            raise SmoothingDegenerateError("no cell to score (estimate and reference both zero)") from exc
        if s < best_s:
            best_a, best_s, best_vals = a, s, vals
    return fld.with_values(best_vals, window=int(best_a), window_shape=shape, sigma_g=float(best_s)), best_a


def _sigma(est: np.ndarray, ref: np.ndarray) -> float:
    mask = ~((est == 0) & (ref == 0))
    m = int(np.count_nonzero(mask))
    if m == 0:
        raise UndefinedMetricError("sigma_G undefined: estimate and reference are both zero everywhere")
    return float(np.sum(np.abs(est[mask] - ref[mask])) / m)


def sigma_g(est: GreensField, ref: GreensField) -> float:
    """Mean absolute deviation over cells where estimate and reference are not both zero."""
    if not est.same_geometry(ref):
        raise ConfigurationError("grid geometry mismatch", "compare")
    return _sigma(est.values, ref.values)


def support_mask(exact: GreensField, floor_fraction: float = DEFAULT_FLOOR_FRACTION) -> np.ndarray:
    peak = float(np.max(exact.values))
    if not peak > 0:
        raise UndefinedMetricError("exact field is identically zero")
    return (exact.values >= floor_fraction * peak) & (exact.values > 0)


def emax(est: GreensField, exact: GreensField, floor_fraction: float = DEFAULT_FLOOR_FRACTION) -> float:
    """Maximum relative error over cells where exact >= floor_fraction * max(exact)."""
    if not 0 <= floor_fraction < 1:
        raise ValueError("floor_fraction must lie in [0, 1)")
    if not est.same_geometry(exact):
        raise ConfigurationError("grid geometry mismatch", "compare")
    mask = support_mask(exact, floor_fraction)
    ex = exact.values[mask]
    return float(np.max(np.abs(est.values[mask] - ex) / ex))


def grid_from_swarm_extent(positions, weights=None, alive=None) -> tuple[float, float, float, float]:
    """Extents ``(0, mu_x + sigma_x, 0, mu_y + sigma_y)`` from weighted swarm statistics."""
    pos = np.asarray(positions, dtype=float).reshape(-1, 2)
    w = np.ones(pos.shape[0]) if weights is None else np.asarray(weights, dtype=float)
    if alive is not None:
        pos, w = pos[alive], w[alive]
    if pos.shape[0] == 0 or not np.sum(w) > 0:
        raise ValueError("swarm is empty")
    mu = np.average(pos, axis=0, weights=w)
    sd = np.sqrt(np.average((pos - mu) ** 2, axis=0, weights=w))
    hi = mu + sd
    return (0.0, float(hi[0]), 0.0, float(hi[1]))
