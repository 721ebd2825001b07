"""Walker state containers."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class WalkerState:
    """A single walker: position, weight in (0, 1] and an alive flag."""

    position: tuple[float, float]
    weight: float = 1.0
    alive: bool = True


@dataclass
class WalkerSwarm:
    """Struct-of-arrays storage for ``n`` walkers.

    ``positions`` has shape ``(n, 2)``; ``weights`` and ``alive`` have shape
    ``(n,)``. Launch weights are 1 and only ever halve.
    """

    positions: np.ndarray
    weights: np.ndarray
    alive: np.ndarray
    launch_total: float = field(default=0.0)

    @classmethod
    def launch(cls, point, n: int) -> "WalkerSwarm":
        pos = np.empty((n, 2), dtype=float)
        pos[:] = np.asarray(point, dtype=float)
        return cls(pos, np.ones(n), np.ones(n, dtype=bool), float(n))

    def __len__(self) -> int:
        return self.weights.shape[0]

    @property
    def n_alive(self) -> int:
        return int(np.count_nonzero(self.alive))

    def total_weight(self) -> float:
        return float(np.sum(self.weights[self.alive]))

    def walker(self, i: int) -> WalkerState:
        x, y = self.positions[i]
        return WalkerState((float(x), float(y)), float(self.weights[i]), bool(self.alive[i]))

    def copy(self) -> "WalkerSwarm":
        return WalkerSwarm(self.positions.copy(), self.weights.copy(), self.alive.copy(), self.launch_total)
