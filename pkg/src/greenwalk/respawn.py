"""Weighted walker respawning.

When a walker is absorbed at a Dirichlet wall, its slot is refilled by
splitting the heaviest in-domain walker into two half-weight copies at the
same position. The walker count stays at N, total weight falls by exactly the
absorbed weight, and every weight stays a power of two.

The heaviest walker is looked up in a descending ``order`` that is refreshed
every ``m`` steps. Between refreshes the order may be stale: selection walks
it from the front and skips walkers that are dead or were already split (or
cloned) since the last refresh.
"""

from __future__ import annotations

import numpy as np

from .errors import PreconditionError, SwarmExtinctionError
from .swarm import WalkerSwarm

DEFAULT_REORDER_INTERVAL = 10


class WeightLedger:
    """Weight bookkeeping for one set of walker slots (a shard or the whole swarm).

    Parameters
    ----------
    weights : ndarray
        The swarm's weight array; the ledger reads it and never copies it.
    indices : ndarray of int, optional
        Slots this ledger manages (default: all).
    m : int
        Reorder interval in steps.
    """

    def __init__(self, weights: np.ndarray, indices=None, m: int = DEFAULT_REORDER_INTERVAL) -> None:
        if m < 1:
            raise ValueError("reorder interval m must be >= 1")
        self.weights = weights
        self.indices = np.arange(weights.shape[0]) if indices is None else np.asarray(indices, dtype=np.int64)
        self.m = int(m)
        self.split_count = 0
        self.absorbed_weight = 0.0
        self._used = np.zeros(weights.shape[0], dtype=bool)
        self._dirty = True
        self.order = self.indices.copy()
        self._cursor = 0
        self.reorder()

    def reorder(self) -> None:
        """Sort managed slots by weight, descending; ties go to the lower index."""
        w = self.weights[self.indices]
        self.order = self.indices[np.argsort(-w, kind="stable")]
        self._cursor = 0
        self._used[self.indices] = False
        self._dirty = False

    def next_max(self, alive: np.ndarray) -> int:
        """Slot of the current heaviest alive, unsplit walker (stale-order lookup)."""
        for attempt in range(2):
            order, used = self.order, self._used
            c = self._cursor
            while c < order.shape[0]:
                j = int(order[c])
                if alive[j] and not used[j]:
                    self._cursor = c
                    return j
                c += 1
            self._cursor = c
            # order exhausted between refreshes: refresh early
            self.reorder()
        raise SwarmExtinctionError("no alive walker left to split")

    def mark_split(self, *slots: int) -> None:
        for s in slots:
            self._used[s] = True
        self._dirty = True


def absorb_and_split(swarm: WalkerSwarm, ledger: WeightLedger, absorbed_ids) -> int:
    """Remove absorbed walkers and refill each slot by splitting the heaviest walker.

    Absorptions are handled in ascending slot order and the heaviest walker
    is re-selected after every split. The swarm and ledger are updated in
    place. Returns the number of splits performed.
    """
    ids = np.unique(np.asarray(absorbed_ids, dtype=np.int64))
    if ids.size == 0:
        return 0
    alive, w, pos = swarm.alive, swarm.weights, swarm.positions
    if not alive[ids].all():
        raise PreconditionError("absorbed walkers must be alive")
    absorbed = float(np.sum(w[ids]))
    alive[ids] = False
    ledger.absorbed_weight += absorbed
    if not alive[ledger.indices].any():
        raise SwarmExtinctionError(f"all {ids.size} remaining walkers were absorbed in one step")
    for k in ids.tolist():
        j = ledger.next_max(alive)
        half = w[j] * 0.5
        w[j] = half
        w[k] = half
        pos[k] = pos[j]
        alive[k] = True
        ledger.mark_split(j, k)
        ledger.split_count += 1
    return int(ids.size)


def maybe_reorder(ledger: WeightLedger, step_index: int) -> WeightLedger:
    """Refresh the descending order when ``step_index`` is a multiple of ``m``."""
    if step_index % ledger.m == 0 and ledger._dirty:
        ledger.reorder()
    return ledger
