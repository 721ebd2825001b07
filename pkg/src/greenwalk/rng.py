"""Counter-based random streams for reproducible walker swarms.

Every stream is a Philox-4x64 generator keyed by ``(seed, stream_id)``.
The key fixes the sequence, and the position inside it is a plain counter of
64-bit words consumed. Two streams with different ids share no state, so
shards can be stepped on separate threads and still replay bit-for-bit.

Normals come from the inverse normal CDF applied to one uniform word each,
so every normal variate consumes exactly one counter unit.
"""

from __future__ import annotations

import numpy as np
from scipy.special import ndtri

__all__ = ["RngStream", "make_streams", "standard_normal"]

_MASK64 = (1 << 64) - 1
_WORDS_PER_BLOCK = 4  # Philox4x64 emits four words per counter increment
_HALF_ULP = 2.0**-54


class RngStream:
    """One independent, replayable sequence of random words.

    Parameters
    ----------
    seed : int
        Run seed (64-bit).
    stream_id : int
        Stream index (64-bit); one per shard in swarm runs.
    counter : int
        Number of 64-bit words already consumed. A stream rebuilt at the same
        ``(seed, stream_id, counter)`` returns the same next values.
    """

    def __init__(self, seed: int, stream_id: int, counter: int = 0) -> None:
        if counter < 0:
            raise ValueError("counter must be non-negative")
        self.seed = int(seed) & _MASK64
        self.stream_id = int(stream_id) & _MASK64
        bitgen = np.random.Philox(key=np.array([self.seed, self.stream_id], dtype=np.uint64))
        blocks, rest = divmod(int(counter), _WORDS_PER_BLOCK)
        if blocks:
            bitgen.advance(blocks)
        if rest:
            bitgen.random_raw(rest)
        self._gen = np.random.Generator(bitgen)
        self.counter = int(counter)

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id}, counter={self.counter})"

    def copy(self) -> "RngStream":
        return RngStream(self.seed, self.stream_id, self.counter)

    def uniforms(self, n: int) -> np.ndarray:
        """Return ``n`` uniforms in the open interval (0, 1)."""
        # random() yields k / 2**53; the half-ulp shift keeps 0 out of ndtri
        u = self._gen.random(n) + _HALF_ULP
        self.counter += n
        return u

    def normals(self, n: int) -> np.ndarray:
        """Return ``n`` standard-normal variates, one word each."""
        return ndtri(self.uniforms(n))


def make_streams(seed: int, n: int) -> list[RngStream]:
    """Build ``n`` streams with ids ``0..n-1`` for the given seed."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return [RngStream(seed, i) for i in range(n)]


def standard_normal(stream: RngStream) -> float:
    """Draw one standard normal, advancing the stream counter by one."""
    return float(stream.normals(1)[0])
