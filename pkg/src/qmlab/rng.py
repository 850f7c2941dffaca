"""Counter-based, splittable random streams.

Every measurement event owns an integer counter. The uniforms consumed by
event ``k`` are a pure function of ``(seed, stream, k)``: they come from the
Philox block(s) addressed by ``k`` under a key built from the seed and the
stream id. Drawing events ``[a, b)`` in one batch therefore gives exactly the
same numbers as drawing them one at a time or in disjoint shards, which is
what makes shot shards mergeable and runs bit-reproducible.
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1
_WORDS_PER_BLOCK = 4
_TO_UNIT = 2.0**-53


def _derive_stream(parent: int, tag) -> int:
    digest = hashlib.blake2b(f"{parent}/{tag!r}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


class CounterRng:
    """Random source addressed by event counter.

    Parameters
    ----------
    seed : int
        Experiment seed (any 64-bit integer).
    stream : int
        Stream id; use :meth:`split` rather than picking ids by hand.
    counter : int
        Next event counter handed out by :meth:`next_event`.
    """

    def __init__(self, seed: int, stream: int = 0, counter: int = 0):
        if counter < 0:
            raise ValueError("counter must be non-negative")
        self.seed = int(seed) & _MASK64
        self.stream = int(stream) & _MASK64
        self.counter = int(counter)

    def __repr__(self):
        return f"CounterRng(seed={self.seed}, stream={self.stream}, counter={self.counter})"

    def split(self, tag) -> "CounterRng":
        """Independent child stream, determined by ``tag`` alone."""
        return CounterRng(self.seed, _derive_stream(self.stream, tag))

    def uniforms_at(self, start: int, n_events: int, width: int = 1) -> np.ndarray:
        """Uniforms in [0, 1) for events ``start .. start + n_events - 1``.

        Returns an array of shape ``(n_events, width)``. Does not move the
        cursor.
        """
        if start < 0 or n_events < 0 or width < 1:
            raise ValueError("invalid event range")
        blocks = -(-width // _WORDS_PER_BLOCK)
        first = start * blocks
        bitgen = np.random.Philox(
            key=[self.seed, self.stream],
            counter=[first & _MASK64, first >> 64, 0, 0],
        )
        raw = bitgen.random_raw(n_events * blocks * _WORDS_PER_BLOCK)
        raw = raw.reshape(n_events, blocks * _WORDS_PER_BLOCK)[:, :width]
        return (raw >> np.uint64(11)).astype(np.float64) * _TO_UNIT

    def take(self, n_events: int, width: int = 1) -> tuple[np.ndarray, np.ndarray]:
        """Reserve the next ``n_events`` counters and return ``(counters, uniforms)``."""
        start = self.counter
        u = self.uniforms_at(start, n_events, width)
        self.counter += n_events
        return np.arange(start, start + n_events, dtype=np.int64), u

    def next_event(self, width: int = 1) -> tuple[int, np.ndarray]:
        counters, u = self.take(1, width)
        return int(counters[0]), u[0]

    def normals(self, n_events: int, width: int = 1) -> tuple[np.ndarray, np.ndarray]:
        """Standard normals by Box-Muller, ``width`` per event."""
        counters, u = self.take(n_events, 2 * width)
        radius = np.sqrt(-2.0 * np.log1p(-u[:, :width]))
        return counters, radius * np.cos(2.0 * np.pi * u[:, width:])

    def shards(self, n_events: int, n_shards: int) -> list[tuple[int, int]]:
        """Split the next ``n_events`` counters into contiguous ``(start, stop)`` ranges.

        The cursor advances past all of them; each range can be drawn with
        :meth:`uniforms_at` independently and concatenated in order.
        """
        n_shards = max(1, min(n_shards, n_events)) if n_events else 1
        edges = np.linspace(self.counter, self.counter + n_events, n_shards + 1).astype(np.int64)
        self.counter += n_events
        return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:])]


def as_rng(rng) -> CounterRng:
    """Accept a :class:`CounterRng` or an integer seed."""
    if isinstance(rng, CounterRng):
        return rng
    if isinstance(rng, (int, np.integer)):
        return CounterRng(int(rng))
    raise TypeError(f"expected CounterRng or int seed, got {type(rng).__name__}")
