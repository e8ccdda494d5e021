"""Deterministic, platform-independent random streams.

The generator is a splitmix64 counter stream: draw ``i`` of seed ``s`` is
``mix64(s + (i + 1) * GOLDEN)`` where ``mix64`` is the usual xor-shift/multiply
finalizer. Because each draw depends only on (seed, counter), arbitrary spans
of the stream can be produced vectorized without carrying mutable state, and
two machines with the same seed always see the same bytes.
"""

from __future__ import annotations

import numpy as np

GOLDEN = 0x9E3779B97F4A7C15
_MASK = 0xFFFFFFFFFFFFFFFF


def _mix64(z: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        return z ^ (z >> np.uint64(31))


def derive_seed(seed: int, *tags: str) -> int:
    """Fold string tags into a seed, so named substreams never collide by accident."""
    h = seed & _MASK
    for tag in tags:
        for byte in tag.encode("utf-8"):
            h = ((h ^ byte) * 0x100000001B3) & _MASK
        h = int(_mix64(np.uint64(h)))
    return h


class SeededRng:
    """Splitmix64 stream with a cursor; identical seeds give identical streams."""

    def __init__(self, seed: int):
        self._seed = np.uint64(seed & _MASK)
        self._cursor = 0
        # Box-Muller produces pairs; the spare value is kept for the next call.
        self._spare_normal: float | None = None

    @property
    def seed(self) -> int:
        return int(self._seed)

    def spawn(self, *tags: str) -> "SeededRng":
        """Independent substream named by tags; does not advance this stream."""
        return SeededRng(derive_seed(int(self._seed), *tags))

    def next_u64(self, n: int | None = None):
        """Raw 64-bit draws; scalar int when ``n`` is None, else uint64 array."""
        if n is None:
            return int(self.next_u64(1)[0])
        counters = np.arange(self._cursor + 1, self._cursor + n + 1, dtype=np.uint64)
        self._cursor += n
        with np.errstate(over="ignore"):
            return _mix64(self._seed + counters * np.uint64(GOLDEN))

    def uniform(self, shape=(), low: float = 0.0, high: float = 1.0) -> np.ndarray:
        """Uniform f64 draws in [low, high) with 53-bit resolution."""
        shape = (shape,) if isinstance(shape, int) else tuple(shape)
        n = int(np.prod(shape)) if shape else 1
        u = (self.next_u64(n) >> np.uint64(11)).astype(np.float64) * 2.0**-53
        out = low + (high - low) * u
        return out.reshape(shape) if shape else float(out[0])

    def normal(self, shape=()) -> np.ndarray:
        """Standard normal draws via Box-Muller."""
        shape = (shape,) if isinstance(shape, int) else tuple(shape)
        n = int(np.prod(shape)) if shape else 1
        out = np.empty(n, dtype=np.float64)
        k = 0
        if self._spare_normal is not None and n > 0:
            out[0] = self._spare_normal
            self._spare_normal = None
            k = 1
        m = n - k
        if m > 0:
            pairs = (m + 1) // 2
            u1 = np.maximum(self.uniform(pairs), 2.0**-53)
            u2 = self.uniform(pairs)
            r = np.sqrt(-2.0 * np.log(u1))
            z = np.concatenate([r * np.cos(2.0 * np.pi * u2), r * np.sin(2.0 * np.pi * u2)])
            out[k:] = z[:m]
            if 2 * pairs > m:
                self._spare_normal = float(z[m])
        return out.reshape(shape) if shape else float(out[0])

    def integers(self, n: int, upper: int) -> np.ndarray:
        """n draws uniform over {0, ..., upper-1} (by 53-bit scaling; fine for small upper)."""
        return np.minimum((self.uniform(n) * upper).astype(np.int64), upper - 1)

    def choice_weighted(self, weights: np.ndarray) -> int:
        """Single categorical draw from nonnegative weights."""
        w = np.asarray(weights, dtype=np.float64)
        total = float(w.sum())
        u = self.uniform() * total
        return int(np.searchsorted(np.cumsum(w), u, side="right").clip(0, len(w) - 1))
