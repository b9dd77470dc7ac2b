"""Reproducible random streams.

Every stream is a Philox counter-based generator keyed by ``(seed, stream_id)``,
so a given pair produces the same draws on every platform. Gaussian draws use
Box-Muller on 53-bit uniforms instead of numpy's ziggurat.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1
_TWO_PI = 2.0 * np.pi
_INV_2_53 = 1.0 / 9007199254740992.0


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


class RngStream:
    """A seeded, forkable stream of random draws.

    Parameters
    ----------
    seed : int
        64-bit unsigned seed.
    stream_id : int, optional
        64-bit unsigned stream identifier. Streams with different ids are
        independent for all practical purposes.
    """

    def __init__(self, seed: int, stream_id: int = 0):
        if not (0 <= seed <= _MASK64 and 0 <= stream_id <= _MASK64):
            raise ValueError("seed and stream_id must be 64-bit unsigned integers")
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        self._bitgen = np.random.Philox(key=self.seed | (self.stream_id << 64))
        self._gen = np.random.Generator(self._bitgen)

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"

    def fork(self, stream_id: int) -> "RngStream":
        """Fresh stream with the same seed and the given id (state not shared)."""
        return RngStream(self.seed, stream_id)

    def child(self, index: int) -> "RngStream":
        """Deterministic sub-stream, e.g. one per trial."""
        return RngStream(self.seed, _splitmix64(self.stream_id ^ _splitmix64(index + 1)))

    def _uniform53(self, count: int) -> np.ndarray:
        raw = self._bitgen.random_raw(count)
        return (raw >> np.uint64(11)).astype(np.float64) * _INV_2_53

    def uniform(self, size=None) -> np.ndarray:
        """Uniform draws in [0, 1) with 53 bits of resolution."""
        count = int(np.prod(size)) if size is not None else 1
        out = self._uniform53(count)
        return out.reshape(size) if size is not None else out[0]

    def normal(self, size=None) -> np.ndarray:
        """Standard normal draws via Box-Muller."""
        count = int(np.prod(size)) if size is not None else 1
        pairs = (count + 1) // 2
        u = self._uniform53(2 * pairs)
        u1 = 1.0 - u[0::2]  # (0, 1], keeps log finite
        u2 = u[1::2]
        radius = np.sqrt(-2.0 * np.log(u1))
        angle = _TWO_PI * u2
        z = np.empty(2 * pairs)
        z[0::2] = radius * np.cos(angle)
        z[1::2] = radius * np.sin(angle)
        z = z[:count]
        return z.reshape(size) if size is not None else z[0]

    def integers(self, high: int, size=None) -> np.ndarray:
        """Uniform integers in ``[0, high)``."""
        return self._gen.integers(0, high, size=size, dtype=np.int64)

    def rademacher(self, size=None) -> np.ndarray:
        """Independent uniform signs in {-1, +1}."""
        return 2.0 * self._gen.integers(0, 2, size=size) - 1.0

    def categorical(self, weights, size: int) -> np.ndarray:
        """Indices drawn i.i.d. according to a probability vector."""
        cdf = np.cumsum(np.asarray(weights, dtype=float))
        cdf /= cdf[-1]
        idx = np.searchsorted(cdf, self._uniform53(size), side="right")
        return np.minimum(idx, len(cdf) - 1)

    def permutation_prefix(self, n: int, m: int) -> np.ndarray:
        """First ``m`` entries of a uniform random permutation of ``range(n)``.

        Partial Fisher-Yates, so only ``m`` swaps are performed.
        """
        if m > n:
            raise ValueError(f"cannot draw {m} distinct values from {n}")
        pool = np.arange(n, dtype=np.int64)
        for i in range(m):
            j = i + int(self._gen.integers(0, n - i))
            pool[i], pool[j] = pool[j], pool[i]
        return pool[:m].copy()
