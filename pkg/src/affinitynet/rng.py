"""Counter-based random source used for every stochastic step in the package.

The generator is SplitMix64 evaluated at explicit counters: draw ``c`` of a
stream with key ``K`` is ``mix64(K + (c + 1) * GOLDEN)``. Doubles take the top
53 bits, offset by half a unit so they lie strictly inside (0, 1). Normals
come from the Box-Muller transform applied to consecutive pairs of
uniforms (cosine branch first, then sine branch).

Keys are derived from ``(seed, stream)`` by mixing, so independent
sub-streams can be spawned by name without sharing state.
"""

from __future__ import annotations

import zlib

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MASK64 = (1 << 64) - 1


def mix64(x: np.ndarray) -> np.ndarray:
    """SplitMix64 finaliser on a uint64 array (wrapping arithmetic)."""
    x = np.asarray(x, dtype=np.uint64)
    with np.errstate(over="ignore"):
        x = (x ^ (x >> np.uint64(30))) * _M1
        x = (x ^ (x >> np.uint64(27))) * _M2
    return x ^ (x >> np.uint64(31))


def _key(seed: int, stream: int) -> np.uint64:
    s = np.array([seed & _MASK64], dtype=np.uint64)
    t = np.array([stream & _MASK64], dtype=np.uint64)
    with np.errstate(over="ignore"):
        return mix64(mix64(s) ^ (t * _GOLDEN + _GOLDEN))[0]


def _stream_id(name) -> int:
    if isinstance(name, (int, np.integer)):
        return int(name) & _MASK64
    return zlib.crc32(str(name).encode("utf-8"))


class CounterRNG:
    """Deterministic stream of uniforms and normals keyed by ``(seed, stream)``."""

    def __init__(self, seed: int, stream=0):
        self.seed = int(seed)
        self.stream = _stream_id(stream)
        self._key = _key(self.seed, self.stream)
        self.counter = 0

    def spawn(self, name) -> "CounterRNG":
        """Independent child stream; does not advance this generator."""
        child_stream = int(mix64(np.array([self.stream ^ _stream_id(name)], dtype=np.uint64))[0])
        return CounterRNG(int(self._key), child_stream)

    def bits(self, size: int) -> np.ndarray:
        c = np.arange(self.counter + 1, self.counter + 1 + size, dtype=np.uint64)
        self.counter += size
        with np.errstate(over="ignore"):
            return mix64(self._key + c * _GOLDEN)

    def uniform(self, size=None, low: float = 0.0, high: float = 1.0):
        shape = () if size is None else (size if isinstance(size, tuple) else (size,))
        count = int(np.prod(shape)) if shape else 1
        u = ((self.bits(count) >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0 ** -53
        u = low + (high - low) * u
        return float(u[0]) if size is None else u.reshape(shape)

    def normal(self, size=None, loc=0.0, scale=1.0):
        shape = () if size is None else (size if isinstance(size, tuple) else (size,))
        count = int(np.prod(shape)) if shape else 1
        pairs = (count + 1) // 2
        u = self.uniform(2 * pairs).reshape(pairs, 2)
        r = np.sqrt(-2.0 * np.log(u[:, 0]))
        theta = 2.0 * np.pi * u[:, 1]
        z = np.column_stack([r * np.cos(theta), r * np.sin(theta)]).ravel()[:count]
        z = loc + scale * z
        return float(z[0]) if size is None else z.reshape(shape)

    def integers(self, low: int, high: int, size=None):
        """Integers in ``[low, high)`` by scaling uniforms."""
        u = self.uniform(size)
        out = np.floor(low + (high - low) * np.asarray(u)).astype(np.int64)
        out = np.minimum(out, high - 1)
        return int(out) if size is None else out

    def permutation(self, n: int) -> np.ndarray:
        return np.argsort(self.uniform(n), kind="stable")

    def choice(self, n: int, size: int) -> np.ndarray:
        """``size`` distinct indices from ``range(n)``."""
        return self.permutation(n)[:size]
