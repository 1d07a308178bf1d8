"""Counter-based splitmix64 stream.

Every random quantity in the package (scene geometry, noise, seeded
parameter bundles, RANSAC samples) comes from this stream, so results
depend only on the seed and can be reproduced bit-for-bit elsewhere.

Algorithm, for a stream with 64-bit ``seed`` and a draw counter ``c``
(starting at 0, incremented before each draw)::

    z = seed + c * 0x9E3779B97F4A7C15            (mod 2**64)
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9      (mod 2**64)
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB      (mod 2**64)
    out = z ^ (z >> 31)

Derived draws:

* uniform in [0, 1): ``(out >> 11) * 2**-53``
* integer in [0, m): ``floor(uniform * m)``
* standard normal: Box-Muller on consecutive uniforms ``(u1, u2)``,
  ``z0 = sqrt(-2 ln(1 - u1)) cos(2 pi u2)``, ``z1 = sqrt(-2 ln(1 - u1)) sin(2 pi u2)``;
  a request for ``n`` normals consumes ``2 * ceil(n / 2)`` uniforms and
  emits ``z0, z1`` of each pair in order, dropping the final ``z1`` when
  ``n`` is odd.
* child streams: ``fork(tag)`` seeds a new stream with ``mix(seed ^ mix(tag))``,
  where ``mix`` is the output function above applied to a single word.
"""
from __future__ import annotations

import zlib

import numpy as np

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
MUL1 = np.uint64(0xBF58476D1CE4E5B9)
MUL2 = np.uint64(0x94D049BB133111EB)
MASK64 = (1 << 64) - 1


def _mix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * MUL1
    z = (z ^ (z >> np.uint64(27))) * MUL2
    return z ^ (z >> np.uint64(31))


def mix64(x: int) -> int:
    return int(_mix(np.array([x & MASK64], dtype=np.uint64))[0])


def tag_value(tag) -> int:
    if isinstance(tag, str):
        return zlib.crc32(tag.encode("utf-8"))
    return int(tag) & MASK64


class SplitMix64:
    def __init__(self, seed: int):
        self.seed = int(seed) & MASK64
        self.counter = 0

    def fork(self, tag) -> "SplitMix64":
        return SplitMix64(mix64(self.seed ^ mix64(tag_value(tag))))

    def next_u64(self, n: int) -> np.ndarray:
        c = np.arange(self.counter + 1, self.counter + n + 1, dtype=np.uint64)
        self.counter += n
        with np.errstate(over="ignore"):
            z = np.uint64(self.seed) + c * GOLDEN
            return _mix(z)

    def uniform(self, n: int, low: float = 0.0, high: float = 1.0) -> np.ndarray:
        u = (self.next_u64(n) >> np.uint64(11)).astype(np.float64) * 2.0 ** -53
        return low + (high - low) * u

    def integers(self, n: int, high: int) -> np.ndarray:
        return np.floor(self.uniform(n) * high).astype(np.int64)

    def normal(self, n: int) -> np.ndarray:
        m = (n + 1) // 2
        u = self.uniform(2 * m).reshape(m, 2)
        r = np.sqrt(-2.0 * np.log1p(-u[:, 0]))
        phi = 2.0 * np.pi * u[:, 1]
        z = np.stack([r * np.cos(phi), r * np.sin(phi)], axis=1).reshape(-1)
        return z[:n]

    def unit_vectors(self, n: int) -> np.ndarray:
        v = self.normal(3 * n).reshape(n, 3)
        norms = np.linalg.norm(v, axis=1, keepdims=True)
        norms[norms == 0] = 1.0
        return v / norms
