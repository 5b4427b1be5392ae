"""SplitMix64 random stream used for every seeded draw in the package.

SplitMix64 (Steele, Lea & Flood, 2014) is a counter-based generator: the
k-th output is a fixed bijective mix of ``state0 + k * GAMMA`` (mod 2**64).
It is implemented here rather than taken from ``numpy.random`` because numpy
does not promise bit-stable streams across releases, and experiment traces
must be reproducible byte-for-byte on any platform.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
GAMMA = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB


def mix64(z: int) -> int:
    """SplitMix64 output finalizer (a bijection on 64-bit integers)."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def derive_seed(*keys: int) -> int:
    """Fold a tuple of integers (e.g. seed, epoch, batch) into one 64-bit seed."""
    h = 0
    for k in keys:
        h = mix64((h ^ (int(k) & MASK64)) + GAMMA)
    return h


class SplitMix64:
    """Sequential SplitMix64 stream.

    >>> SplitMix64(0).next_u64()
    16294208416658607535
    """

    def __init__(self, seed: int) -> None:
        self.state = int(seed) & MASK64

    def next_u64(self) -> int:
        self.state = (self.state + GAMMA) & MASK64
        return mix64(self.state)

    def below(self, bound: int) -> int:
        """Uniform integer in ``[0, bound)`` by rejection (no modulo bias)."""
        if bound <= 0:
            raise ValueError("bound must be positive")
        threshold = ((1 << 64) - bound) % bound
        while True:
            r = self.next_u64()
            if r >= threshold:
                return r % bound

    def u64_array(self, size: int) -> np.ndarray:
        """Next ``size`` outputs as a uint64 array (same values as repeated next_u64)."""
        k = np.arange(1, size + 1, dtype=np.uint64)
        with np.errstate(over="ignore"):
            z = np.uint64(self.state) + k * np.uint64(GAMMA)
            z = (z ^ (z >> np.uint64(30))) * np.uint64(_M1)
            z = (z ^ (z >> np.uint64(27))) * np.uint64(_M2)
        z = z ^ (z >> np.uint64(31))
        self.state = (self.state + size * GAMMA) & MASK64
        return z

    def uniform(self, low: float = 0.0, high: float = 1.0, size: int = 1) -> np.ndarray:
        """``size`` doubles uniform on ``[low, high)`` built from the top 53 bits."""
        u = (self.u64_array(size) >> np.uint64(11)).astype(np.float64) * 2.0**-53
        return low + (high - low) * u


def fisher_yates(n: int, rng: SplitMix64) -> np.ndarray:
    """Uniform random permutation of ``range(n)`` (Durstenfeld's in-place variant)."""
    order = list(range(n))
    for i in range(n - 1, 0, -1):
        j = rng.below(i + 1)
        order[i], order[j] = order[j], order[i]
    return np.asarray(order, dtype=np.int64)
