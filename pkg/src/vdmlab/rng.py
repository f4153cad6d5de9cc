"""SplitMix64 generator with Box-Muller normals.

The generator is specified by its reference constants so that streams are
reproducible bit for bit on any platform, independent of numpy's RNG.
"""
import math

import numpy as np

MASK64 = 0xFFFFFFFFFFFFFFFF
GOLDEN_GAMMA = 0x9E3779B97F4A7C15
_MUL1 = 0xBF58476D1CE4E5B9
_MUL2 = 0x94D049BB133111EB
_TWO_POW_M53 = 2.0 ** -53


def mix64(z):
    """SplitMix64 finalizer."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * _MUL1) & MASK64
    z = ((z ^ (z >> 27)) * _MUL2) & MASK64
    return z ^ (z >> 31)


def derive_seed(seed, index):
    """Child seed for stream ``index``: the index-th output of SplitMix64(seed).

    Computed in O(1), so parallel workers can derive their seeds independently.
    """
    if index < 0:
        raise ValueError("index must be nonnegative")
    return mix64((seed + (index + 1) * GOLDEN_GAMMA) & MASK64)


class SplitMix64:
    def __init__(self, seed):
        self.state = int(seed) & MASK64
        self._spare = None

    def next_u64(self):
        self.state = (self.state + GOLDEN_GAMMA) & MASK64
        return mix64(self.state)

    def uniform(self):
        """Double in [0, 1) from the top 53 bits."""
        return (self.next_u64() >> 11) * _TWO_POW_M53

    def uniforms(self, n, low=0.0, high=1.0):
        return np.array([low + (high - low) * self.uniform() for _ in range(n)])

    def randbelow(self, n):
        """Integer in [0, n) by multiply-shift; bias is at most n / 2**64."""
        if n <= 0:
            raise ValueError("n must be positive")
        return (self.next_u64() * n) >> 64

    def normal(self):
        # Box-Muller on two consecutive uniforms; the sine branch is kept for the next call.
        if self._spare is not None:
            z, self._spare = self._spare, None
            return z
        u1 = 1.0 - self.uniform()  # (0, 1], keeps log finite
        u2 = self.uniform()
        r = math.sqrt(-2.0 * math.log(u1))
        theta = 2.0 * math.pi * u2
        self._spare = r * math.sin(theta)
        return r * math.cos(theta)

    def normals(self, n):
        return np.array([self.normal() for _ in range(n)])

    def shuffle_indices(self, n):
        """Fisher-Yates permutation of range(n)."""
        idx = list(range(n))
        for i in range(n - 1, 0, -1):
            j = self.randbelow(i + 1)
            idx[i], idx[j] = idx[j], idx[i]
        return np.array(idx, dtype=np.int64)
