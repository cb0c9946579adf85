"""Portable seeded randomness.

Every random decision in the toolkit (splits, fold assignment, SVM epoch
order, augmentation draws, bootstrap resamples) goes through
:class:`SplitMix64`, so results only depend on the seed and not on the numpy
version or platform.

SplitMix64 (Steele, Lea & Flood 2014; the seeding generator recommended for
the xoshiro family) is counter based: output ``i`` is ``mix(seed + (i+1)*G)``,
so blocks of outputs can be produced with vectorized uint64 arithmetic.
"""

from __future__ import annotations

import numpy as np

_GOLDEN = 0x9E3779B97F4A7C15
_MASK = (1 << 64) - 1


def _mix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def _mix_int(z: int) -> int:
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


class SplitMix64:
    """SplitMix64 stream with a few sampling helpers.

    Uniform doubles take the top 53 bits of each output; bounded integers
    are ``floor(u * n)``. Both rules are trivially reproducible elsewhere.
    """

    def __init__(self, seed: int = 42):
        self._state = int(seed) & _MASK
        self.seed = int(seed)

    # -- raw output -------------------------------------------------------
    def next_u64(self) -> int:
        self._state = (self._state + _GOLDEN) & _MASK
        return _mix_int(self._state)

    def u64(self, n: int) -> np.ndarray:
        """Next ``n`` raw outputs as a uint64 array."""
        if n <= 0:
            return np.zeros(0, dtype=np.uint64)
        steps = np.arange(1, n + 1, dtype=np.uint64)
        with np.errstate(over="ignore"):
            z = np.uint64(self._state) + steps * np.uint64(_GOLDEN)
            out = _mix(z)
        self._state = (self._state + n * _GOLDEN) & _MASK
        return out

    # -- derived draws ----------------------------------------------------
    def random(self, size: int | None = None):
        """Uniform on [0, 1)."""
        if size is None:
            return (self.next_u64() >> 11) * (1.0 / (1 << 53))
        return (self.u64(size) >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))

    def uniform(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * self.random()

    def integers(self, n: int, size: int | None = None):
        """Integers in ``[0, n)``."""
        if n <= 0:
            raise ValueError("n must be positive")
        if size is None:
            return int(self.random() * n)
        return np.floor(self.random(size) * n).astype(np.int64)

    def permutation(self, n: int) -> np.ndarray:
        """Fisher-Yates shuffle of ``range(n)``; draws ``n - 1`` outputs."""
        perm = np.arange(n, dtype=np.int64)
        if n < 2:
            return perm
        u = self.random(n - 1)
        for k, i in enumerate(range(n - 1, 0, -1)):
            j = int(u[k] * (i + 1))
            perm[i], perm[j] = perm[j], perm[i]
        return perm

    def child(self, key: int) -> "SplitMix64":
        """Independent substream keyed by ``key``; does not advance this one."""
        base = _mix_int((self.seed & _MASK) ^ _mix_int((int(key) * _GOLDEN + 1) & _MASK))
        return SplitMix64(base)


def make_rng(seed_or_rng=None) -> SplitMix64:
    if isinstance(seed_or_rng, SplitMix64):
        return seed_or_rng
    return SplitMix64(42 if seed_or_rng is None else int(seed_or_rng))
