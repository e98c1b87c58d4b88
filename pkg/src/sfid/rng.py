"""Portable deterministic PRNG for synthetic fixtures.

A 64-bit seed is expanded through splitmix64 into the xoshiro256** state,
exactly as in the reference implementations of both algorithms, so a given
seed produces the same stream on every platform and in every language with
a conforming implementation. Python's own `random` is avoided on purpose:
fixture bytes must not depend on interpreter version.
"""

from __future__ import annotations

import numpy as np

_MASK64 = 0xFFFFFFFFFFFFFFFF
_DOUBLE_SCALE = 1.0 / (1 << 53)


def splitmix64(state: int) -> tuple[int, int]:
    """Advance a splitmix64 state once; returns (new_state, output)."""
    state = (state + 0x9E3779B97F4A7C15) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return state, z ^ (z >> 31)


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & _MASK64


class Xoshiro256StarStar:
    """xoshiro256** with splitmix64 seed expansion."""

    def __init__(self, seed: int):
        state = seed & _MASK64
        expanded = []
        for _ in range(4):
            state, word = splitmix64(state)
            expanded.append(word)
        self._s = expanded

    @classmethod
    def from_state(cls, s0: int, s1: int, s2: int, s3: int) -> "Xoshiro256StarStar":
        rng = cls(0)
        rng._s = [s0 & _MASK64, s1 & _MASK64, s2 & _MASK64, s3 & _MASK64]
        return rng

    def next_u64(self) -> int:
        s0, s1, s2, s3 = self._s
        result = (_rotl((s1 * 5) & _MASK64, 7) * 9) & _MASK64
        t = (s1 << 17) & _MASK64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
        self._s = [s0, s1, s2, s3]
        return result

    def random(self) -> float:
        """Uniform double in [0, 1) from the top 53 bits."""
        return (self.next_u64() >> 11) * _DOUBLE_SCALE

    def uniform(self, low: float, high: float) -> float:
        return low + (high - low) * self.random()

    def randint(self, low: int, high: int) -> int:
        """Integer in [low, high] inclusive.

        Plain modulo reduction: the spans used here are many orders of
        magnitude below 2**64, so the bias is immaterial next to the
        portability guarantee.
        """
        if high < low:
            raise ValueError(f"empty range [{low}, {high}]")
        return low + self.next_u64() % (high - low + 1)

    def choice(self, items):
        return items[self.randint(0, len(items) - 1)]

    def uniform_array(self, n: int, low: float = 0.0, high: float = 1.0) -> np.ndarray:
        out = np.fromiter((self.random() for _ in range(n)), dtype=np.float64, count=n)
        if low != 0.0 or high != 1.0:
            out = low + (high - low) * out
        return out
