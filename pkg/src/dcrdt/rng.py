"""Seeded pseudo-random numbers with a fixed, portable algorithm.

The generator is xorshift64* (shifts 12, 25, 27; output multiplier
0x2545F4914F6CDD1D) seeded through one splitmix64 step so that small or zero
seeds still give a non-zero, well-mixed state. Everything is plain 64-bit
integer arithmetic, so another implementation following the same recipe
reproduces the stream bit for bit.
"""

from __future__ import annotations

from collections.abc import Sequence
from typing import TypeVar

MASK64 = (1 << 64) - 1
_MUL = 0x2545F4914F6CDD1D

T = TypeVar("T")


def splitmix64(x: int) -> int:
    z = (x + 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


class XorShift64Star:
    def __init__(self, seed: int):
        self.seed = seed & MASK64
        self.state = splitmix64(self.seed) or 0x9E3779B97F4A7C15

    def next_u64(self) -> int:
        x = self.state
        x ^= x >> 12
        x ^= (x << 25) & MASK64
        x ^= x >> 27
        self.state = x
        return (x * _MUL) & MASK64

    def random(self) -> float:
        """Uniform float in [0, 1) built from the top 53 bits."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def randint(self, lo: int, hi: int) -> int:
        """Uniform integer in ``[lo, hi]`` by modulo reduction.

        The modulo bias is below 2**-50 for the small ranges used here.
        """
        if hi < lo:
            raise ValueError(f"empty range [{lo}, {hi}]")
        return lo + self.next_u64() % (hi - lo + 1)

    def choice(self, seq: Sequence[T]) -> T:
        if not seq:
            raise IndexError("choice from empty sequence")
        return seq[self.next_u64() % len(seq)]

    def fork(self, salt: int) -> XorShift64Star:
        """Independent stream derived from this generator's seed."""
        return XorShift64Star(splitmix64(self.seed ^ splitmix64(salt)))
