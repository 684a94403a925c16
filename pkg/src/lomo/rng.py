"""Deterministic random number generation.

Everything downstream (span selection, distortion sampling) must be
reproducible across platforms, Python versions, and worker counts, so we
use a fixed splitmix64 generator instead of ``random`` / numpy generators
whose streams are not contractually stable.
"""

from __future__ import annotations

_MASK64 = 0xFFFFFFFFFFFFFFFF
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


def splitmix64(x: int) -> int:
    """One splitmix64 step: advance ``x`` by the golden gamma and scramble."""
    x = (x + _GOLDEN) & _MASK64
    z = x
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK64
    return z ^ (z >> 31)


def mix_seed(seed: int, key: str) -> int:
    """Stable 64-bit mix of a seed and a string key.

    Folds the UTF-8 bytes of ``key`` into the splitmix64 stream eight bytes
    at a time, then folds in the byte length so prefixes of one another
    cannot collide. Pure function of its arguments; independent of
    processing order, worker count, and platform.
    """
    h = splitmix64(seed & _MASK64)
    data = key.encode("utf-8")
    for i in range(0, len(data), 8):
        chunk = int.from_bytes(data[i : i + 8], "little")
        h = splitmix64(h ^ chunk)
    return splitmix64(h ^ len(data))


class SplitMix64:
    """Tiny sequential generator built on splitmix64.

    Not cryptographic; statistical quality is fine for categorical sampling
    and uniform parameter draws, which is all the pipeline needs.
    """

    def __init__(self, seed: int):
        self._state = seed & _MASK64

    def next_u64(self) -> int:
        self._state = (self._state + _GOLDEN) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * _MIX1) & _MASK64
        z = ((z ^ (z >> 27)) * _MIX2) & _MASK64
        return z ^ (z >> 31)

    def random(self) -> float:
        """Uniform float in [0, 1) with 53 bits of precision."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def uniform(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * self.random()

    def below(self, n: int) -> int:
        """Uniform integer in [0, n). Modulo bias is negligible for small n."""
        if n <= 0:
            raise ValueError("n must be positive")
        return self.next_u64() % n

    def randint(self, lo: int, hi: int) -> int:
        """Uniform integer in [lo, hi] inclusive."""
        return lo + self.below(hi - lo + 1)

    def choice(self, seq):
        return seq[self.below(len(seq))]
