"""Portable seeded generator for shuffles and sampling.

xoshiro256** seeded through splitmix64, written with plain Python ints so
the stream is bit-identical on every platform and numpy version.
"""

from __future__ import annotations

from typing import MutableSequence

_MASK64 = (1 << 64) - 1


def _splitmix64(state: int) -> tuple[int, int]:
    state = (state + 0x9E3779B97F4A7C15) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return state, z ^ (z >> 31)


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & _MASK64


def _fnv1a(text: str) -> int:
    h = 0xCBF29CE484222325
    for byte in text.encode("utf-8"):
        h = ((h ^ byte) * 0x100000001B3) & _MASK64
    return h


class Xoshiro256:
    """xoshiro256** (Blackman & Vigna) with splitmix64 seeding."""

    def __init__(self, seed: int, stream: str = ""):
        state = (int(seed) ^ _fnv1a(stream)) & _MASK64
        s = []
        for _ in range(4):
            state, value = _splitmix64(state)
            s.append(value)
        self._s = s

    def next_u64(self) -> int:
        s = self._s
        result = (_rotl((s[1] * 5) & _MASK64, 7) * 9) & _MASK64
        t = (s[1] << 17) & _MASK64
        s[2] ^= s[0]
        s[3] ^= s[1]
        s[1] ^= s[2]
        s[0] ^= s[3]
        s[2] ^= t
        s[3] = _rotl(s[3], 45)
        return result

    def below(self, bound: int) -> int:
        """Uniform integer in [0, bound) by rejection, no modulo bias."""
        if bound <= 0:
            raise ValueError("bound must be positive")
        limit = (1 << 64) - ((1 << 64) % bound)
        while True:
            r = self.next_u64()
            if r < limit:
                return r % bound

    def shuffle(self, items: MutableSequence) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(items) - 1, 0, -1):
            j = self.below(i + 1)
            items[i], items[j] = items[j], items[i]

    def sample(self, items: list, m: int) -> list:
        """First ``m`` entries of a partial Fisher-Yates shuffle of a copy."""
        pool = list(items)
        n = len(pool)
        m = min(m, n)
        for i in range(m):
            j = i + self.below(n - i)
            pool[i], pool[j] = pool[j], pool[i]
        return pool[:m]


def substream(seed: int, name: str) -> Xoshiro256:
    """Independent generator for one named consumer of the run seed."""
    return Xoshiro256(seed, name)
