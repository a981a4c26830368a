"""Fixed 64-bit pseudo-random generators for reproducible shuffles and seeds.

Fold assignments must reproduce byte-for-byte across runs, platforms, and
reimplementations in other languages, so the generators here are pinned to
two well-known algorithms with published reference constants:

* splitmix64 — gamma 0x9E3779B97F4A7C15, finalizer constants
  0xBF58476D1CE4E5B9 and 0x94D049BB133111EB.
* xoshiro256** — state seeded from splitmix64, output rotl(s1 * 5, 7) * 9.

Test vectors are frozen in ``tests/test_rng.py``.
"""

from __future__ import annotations

_MASK64 = (1 << 64) - 1


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & _MASK64


class SplitMix64:
    """splitmix64 stream; primarily used to seed xoshiro and derive sub-seeds."""

    def __init__(self, seed: int):
        self.state = seed & _MASK64

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)


class Xoshiro256StarStar:
    """xoshiro256** generator, state initialized from splitmix64(seed)."""

    def __init__(self, seed: int):
        sm = SplitMix64(seed)
        self.s = [sm.next_u64() for _ in range(4)]

    def next_u64(self) -> int:
        s = self.s
        result = (_rotl((s[1] * 5) & _MASK64, 7) * 9) & _MASK64
        t = (s[1] << 17) & _MASK64
        s[2] ^= s[0]
        s[3] ^= s[1]
        s[1] ^= s[2]
        s[0] ^= s[3]
        s[2] ^= t
        s[3] = _rotl(s[3], 45)
        return result

    def next_below(self, n: int) -> int:
        """Uniform integer in [0, n) without modulo bias (rejection sampling)."""
        if n <= 0:
            raise ValueError("n must be positive")
        threshold = (1 << 64) - ((1 << 64) % n)
        while True:
            r = self.next_u64()
            if r < threshold:
                return r % n

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle, iterating from the last index down."""
        for i in range(len(items) - 1, 0, -1):
            j = self.next_below(i + 1)
            items[i], items[j] = items[j], items[i]


def _fnv1a64(text: str) -> int:
    h = 0xCBF29CE484222325
    for byte in text.encode("utf-8"):
        h = ((h ^ byte) * 0x100000001B3) & _MASK64
    return h


def derive_seed(base: int, label: str) -> int:
    """Derive an independent child seed from a base seed and a purpose label.

    Defined as the first splitmix64 output of state ``base XOR fnv1a64(label)``;
    labels like "init", "shuffle:3", "trial:17" keep the streams disjoint.
    """
    return SplitMix64((base & _MASK64) ^ _fnv1a64(label)).next_u64()


def shuffled_indices(n: int, seed: int) -> list[int]:
    """Deterministic permutation of range(n) via xoshiro256**(seed)."""
    items = list(range(n))
    Xoshiro256StarStar(seed).shuffle(items)
    return items
