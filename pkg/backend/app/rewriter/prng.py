"""
Seeded randomness for the transform plugins

All plugins draw from xoshiro256** whose state is expanded from a 64-bit
seed with SplitMix64. Per-stage seeds are derived by hashing, so inserting a
pipeline stage never perturbs the randomness of the others. Both generators
follow the published reference algorithms bit for bit.
"""

from typing import List, MutableSequence, TypeVar
import hashlib

MASK64 = (1 << 64) - 1

T = TypeVar("T")


def derive_seed(master_seed: int, stage_index: int, plugin_name: str) -> int:
    """
    Derive the seed of one pipeline stage

    First 8 bytes (little-endian) of
    SHA-256(master_seed LE u64 || stage_index LE u64 || plugin_name UTF-8).
    """
    digest = hashlib.sha256(
        (master_seed & MASK64).to_bytes(8, "little")
        + stage_index.to_bytes(8, "little")
        + plugin_name.encode("utf-8")
    ).digest()
    return int.from_bytes(digest[:8], "little")


class SplitMix64:
    def __init__(self, seed: int):
        self.state = seed & MASK64

    def next(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        return z ^ (z >> 31)


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & MASK64


class Xoshiro256:
    """xoshiro256** seeded from SplitMix64"""

    def __init__(self, seed: int):
        expander = SplitMix64(seed)
        self.s: List[int] = [expander.next() for _ in range(4)]

    def next_u64(self) -> int:
        s = self.s
        result = (_rotl((s[1] * 5) & MASK64, 7) * 9) & MASK64
        t = (s[1] << 17) & MASK64
        s[2] ^= s[0]
        s[3] ^= s[1]
        s[1] ^= s[2]
        s[0] ^= s[3]
        s[2] ^= t
        s[3] = _rotl(s[3], 45)
        return result

    def below(self, n: int) -> int:
        """Uniform integer in [0, n) by rejection sampling"""
        if n <= 0:
            raise ValueError("bound must be positive")
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            x = self.next_u64()
            if x < limit:
                return x % n

    def between(self, low: int, high: int) -> int:
        """Uniform integer in [low, high]"""
        return low + self.below(high - low + 1)

    def shuffle(self, items: MutableSequence[T]) -> None:
        """In-place Fisher-Yates, from the last index down to 1"""
        for i in range(len(items) - 1, 0, -1):
            j = self.below(i + 1)
            items[i], items[j] = items[j], items[i]
