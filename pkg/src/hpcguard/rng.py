"""Deterministic random number generation.

Everything stochastic in this package flows through CounterRng, a
counter-based SplitMix64 generator. Output k of a stream with seed s is

    mix64((s + (k + 1) * GAMMA) mod 2**64)

where GAMMA is the 64-bit golden-ratio constant and mix64 is the
murmur-style finalizer from the SplitMix64 reference implementation.
Counter-based generation makes every draw a pure function of (seed, k),
so streams can be replayed, split, and tested against fixed vectors.

Derived quantities and the raw words they consume:

  uniform doubles   (raw >> 11) / 2**53, one word each, range [0, 1)
  normal deviates   Box-Muller pairs, two words per pair; u1 is mapped
                    to (0, 1] so log(u1) is finite
  shuffle           Fisher-Yates, one word per swap, iterating from the
                    last index down to 1 (modulo bias is < n / 2**64,
                    irrelevant for the array sizes used here)

Sub-stream seeds come from derive_seed, which folds string and integer
tags into a parent seed with FNV-1a hashing plus the same mix64
finalizer. Distinct tag tuples give distinct streams in practice.
"""

from __future__ import annotations

import math

import numpy as np

MASK64 = (1 << 64) - 1
GAMMA = 0x9E3779B97F4A7C15

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3

# float64 has a 53-bit significand; top 53 bits of a word give a
# uniform double in [0, 1) with no rounding artifacts.
_INV_2_53 = 1.0 / (1 << 53)


def mix64(z: int) -> int:
    """SplitMix64 finalizer on a 64-bit integer."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return (z ^ (z >> 31)) & MASK64


def _mix64_array(z: np.ndarray) -> np.ndarray:
    # numpy uint64 arithmetic wraps mod 2**64, matching the scalar path.
    z = z.astype(np.uint64, copy=True)
    z ^= z >> np.uint64(30)
    z *= np.uint64(0xBF58476D1CE4E5B9)
    z ^= z >> np.uint64(27)
    z *= np.uint64(0x94D049BB133111EB)
    z ^= z >> np.uint64(31)
    return z


def fnv1a64(data: bytes) -> int:
    h = _FNV_OFFSET
    for b in data:
        h = ((h ^ b) * _FNV_PRIME) & MASK64
    return h


def derive_seed(seed: int, *tags: int | float | str) -> int:
    """Fold tags into a parent seed, yielding an independent sub-seed.

    Tags may be ints, floats, or strings. Strings and floats are hashed
    via FNV-1a over a type-prefixed byte encoding so that, for example,
    the string "3" and the integer 3 cannot collide.
    """
    h = mix64(seed & MASK64)
    for tag in tags:
        if isinstance(tag, bool):
            raise TypeError("bool seed tags are ambiguous, use int or str")
        if isinstance(tag, str):
            v = fnv1a64(b"s:" + tag.encode("utf-8"))
        elif isinstance(tag, float):
            v = fnv1a64(b"f:" + repr(tag).encode("ascii"))
        elif isinstance(tag, int):
            v = fnv1a64(b"i:" + str(tag).encode("ascii"))
        else:
            raise TypeError(f"unsupported seed tag type: {type(tag).__name__}")
        h = mix64((h ^ v) + GAMMA)
    return h


class CounterRng:
    """Counter-based SplitMix64 stream.

    The instance tracks how many raw words have been consumed; output k
    depends only on (seed, k), never on how earlier words were used.
    """

    def __init__(self, seed: int):
        self.seed = seed & MASK64
        self.counter = 0

    def _raw_block(self, n: int) -> np.ndarray:
        ks = np.arange(self.counter + 1, self.counter + n + 1, dtype=np.uint64)
        self.counter += n
        z = np.uint64(self.seed) + ks * np.uint64(GAMMA)
        return _mix64_array(z)

    def next_u64(self) -> int:
        self.counter += 1
        return mix64(self.seed + self.counter * GAMMA)

    def uniform(self, n: int) -> np.ndarray:
        """n uniform doubles in [0, 1)."""
        raw = self._raw_block(n)
        return (raw >> np.uint64(11)).astype(np.float64) * _INV_2_53

    def uniform_range(self, low: float, high: float, n: int) -> np.ndarray:
        return low + (high - low) * self.uniform(n)

    def normal(self, n: int) -> np.ndarray:
        """n standard normal deviates via Box-Muller.

        Consumes 2 * ceil(n / 2) raw words. Pairs are interleaved as
        (z0, z1, z0, z1, ...); for odd n the final z1 is discarded.
        """
        pairs = (n + 1) // 2
        raw = self._raw_block(2 * pairs)
        # Shift u1 into (0, 1] so the log below never sees zero.
        u1 = ((raw[0::2] >> np.uint64(11)).astype(np.float64) + 1.0) * _INV_2_53
        u2 = (raw[1::2] >> np.uint64(11)).astype(np.float64) * _INV_2_53
        r = np.sqrt(-2.0 * np.log(u1))
        theta = 2.0 * math.pi * u2
        out = np.empty(2 * pairs, dtype=np.float64)
        out[0::2] = r * np.cos(theta)
        out[1::2] = r * np.sin(theta)
        return out[:n]

    def randbelow(self, n: int) -> int:
        if n <= 0:
            raise ValueError("randbelow needs a positive bound")
        return self.next_u64() % n

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randbelow(i + 1)
            items[i], items[j] = items[j], items[i]

    def permutation(self, n: int) -> list[int]:
        idx = list(range(n))
        self.shuffle(idx)
        return idx
