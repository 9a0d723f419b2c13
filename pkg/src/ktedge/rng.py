"""Deterministic pseudo-random source shared by every stochastic component.

The generator is xoshiro256** with its state expanded from a 64-bit seed by
splitmix64 (algorithm id ``xoshiro256**/splitmix64-v1``). It is implemented
here instead of taken from numpy so that draw sequences are bit-identical on
every platform and can be frozen into tests.
"""

from __future__ import annotations

import hashlib
import struct

import numpy as np

ALGORITHM = "xoshiro256**/splitmix64-v1"

_MASK = (1 << 64) - 1


def _splitmix64(x: int) -> tuple[int, int]:
    """One splitmix64 step: returns (new_state, output)."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return x, z ^ (z >> 31)


def derive_seed(seed: int, tag: str) -> int:
    """Stable 64-bit child seed for a named purpose (model init, splits, ...).

    Uses SHA-256 so the derivation does not depend on call order.
    """
    digest = hashlib.sha256(struct.pack(">Q", seed & _MASK) + tag.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


class RngState:
    """xoshiro256** stream. Identical seed => identical draws, any platform."""

    algorithm = ALGORITHM

    def __init__(self, seed: int):
        self.seed = seed & _MASK
        x = self.seed
        s = []
        for _ in range(4):
            x, out = _splitmix64(x)
            s.append(out)
        if not any(s):  # all-zero state is the one invalid xoshiro state
            s[0] = 1
        self._s = tuple(s)

    def next_u64(self) -> int:
        s0, s1, s2, s3 = self._s
        v = (s1 * 5) & _MASK
        result = ((((v << 7) | (v >> 57)) & _MASK) * 9) & _MASK
        t = (s1 << 17) & _MASK
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = ((s3 << 45) | (s3 >> 19)) & _MASK
        self._s = (s0, s1, s2, s3)
        return result

    def uniform(self, n: int | None = None) -> float | np.ndarray:
        """Draws in [0, 1) with 53-bit resolution."""
        if n is None:
            return (self.next_u64() >> 11) * 2.0**-53
        nxt = self.next_u64
        return np.array([(nxt() >> 11) * 2.0**-53 for _ in range(n)], dtype=np.float64)

    def normal(self, n: int) -> np.ndarray:
        """Standard normal draws via Box-Muller."""
        m = (n + 1) // 2
        u1 = 1.0 - self.uniform(m)  # (0, 1], keeps log finite
        u2 = self.uniform(m)
        r = np.sqrt(-2.0 * np.log(u1))
        out = np.empty(2 * m, dtype=np.float64)
        out[0::2] = r * np.cos(2.0 * np.pi * u2)
        out[1::2] = r * np.sin(2.0 * np.pi * u2)
        return out[:n]

    def randint(self, bound: int) -> int:
        """Uniform int in [0, bound). Plain modulo; bias is irrelevant at the
        bounds used here and determinism is what matters."""
        if bound <= 0:
            raise ValueError("bound must be positive")
        return self.next_u64() % bound

    def shuffle(self, items) -> None:
        """In-place Fisher-Yates shuffle of a list or 1-d array."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randint(i + 1)
            items[i], items[j] = items[j], items[i]

    def permutation(self, n: int) -> np.ndarray:
        idx = list(range(n))
        self.shuffle(idx)
        return np.array(idx, dtype=np.int64)

    def clone(self) -> "RngState":
        other = RngState.__new__(RngState)
        other.seed = self.seed
        other._s = self._s
        return other

    def state(self) -> tuple[int, int, int, int]:
        return self._s

    def set_state(self, state: tuple[int, int, int, int]) -> None:
        self._s = tuple(x & _MASK for x in state)
