"""Seeded pseudo-random streams.

Every random draw in this package flows through the counter-based
SplitMix64 generator below.  The scheme is part of the public contract:
fixture corpora, golden hashes, and checkpoint reproducibility all depend
on the exact bit stream, so the constants and update rules here are frozen
and must never change between releases.

A :class:`Stream` advances a 64-bit state by the golden-ratio increment and
finalizes it with the standard SplitMix64 mixer.  Because the mixer is a
pure function of the counter, blocks of uniforms can be produced with
vectorized numpy arithmetic that matches the scalar path bit for bit.
"""

from __future__ import annotations

import numpy as np

_GOLDEN = 0x9E3779B97F4B7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_MASK = (1 << 64) - 1

# 2**-53: turns the top 53 bits of a u64 into a uniform double in [0, 1).
_U53 = 1.0 / (1 << 53)


def mix64(value: int) -> int:
    """SplitMix64 finalizer on a 64-bit integer."""
    z = value & _MASK
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK
    return z ^ (z >> 31)


def derive(seed: int, *tags: int) -> int:
    """Derive an independent child seed from ``seed`` and integer tags.

    Used to hand each study/tensor/epoch its own stream so that corpus
    generation stays order-independent and parallelizable.
    """
    h = mix64(seed)
    for tag in tags:
        h = mix64(h ^ mix64(tag ^ _GOLDEN))
    return h


def _finalize_array(counters: np.ndarray) -> np.ndarray:
    z = counters.astype(np.uint64, copy=True)
    z ^= z >> np.uint64(30)
    z *= np.uint64(_MIX1)
    z ^= z >> np.uint64(27)
    z *= np.uint64(_MIX2)
    z ^= z >> np.uint64(31)
    return z


class Stream:
    """A deterministic stream of uniforms/integers from a 64-bit seed."""

    __slots__ = ("_state",)

    def __init__(self, seed: int):
        self._state = seed & _MASK

    def split(self, *tags: int) -> "Stream":
        """Child stream; independent of draws made on this one so far."""
        return Stream(derive(self._state, *tags))

    def next_u64(self) -> int:
        self._state = (self._state + _GOLDEN) & _MASK
        return mix64(self._state)

    def u64s(self, count: int) -> np.ndarray:
        """Vectorized block of ``count`` raw 64-bit outputs."""
        if count < 0:
            raise ValueError("count must be non-negative")
        start = self._state
        counters = (
            np.uint64(start)
            + (np.arange(1, count + 1, dtype=np.uint64) * np.uint64(_GOLDEN))
        )
        self._state = (start + count * _GOLDEN) & _MASK
        return _finalize_array(counters)

    def uniform(self) -> float:
        return (self.next_u64() >> 11) * _U53

    def uniforms(self, count: int) -> np.ndarray:
        """``count`` doubles in [0, 1), float64."""
        return (self.u64s(count) >> np.uint64(11)).astype(np.float64) * _U53

    def below(self, bound: int) -> int:
        """Integer in [0, bound). Plain modulo; bias is negligible and the
        mapping is frozen along with everything else."""
        if bound <= 0:
            raise ValueError("bound must be positive")
        return self.next_u64() % bound

    def permutation(self, count: int) -> np.ndarray:
        """Fisher-Yates permutation of range(count), int64."""
        perm = np.arange(count, dtype=np.int64)
        for i in range(count - 1, 0, -1):
            j = self.below(i + 1)
            perm[i], perm[j] = perm[j], perm[i]
        return perm

    def choice(self, count: int, size: int) -> np.ndarray:
        """``size`` distinct integers from range(count), in draw order."""
        if size > count:
            raise ValueError("size exceeds population")
        return self.permutation(count)[:size]
