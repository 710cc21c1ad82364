"""Patch selection policies and compression accounting."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .attention import SalienceVector
from .errors import InvalidFraction


@dataclass(frozen=True)
class Threshold:
    tau: float


@dataclass(frozen=True)
class TopK:
    fraction: float


@dataclass(frozen=True)
class PrunedSet:
    retained: np.ndarray  # strictly increasing patch indices, int64
    total: int
    policy: object

    def __post_init__(self):
        idx = np.ascontiguousarray(self.retained, dtype=np.int64)
        if idx.ndim != 1:
            raise ValueError("retained must be 1-D")
        if idx.size:
            if idx[0] < 0 or idx[-1] >= self.total:
                raise ValueError("retained index out of range")
            if not np.all(np.diff(idx) > 0):
                raise ValueError("retained indices must be strictly increasing")
        idx.flags.writeable = False
        object.__setattr__(self, "retained", idx)

    @property
    def count(self) -> int:
        return int(self.retained.size)


def prune_threshold(salience: SalienceVector, tau: float) -> PrunedSet:
    """Keep patches with score strictly above tau.  Empty result is legal."""
    kept = np.flatnonzero(salience.scores > tau)
    return PrunedSet(retained=kept, total=salience.count, policy=Threshold(float(tau)))


def prune_topk(salience: SalienceVector, fraction: float) -> PrunedSet:
    """Keep the max(1, floor(fraction*N)) highest-scoring patches.

    Score ties go to the lower patch index.
    """
    if not (
        isinstance(fraction, (int, float))
        and math.isfinite(fraction)
        and 0 < fraction <= 1
    ):
        raise InvalidFraction(f"fraction must be in (0, 1], got {fraction!r}")
    n = salience.count
    keep = max(1, math.floor(float(fraction) * n))
    # stable sort on negated scores: equal scores stay in ascending index order
    order = np.argsort(-salience.scores, kind="stable")
    kept = np.sort(order[:keep])
    return PrunedSet(retained=kept, total=n, policy=TopK(float(fraction)))


def compression_ratio(pruned: PrunedSet) -> float:
    """Node-count reduction, 1 - retained/total."""
    if pruned.total <= 0:
        raise ValueError("total must be positive")
    return 1.0 - pruned.count / pruned.total
