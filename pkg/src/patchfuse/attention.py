"""Token-to-patch attention matrices and per-patch salience.

The salience of patch i is the column sum over tokens, accumulated in
double precision in ascending token order.  Rows must arrive normalized;
tolerance is 1e-4 on load to absorb float32 storage.

ATTN wire format, little-endian, no padding or checksum:

    magic "ATTN" | u16 version = 1 | u32 M | u32 N | M*N float32 row-major
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import (
    BadMagic,
    InvalidConcentration,
    MalformedPayload,
    NegativeWeight,
    RowNotNormalized,
    TruncatedPayload,
    UnsupportedVersion,
)
from .rng import Stream

ATTN_MAGIC = b"ATTN"
ATTN_VERSION = 1
ROW_SUM_TOL = 1e-4

_HEADER = struct.Struct("<4sHII")

# stream split tags for the synthetic generator; frozen, do not renumber
_TAG_HOT = 1
_TAG_JITTER = 2


@dataclass(frozen=True)
class AttentionMatrix:
    num_tokens: int
    num_patches: int
    weights: np.ndarray  # (M, N) float64

    def __post_init__(self):
        w = np.ascontiguousarray(self.weights, dtype=np.float64)
        if w.shape != (self.num_tokens, self.num_patches):
            raise ValueError("weight shape does not match declared dimensions")
        if not np.all(np.isfinite(w)):
            raise NegativeWeight("non-finite attention weight")
        if w.size and w.min() < 0.0:
            bad = np.unravel_index(int(np.argmin(w)), w.shape)
            raise NegativeWeight(f"negative weight at {bad}")
        sums = w.sum(axis=1)
        off = np.abs(sums - 1.0) > ROW_SUM_TOL
        if off.any():
            j = int(np.argmax(off))
            raise RowNotNormalized(f"row {j} sums to {sums[j]:.6f}")
        w.flags.writeable = False
        object.__setattr__(self, "weights", w)


@dataclass(frozen=True)
class SalienceVector:
    scores: np.ndarray  # (N,) float64, non-negative

    def __post_init__(self):
        s = np.ascontiguousarray(self.scores, dtype=np.float64)
        if s.ndim != 1:
            raise ValueError("salience must be 1-D")
        if not np.all(np.isfinite(s)) or (s.size and s.min() < 0.0):
            raise ValueError("salience scores must be finite and non-negative")
        s.flags.writeable = False
        object.__setattr__(self, "scores", s)

    @property
    def count(self) -> int:
        return int(self.scores.size)


def aggregate_salience(matrix: AttentionMatrix) -> SalienceVector:
    """Column sums S_i = sum_j weights[j][i], ascending j, float64."""
    acc = np.zeros(matrix.num_patches, np.float64)
    for j in range(matrix.num_tokens):
        acc += matrix.weights[j]
    return SalienceVector(acc)


def dump_attention(matrix: AttentionMatrix) -> bytes:
    header = _HEADER.pack(
        ATTN_MAGIC, ATTN_VERSION, matrix.num_tokens, matrix.num_patches
    )
    return header + matrix.weights.astype("<f4").tobytes()


def load_attention(data: bytes) -> AttentionMatrix:
    if len(data) < _HEADER.size:
        if data[: len(ATTN_MAGIC)] != ATTN_MAGIC[: len(data)]:
            raise BadMagic("not an ATTN file")
        raise TruncatedPayload(f"header needs {_HEADER.size} bytes, got {len(data)}")
    magic, version, m, n = _HEADER.unpack_from(data)
    if magic != ATTN_MAGIC:
        raise BadMagic(f"bad magic {magic!r}")
    if version != ATTN_VERSION:
        raise UnsupportedVersion(f"ATTN version {version}")
    expected = _HEADER.size + 4 * m * n
    if len(data) < expected:
        raise TruncatedPayload(f"need {expected} bytes, got {len(data)}")
    if len(data) > expected:
        raise MalformedPayload(f"{len(data) - expected} trailing bytes")
    flat = np.frombuffer(data, dtype="<f4", count=m * n, offset=_HEADER.size)
    weights = flat.astype(np.float64).reshape(m, n)
    return AttentionMatrix(num_tokens=m, num_patches=n, weights=weights)


def synth_attention(
    seed: int, num_tokens: int, num_patches: int, concentration: float
) -> AttentionMatrix:
    """Deterministic synthetic attention with a tunable degree of focus.

    Frozen scheme: a seeded permutation marks h = min(N, max(1,
    round(1/concentration))) "hot" patches shared by all rows.  Each row
    draws uniform jitter u in [0, 1) per patch, forms logits
    (hot + u) / concentration, and normalizes with a max-shifted
    exponential.  Hot logits strictly dominate cold ones row by row, so
    shrinking the concentration pushes essentially all mass onto the hot
    set while jitter varies which hot patches each token favors.
    """
    if not (
        isinstance(concentration, (int, float))
        and np.isfinite(concentration)
        and concentration > 0
    ):
        raise InvalidConcentration(f"concentration must be > 0, got {concentration!r}")
    if num_tokens < 1 or num_patches < 1:
        raise ValueError("num_tokens and num_patches must be >= 1")
    conc = float(concentration)
    stream = Stream(seed)
    hot_count = min(num_patches, max(1, round(1.0 / conc)))
    hot = stream.split(_TAG_HOT).permutation(num_patches)[:hot_count]
    base = np.zeros(num_patches, np.float64)
    base[hot] = 1.0
    jitter = (
        stream.split(_TAG_JITTER)
        .uniforms(num_tokens * num_patches)
        .reshape(num_tokens, num_patches)
    )
    logits = (base[None, :] + jitter) / conc
    logits -= logits.max(axis=1, keepdims=True)
    weights = np.exp(logits)
    weights /= weights.sum(axis=1, keepdims=True)
    return AttentionMatrix(
        num_tokens=num_tokens, num_patches=num_patches, weights=weights
    )
