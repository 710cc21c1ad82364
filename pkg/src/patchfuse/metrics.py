"""Evaluation metrics and the pruning-ratio sweep harness.

AUC is computed pairwise (Mann-Whitney), which is exact with ties and
serves as its own oracle at this scale.  BLEU-2 uses clipped n-gram
precisions, no smoothing, and tokenization frozen as lowercase whitespace
split.  One deliberate convention: an n-gram order longer than the
candidate contributes a vacuous precision of 1, so a candidate always
scores 1.0 against itself regardless of length.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateLabels, EmptyCandidate


def auc(scores, labels) -> float:
    """(wins + 0.5*ties) / (P*N) over all positive-negative pairs."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if s.shape != y.shape or s.ndim != 1:
        raise ValueError("scores and labels must be 1-D and aligned")
    if not np.all(np.isin(y, (0, 1))):
        raise ValueError("labels must be 0 or 1")
    pos = s[y == 1]
    neg = s[y == 0]
    if pos.size == 0 or neg.size == 0:
        raise DegenerateLabels("AUC needs at least one of each class")
    diff = pos[:, None] - neg[None, :]
    wins = float(np.count_nonzero(diff > 0))
    ties = float(np.count_nonzero(diff == 0))
    return (wins + 0.5 * ties) / (pos.size * neg.size)


def tokenize(text: str) -> list:
    """Frozen tokenizer: lowercase, split on whitespace."""
    return text.lower().split()


def _ngrams(tokens, order):
    return Counter(tuple(tokens[i : i + order]) for i in range(len(tokens) - order + 1))


def _clipped_precision(candidate, references, order):
    cand = _ngrams(candidate, order)
    total = sum(cand.values())
    if total == 0:
        # candidate too short to form this order: vacuously perfect
        return 1.0
    best = Counter()
    for ref in references:
        counts = _ngrams(ref, order)
        for gram, count in counts.items():
            if count > best[gram]:
                best[gram] = count
    clipped = sum(min(count, best[gram]) for gram, count in cand.items())
    return clipped / total


def bleu2(candidate, references) -> float:
    """Geometric mean of clipped 1/2-gram precisions with brevity penalty.

    The closest reference length is used for the penalty; length ties go
    to the shorter reference.  Zero overlap at either order gives 0.
    """
    candidate = list(candidate)
    if not candidate:
        raise EmptyCandidate("candidate must contain at least one token")
    references = [list(r) for r in references]
    if not references:
        raise ValueError("at least one reference is required")
    p1 = _clipped_precision(candidate, references, 1)
    p2 = _clipped_precision(candidate, references, 2)
    if p1 == 0.0 or p2 == 0.0:
        return 0.0
    c = len(candidate)
    r = min((abs(len(ref) - c), len(ref)) for ref in references)[1]
    penalty = 1.0 if c >= r else float(np.exp(1.0 - r / c))
    return float(np.sqrt(p1 * p2) * penalty)


@dataclass(frozen=True)
class SweepConfig:
    seed: int
    patch_size: int
    dim: int = 67
    hidden: int = 32
    layers: int = 2
    epochs: int = 12
    learning_rate: float = 0.05

    def __post_init__(self):
        if self.patch_size < 1 or self.dim < 1:
            raise ValueError("patch_size and dim must be >= 1")


@dataclass(frozen=True)
class SweepRow:
    fraction: float
    compression: float
    auc: float


def ablation_sweep(corpus, fractions, config: SweepConfig) -> list:
    """Prune at each fraction, retrain from the same seed, report test AUC.

    Rows come back in the order the fractions were given.
    """
    from . import pipeline  # local import; pipeline uses auc() from here

    from .errors import InvalidFraction

    for k in fractions:
        if not 0 < k <= 1:
            raise InvalidFraction(f"fraction must be in (0, 1], got {k!r}")
    rows = []
    for k in fractions:
        outcome = pipeline.run_split_experiment(corpus, float(k), config)
        rows.append(
            SweepRow(
                fraction=float(k),
                compression=outcome.compression,
                auc=outcome.test_auc,
            )
        )
    return rows


def sweep_csv(rows) -> str:
    """CSV with header k,compression,auc; six decimals; newline-terminated."""
    lines = ["k,compression,auc"]
    for row in rows:
        lines.append(f"{row.fraction:.6f},{row.compression:.6f},{row.auc:.6f}")
    return "\n".join(lines) + "\n"
