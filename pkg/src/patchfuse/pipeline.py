"""End-to-end composition: study -> pruned visual graph -> fused graph ->
classifier, plus the fixed 70/15/15 corpus split."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .attention import aggregate_salience
from .errors import DimensionMismatch
from .graphs import build_visual_graph, fuse
from .metrics import SweepConfig, auc
from .mpnn import MpnnModel, TrainConfig, forward, train
from .patch_grid import tile_image
from .pruning import compression_ratio, prune_threshold, prune_topk
from .rng import Stream

_TAG_SPLIT = 20

TRAIN_FRACTION = 0.70
VAL_FRACTION = 0.15


def split_indices(count: int, seed: int):
    """Seeded 70/15/15 split; returns sorted (train, val, test) indices."""
    if count < 3:
        raise ValueError("need at least 3 examples to split")
    perm = Stream(seed).split(_TAG_SPLIT).permutation(count)
    n_train = math.floor(TRAIN_FRACTION * count)
    n_val = math.floor(VAL_FRACTION * count)
    train_idx = np.sort(perm[:n_train])
    val_idx = np.sort(perm[n_train : n_train + n_val])
    test_idx = np.sort(perm[n_train + n_val :])
    return train_idx, val_idx, test_idx


def study_to_unified(
    study, patch_size: int, fraction=None, tau=None, dim: int = 67, kg=None
):
    """Tile, score, prune, and fuse one study.  Exactly one pruning policy
    must be given.  `kg` overrides the study's knowledge graph (ablations)."""
    if (fraction is None) == (tau is None):
        raise ValueError("set exactly one of fraction or tau")
    grid = tile_image(study.image, patch_size)
    if study.attention.num_patches != grid.count:
        raise DimensionMismatch(
            f"attention covers {study.attention.num_patches} patches, "
            f"grid has {grid.count}"
        )
    salience = aggregate_salience(study.attention)
    if fraction is not None:
        pruned = prune_topk(salience, fraction)
    else:
        pruned = prune_threshold(salience, tau)
    g1 = build_visual_graph(grid, pruned)
    return fuse(g1, kg if kg is not None else study.kg, dim)


@dataclass(frozen=True)
class ExperimentOutcome:
    fraction: float
    compression: float
    test_auc: float
    model: MpnnModel
    loss_history: tuple


def run_split_experiment(
    corpus, fraction: float, config: SweepConfig, kg=None
) -> ExperimentOutcome:
    """Prune every study at `fraction`, train on the 70% split, report AUC
    on the held-out 15% test split."""
    graphs = [
        study_to_unified(s, config.patch_size, fraction=fraction, dim=config.dim, kg=kg)
        for s in corpus
    ]
    labels = [s.label for s in corpus]
    train_idx, _, test_idx = split_indices(len(corpus), config.seed)
    dataset = [(graphs[i], labels[i]) for i in train_idx]
    model = MpnnModel.init(
        config.layers, config.hidden, config.dim + 1, seed=config.seed
    )
    history = []
    trained = train(
        model,
        dataset,
        TrainConfig(
            epochs=config.epochs,
            learning_rate=config.learning_rate,
            seed=config.seed,
        ),
        history=history,
    )
    scores = np.array([forward(trained, graphs[i]) for i in test_idx])
    observed = np.array([labels[i] for i in test_idx])
    pruned = prune_topk(aggregate_salience(corpus[0].attention), fraction)
    return ExperimentOutcome(
        fraction=float(fraction),
        compression=compression_ratio(pruned),
        test_auc=auc(scores, observed),
        model=trained,
        loss_history=tuple(history),
    )
