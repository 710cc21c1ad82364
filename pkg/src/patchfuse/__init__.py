"""Attention-guided patch pruning and cross-modal graph fusion.

Pipeline: tile a grayscale image into patches, aggregate token-to-patch
attention into per-patch salience, prune to the salient subset, build a
spatial visual graph, fuse it with a report knowledge graph through one
bridge edge, serialize compactly, and classify with a small message
passing network.  Deterministic end to end for a fixed seed.
"""

from .attention import (
    AttentionMatrix,
    SalienceVector,
    aggregate_salience,
    dump_attention,
    load_attention,
    synth_attention,
)
from .errors import PipelineError
from .fixtures import (
    SyntheticStudy,
    corpus_digest,
    dummy_knowledge_graph,
    generate_corpus,
    read_corpus,
    write_corpus,
)
from .graphs import (
    CentralityScores,
    KnowledgeGraph,
    UnifiedGraph,
    VisualGraph,
    betweenness_centrality,
    build_visual_graph,
    dump_knowledge_graph,
    entity_embedding,
    fuse,
    parse_knowledge_graph,
)
from .metrics import SweepConfig, ablation_sweep, auc, bleu2, sweep_csv, tokenize
from .mpnn import (
    MpnnModel,
    TrainConfig,
    dump_model,
    forward,
    grad,
    load_model,
    loss,
    train,
)
from .patch_grid import (
    FeatureVector,
    GrayImage,
    Patch,
    PatchGrid,
    dump_pgm,
    load_pgm,
    patch_feature,
    tile_image,
)
from .pipeline import run_split_experiment, split_indices, study_to_unified
from .pruning import (
    PrunedSet,
    compression_ratio,
    prune_threshold,
    prune_topk,
)
from .serialization import decode, encode, encoded_size, size_report

__version__ = "0.1.0"

__all__ = [
    "AttentionMatrix",
    "CentralityScores",
    "FeatureVector",
    "GrayImage",
    "KnowledgeGraph",
    "MpnnModel",
    "Patch",
    "PatchGrid",
    "PipelineError",
    "PrunedSet",
    "SalienceVector",
    "SweepConfig",
    "SyntheticStudy",
    "TrainConfig",
    "UnifiedGraph",
    "VisualGraph",
    "ablation_sweep",
    "aggregate_salience",
    "auc",
    "betweenness_centrality",
    "bleu2",
    "build_visual_graph",
    "compression_ratio",
    "corpus_digest",
    "decode",
    "dummy_knowledge_graph",
    "dump_attention",
    "dump_knowledge_graph",
    "dump_model",
    "dump_pgm",
    "encode",
    "encoded_size",
    "entity_embedding",
    "forward",
    "fuse",
    "generate_corpus",
    "grad",
    "load_attention",
    "load_model",
    "load_pgm",
    "loss",
    "parse_knowledge_graph",
    "patch_feature",
    "prune_threshold",
    "prune_topk",
    "read_corpus",
    "run_split_experiment",
    "size_report",
    "split_indices",
    "study_to_unified",
    "synth_attention",
    "sweep_csv",
    "tile_image",
    "tokenize",
    "train",
    "write_corpus",
]
