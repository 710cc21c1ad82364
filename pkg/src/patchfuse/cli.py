"""Command line front door.

Every subcommand reads and writes only the documented formats (PGM, ATTN,
KG JSON, NRLG, NRLM, CSV, JSON).  Exit codes: 0 success, 1 usage error,
2 data error.  Diagnostics go to stderr; results go to files or stdout.

Seeding: --seed wins, then the NEURAL_SEED environment variable, then 0.
All pipeline randomness flows from that one value, so any command is
bitwise reproducible given the same inputs and seed.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .attention import (
    ATTN_VERSION,
    aggregate_salience,
    load_attention,
    SalienceVector,
)
from .errors import MalformedDocument, PipelineError
from .fixtures import (
    dummy_knowledge_graph,
    generate_corpus,
    read_corpus,
    write_corpus,
)
from .graphs import (
    TEXT,
    VISUAL,
    UnifiedGraph,
    UnifiedNode,
    parse_knowledge_graph,
)
from .metrics import SweepConfig, ablation_sweep, auc, sweep_csv
from .mpnn import (
    NRLM_VERSION,
    MpnnModel,
    TrainConfig,
    dump_model,
    forward,
    load_model,
    train,
)
from .patch_grid import FeatureVector, load_pgm, tile_image
from .pruning import compression_ratio, prune_threshold, prune_topk
from .serialization import NRLG_VERSION, decode, encode
from .pipeline import split_indices, study_to_unified

_MODALITY_NAME = {VISUAL: "VISUAL", TEXT: "TEXT"}
_MODALITY_CODE = {"VISUAL": VISUAL, "TEXT": TEXT}

_DEFAULTS = SweepConfig(seed=0, patch_size=16)


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems exit 1, not argparse's 2
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _resolve_seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("NEURAL_SEED")
    if env is not None:
        try:
            return int(env, 0)
        except ValueError:
            raise _UsageError(f"NEURAL_SEED is not an integer: {env!r}") from None
    return 0


def _write_text(path, text: str):
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _pruned_from_args(salience: SalienceVector, args):
    if args.top_k is not None:
        return prune_topk(salience, args.top_k)
    return prune_threshold(salience, args.tau)


def _add_policy_flags(parser):
    group = parser.add_mutually_exclusive_group(required=True)
    group.add_argument("--top-k", type=float, help="retain fraction in (0, 1]")
    group.add_argument("--tau", type=float, help="strict salience threshold")


def _add_seed(parser):
    parser.add_argument(
        "--seed", type=int, default=None,
        help="pipeline seed (default: NEURAL_SEED or 0)",
    )


def _cmd_tile(args) -> int:
    image = load_pgm(Path(args.image).read_bytes())
    grid = tile_image(image, args.patch_size)
    report = {
        "rows": grid.rows,
        "cols": grid.cols,
        "patches": grid.count,
        "patch_size": grid.patch_size,
        "feature_dim": grid.patches[0].feature.dim,
    }
    _write_text(args.out, json.dumps(report) + "\n")
    return 0


def _cmd_salience(args) -> int:
    matrix = load_attention(Path(args.attention).read_bytes())
    scores = aggregate_salience(matrix)
    doc = {"count": scores.count, "scores": scores.scores.tolist()}
    _write_text(args.out, json.dumps(doc) + "\n")
    return 0


def _load_salience(path) -> SalienceVector:
    try:
        doc = json.loads(Path(path).read_bytes())
        return SalienceVector(np.asarray(doc["scores"], dtype=np.float64))
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise MalformedDocument(f"bad salience file: {exc}") from None


def _cmd_prune(args) -> int:
    salience = _load_salience(args.salience)
    pruned = _pruned_from_args(salience, args)
    policy = (
        {"kind": "topk", "fraction": args.top_k}
        if args.top_k is not None
        else {"kind": "threshold", "tau": args.tau}
    )
    doc = {
        "total": pruned.total,
        "retained": pruned.retained.tolist(),
        "policy": policy,
        "compression": compression_ratio(pruned),
    }
    _write_text(args.out, json.dumps(doc) + "\n")
    return 0


def _cmd_fuse(args) -> int:
    from .graphs import build_visual_graph

    image = load_pgm(Path(args.image).read_bytes())
    grid = tile_image(image, args.patch_size)
    matrix = load_attention(Path(args.attention).read_bytes())
    if matrix.num_patches != grid.count:
        from .errors import DimensionMismatch

        raise DimensionMismatch(
            f"attention covers {matrix.num_patches} patches, grid has {grid.count}"
        )
    pruned = _pruned_from_args(aggregate_salience(matrix), args)
    g1 = build_visual_graph(grid, pruned)
    g2 = parse_knowledge_graph(Path(args.kg).read_bytes())
    from .graphs import fuse as fuse_graphs

    unified = fuse_graphs(g1, g2, args.dim)
    Path(args.out).write_bytes(encode(unified))
    return 0


def _graph_to_json(graph: UnifiedGraph) -> str:
    nodes, edges, bridge = graph.canonical()
    doc = {
        "dim": graph.dim,
        "bridge": list(bridge),
        "nodes": [
            {
                "id": i,
                "modality": _MODALITY_NAME[n.modality],
                "origin": n.origin,
                "feature": n.feature.values.tolist(),
            }
            for i, n in enumerate(nodes)
        ],
        "edges": edges.tolist(),
    }
    return json.dumps(doc) + "\n"


def _graph_from_json(data: bytes) -> UnifiedGraph:
    try:
        doc = json.loads(data)
        nodes = tuple(
            UnifiedNode(
                node_id=int(n["id"]),
                modality=_MODALITY_CODE[n["modality"]],
                origin=int(n["origin"]),
                feature=FeatureVector(np.asarray(n["feature"], dtype=np.float64)),
            )
            for n in doc["nodes"]
        )
        edges = np.asarray(doc["edges"], dtype=np.int64).reshape(-1, 2)
        bridge = (int(doc["bridge"][0]), int(doc["bridge"][1]))
    except (json.JSONDecodeError, KeyError, TypeError, IndexError) as exc:
        raise MalformedDocument(f"bad graph document: {exc}") from None
    try:
        return UnifiedGraph(nodes=nodes, edges=edges, bridge=bridge)
    except ValueError as exc:
        raise MalformedDocument(str(exc)) from None


def _cmd_encode(args) -> int:
    graph = _graph_from_json(Path(args.json).read_bytes())
    Path(args.out).write_bytes(encode(graph))
    return 0


def _cmd_decode(args) -> int:
    graph = decode(Path(args.graph).read_bytes())
    _write_text(args.out, _graph_to_json(graph))
    return 0


def _cmd_stats(args) -> int:
    payload = Path(args.graph).read_bytes()
    graph = decode(payload)
    visual = sum(1 for n in graph.nodes if n.modality == VISUAL)
    doc = {
        "nodes": graph.count,
        "edges": int(graph.edges.shape[0]),
        "dim": graph.dim,
        "bridge": list(graph.bridge),
        "visual_nodes": visual,
        "text_nodes": graph.count - visual,
        "bytes": len(payload),
    }
    _write_text(args.out, json.dumps(doc) + "\n")
    return 0


def _build_graph(payload):
    study, patch_size, top_k, tau, dim, image_only = payload
    kg = dummy_knowledge_graph() if image_only else None
    return study_to_unified(
        study, patch_size, fraction=top_k, tau=tau, dim=dim, kg=kg
    )


def _build_graphs(studies, args, dim, image_only=False, jobs=1):
    payloads = [
        (s, args.patch_size, args.top_k, args.tau, dim, image_only)
        for s in studies
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_build_graph, payloads, chunksize=8))
    return [_build_graph(p) for p in payloads]


def _cmd_train(args) -> int:
    seed = _resolve_seed(args)
    studies = read_corpus(args.corpus)
    train_idx, _, _ = split_indices(len(studies), seed)
    selected = [studies[i] for i in train_idx]
    graphs = _build_graphs(selected, args, args.dim, args.image_only, args.jobs)
    dataset = [(g, s.label) for g, s in zip(graphs, selected)]
    model = MpnnModel.init(args.layers, args.hidden, args.dim + 1, seed=seed)
    history = []
    trained = train(
        model,
        dataset,
        TrainConfig(epochs=args.epochs, learning_rate=args.lr, seed=seed),
        history=history,
    )
    Path(args.out).write_bytes(dump_model(trained))
    print(
        f"trained {args.epochs} epochs on {len(dataset)} graphs, "
        f"final mean loss {history[-1]:.6f}",
        file=sys.stderr,
    )
    return 0


def _cmd_classify(args) -> int:
    model = load_model(Path(args.model).read_bytes())
    graph = decode(Path(args.graph).read_bytes())
    prob = forward(model, graph)
    _write_text(args.out, f"{prob:.6f}\n")
    return 0


def _score_graph(payload):
    model, graph = payload
    return forward(model, graph)


def _cmd_eval(args) -> int:
    seed = _resolve_seed(args)
    studies = read_corpus(args.corpus)
    model = load_model(Path(args.model).read_bytes())
    dim = model.input_dim - 1
    train_idx, val_idx, test_idx = split_indices(len(studies), seed)
    chosen = {
        "train": train_idx,
        "val": val_idx,
        "test": test_idx,
        "all": np.arange(len(studies)),
    }[args.split]
    selected = [studies[i] for i in chosen]
    graphs = _build_graphs(selected, args, dim, args.image_only, args.jobs)
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            scores = list(
                pool.map(_score_graph, [(model, g) for g in graphs], chunksize=8)
            )
    else:
        scores = [forward(model, g) for g in graphs]
    labels = [s.label for s in selected]
    value = auc(np.asarray(scores), np.asarray(labels))
    _write_text(
        args.out, f"split,auc,examples\n{args.split},{value:.6f},{len(labels)}\n"
    )
    return 0


def _cmd_synth(args) -> int:
    seed = _resolve_seed(args)
    studies = generate_corpus(
        seed=seed,
        count=args.count,
        image_size=args.image_size,
        patch_size=args.patch_size,
        positive_rate=args.positive_rate,
        jobs=args.jobs,
    )
    write_corpus(args.out, studies)
    print(f"wrote {len(studies)} studies to {args.out}", file=sys.stderr)
    return 0


def _cmd_ablation(args) -> int:
    seed = _resolve_seed(args)
    try:
        fractions = [float(x) for x in args.fractions.split(",") if x.strip()]
    except ValueError:
        raise _UsageError(f"bad --fractions value: {args.fractions!r}") from None
    if not fractions:
        raise _UsageError("--fractions must name at least one value")
    studies = read_corpus(args.corpus)
    config = SweepConfig(
        seed=seed,
        patch_size=args.patch_size,
        dim=args.dim,
        hidden=args.hidden,
        layers=args.layers,
        epochs=args.epochs,
        learning_rate=args.lr,
    )
    rows = ablation_sweep(studies, fractions, config)
    _write_text(args.out, sweep_csv(rows))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="patchfuse",
        description="attention-guided patch pruning and cross-modal graph fusion",
    )
    parser.add_argument(
        "--version",
        action="version",
        version=(
            f"patchfuse {__version__} "
            f"(formats: ATTN={ATTN_VERSION}, NRLG={NRLG_VERSION}, "
            f"NRLM={NRLM_VERSION})"
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("tile", help="tile a PGM image and report grid shape")
    p.add_argument("--image", required=True)
    p.add_argument("--patch-size", type=int, default=_DEFAULTS.patch_size)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_tile)

    p = sub.add_parser("salience", help="aggregate an ATTN file into scores")
    p.add_argument("--attention", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_salience)

    p = sub.add_parser("prune", help="select patches from a salience file")
    p.add_argument("--salience", required=True)
    _add_policy_flags(p)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_prune)

    p = sub.add_parser("fuse", help="build and encode a unified graph")
    p.add_argument("--image", required=True)
    p.add_argument("--attention", required=True)
    p.add_argument("--kg", required=True)
    p.add_argument("--patch-size", type=int, default=_DEFAULTS.patch_size)
    _add_policy_flags(p)
    p.add_argument("--dim", type=int, default=_DEFAULTS.dim)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_fuse)

    p = sub.add_parser("encode", help="JSON graph document to .nrlg")
    p.add_argument("--json", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_encode)

    p = sub.add_parser("decode", help=".nrlg to JSON graph document")
    p.add_argument("--graph", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_decode)

    p = sub.add_parser("stats", help="node/edge/byte counts of a .nrlg file")
    p.add_argument("--graph", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_stats)

    p = sub.add_parser("train", help="train a classifier on a corpus directory")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--patch-size", type=int, default=_DEFAULTS.patch_size)
    _add_policy_flags(p)
    p.add_argument("--dim", type=int, default=_DEFAULTS.dim)
    p.add_argument("--hidden", type=int, default=_DEFAULTS.hidden)
    p.add_argument("--layers", type=int, default=_DEFAULTS.layers)
    p.add_argument("--epochs", type=int, default=_DEFAULTS.epochs)
    p.add_argument("--lr", type=float, default=_DEFAULTS.learning_rate)
    p.add_argument("--image-only", action="store_true",
                   help="replace each KG with a single dummy node")
    p.add_argument("--jobs", type=int, default=1)
    _add_seed(p)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("classify", help="probability for one .nrlg graph")
    p.add_argument("--model", required=True)
    p.add_argument("--graph", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_classify)

    p = sub.add_parser("eval", help="AUC of a model over a corpus split")
    p.add_argument("--corpus", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--split", choices=("train", "val", "test", "all"),
                   default="test")
    p.add_argument("--patch-size", type=int, default=_DEFAULTS.patch_size)
    _add_policy_flags(p)
    p.add_argument("--image-only", action="store_true")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", default=None)
    _add_seed(p)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("synth", help="write a synthetic corpus directory")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=100)
    p.add_argument("--image-size", type=int, default=128)
    p.add_argument("--patch-size", type=int, default=_DEFAULTS.patch_size)
    p.add_argument("--positive-rate", type=float, default=0.15)
    p.add_argument("--jobs", type=int, default=1)
    _add_seed(p)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("ablation", help="pruning-fraction sweep to CSV")
    p.add_argument("--corpus", required=True)
    p.add_argument("--fractions", required=True,
                   help="comma separated, e.g. 0.023,0.05,0.1,1.0")
    p.add_argument("--patch-size", type=int, default=_DEFAULTS.patch_size)
    p.add_argument("--dim", type=int, default=_DEFAULTS.dim)
    p.add_argument("--hidden", type=int, default=_DEFAULTS.hidden)
    p.add_argument("--layers", type=int, default=_DEFAULTS.layers)
    p.add_argument("--epochs", type=int, default=_DEFAULTS.epochs)
    p.add_argument("--lr", type=float, default=_DEFAULTS.learning_rate)
    p.add_argument("--out", default=None)
    _add_seed(p)
    p.set_defaults(func=_cmd_ablation)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except _UsageError as exc:
        print(f"{parser.prog}: error: {exc}", file=sys.stderr)
        return 1
    except PipelineError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
