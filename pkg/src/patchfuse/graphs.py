"""Graph construction and cross-modal fusion.

The visual graph joins retained patches that are 8-neighbors on the
original grid; disconnection between distant retained regions is kept, not
papered over with long-range edges.  The knowledge graph arrives as a JSON
document of entities and relations.  Fusion links the two with exactly one
bridge edge between the highest-betweenness node of each side, which keeps
edge growth constant instead of quadratic.

Betweenness here is the unnormalized path count: for node v, the number of
shortest paths between other node pairs that run through v, each unordered
pair counted once.  Values are exact integers (stored in float64), which
is what makes the oracle tests exact.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from ._kernels import betweenness_counts
from .errors import (
    DanglingRelation,
    DuplicateEntityId,
    EmptyGraph,
    EmptyModality,
    EmptyPrunedSet,
    MalformedDocument,
)
from .patch_grid import FeatureVector, PatchGrid
from .pruning import PrunedSet

VISUAL = 0
TEXT = 1

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF


def _check_edges(edges: np.ndarray, count: int) -> np.ndarray:
    edges = np.ascontiguousarray(edges, dtype=np.int64).reshape(-1, 2)
    if edges.size:
        if edges.min() < 0 or edges.max() >= count:
            raise ValueError("edge endpoint out of range")
        if np.any(edges[:, 0] >= edges[:, 1]):
            raise ValueError("edges must be lower-endpoint-first, no self-loops")
        keys = edges[:, 0] * count + edges[:, 1]
        if np.any(np.diff(keys) <= 0):
            raise ValueError("edges must be lexicographically sorted and unique")
    edges.flags.writeable = False
    return edges


@dataclass(frozen=True)
class VisualNode:
    patch_index: int
    grid_row: int
    grid_col: int
    feature: FeatureVector


@dataclass(frozen=True)
class VisualGraph:
    nodes: tuple = field(repr=False)
    edges: np.ndarray = field(repr=False)  # (E, 2) node positions, lo first

    def __post_init__(self):
        if not self.nodes:
            raise EmptyPrunedSet("visual graph has no nodes")
        idx = [n.patch_index for n in self.nodes]
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise ValueError("patch indices must be strictly increasing")
        object.__setattr__(self, "edges", _check_edges(self.edges, len(self.nodes)))

    @property
    def count(self) -> int:
        return len(self.nodes)


@dataclass(frozen=True)
class KgNode:
    entity_id: str
    text: str
    label: str
    feature: FeatureVector


@dataclass(frozen=True)
class KnowledgeGraph:
    nodes: tuple = field(repr=False)
    edges: np.ndarray = field(repr=False)  # (E, 2) node positions, lo first
    edge_labels: tuple = ()

    def __post_init__(self):
        if not self.nodes:
            raise EmptyGraph("knowledge graph has no entities")
        ids = [n.entity_id for n in self.nodes]
        if len(set(ids)) != len(ids):
            raise DuplicateEntityId("entity ids must be unique")
        edges = _check_edges(self.edges, len(self.nodes))
        object.__setattr__(self, "edges", edges)
        if len(self.edge_labels) != len(edges):
            raise ValueError("edge_labels must align with edges")

    @property
    def count(self) -> int:
        return len(self.nodes)


@dataclass(frozen=True)
class UnifiedNode:
    node_id: int
    modality: int  # VISUAL or TEXT
    origin: int  # patch index or entity ordinal
    feature: FeatureVector


@dataclass(frozen=True, eq=False)
class UnifiedGraph:
    """Fused graph.  Node ids are handles; the semantic identity of a node
    is its (modality, origin) pair, and all canonical forms (equality,
    wire bytes, message passing order) sort by that pair, so relabeling
    ids or reordering the node list changes nothing observable.
    """

    nodes: tuple = field(repr=False)
    edges: np.ndarray = field(repr=False)  # (E, 2) node id pairs
    bridge: tuple = (0, 0)

    def __post_init__(self):
        if not self.nodes:
            raise EmptyModality("unified graph has no nodes")
        ids = [n.node_id for n in self.nodes]
        if len(set(ids)) != len(ids):
            raise ValueError("node ids must be unique")
        if len({(n.modality, n.origin) for n in self.nodes}) != len(self.nodes):
            raise ValueError("(modality, origin) pairs must be unique")
        dims = {n.feature.dim for n in self.nodes}
        if len(dims) != 1:
            raise ValueError("all features must share one dimension")
        for n in self.nodes:
            if n.modality not in (VISUAL, TEXT):
                raise ValueError(f"unknown modality {n.modality}")
        modality_of = {n.node_id: n.modality for n in self.nodes}
        edges = np.ascontiguousarray(self.edges, dtype=np.int64).reshape(-1, 2)
        if edges.shape[0] == 0:
            raise ValueError("unified graph must contain the bridge edge")
        pairs = set()
        cross = []
        for a, b in edges:
            a, b = int(a), int(b)
            if a == b:
                raise ValueError("self-loop edge")
            if a not in modality_of or b not in modality_of:
                raise ValueError("edge endpoint is not a node id")
            key = (min(a, b), max(a, b))
            if key in pairs:
                raise ValueError("duplicate edge")
            pairs.add(key)
            if modality_of[a] != modality_of[b]:
                cross.append(key)
        bridge = (int(self.bridge[0]), int(self.bridge[1]))
        bridge_key = (min(bridge), max(bridge))
        if len(cross) != 1 or cross[0] != bridge_key:
            raise ValueError("exactly one cross-modal edge must equal the bridge")
        if not any(n.modality == VISUAL for n in self.nodes) or not any(
            n.modality == TEXT for n in self.nodes
        ):
            raise EmptyModality("both modalities must be present")
        edges.flags.writeable = False
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "bridge", bridge)

    @property
    def count(self) -> int:
        return len(self.nodes)

    @property
    def dim(self) -> int:
        return self.nodes[0].feature.dim

    def canonical(self):
        """Nodes sorted by (modality, origin) plus rank-space edges.

        Returns (nodes, edges, bridge) with edges as (E, 2) ranks, lower
        rank first, lexicographically sorted, and bridge as a rank pair.
        """
        nodes = tuple(sorted(self.nodes, key=lambda n: (n.modality, n.origin)))
        rank = {n.node_id: i for i, n in enumerate(nodes)}
        edges = np.array(
            [[rank[int(a)], rank[int(b)]] for a, b in self.edges], dtype=np.int64
        ).reshape(-1, 2)
        edges.sort(axis=1)
        edges = edges[np.lexsort((edges[:, 1], edges[:, 0]))]
        a, b = rank[self.bridge[0]], rank[self.bridge[1]]
        return nodes, edges, (min(a, b), max(a, b))

    def __eq__(self, other):
        if not isinstance(other, UnifiedGraph):
            return NotImplemented
        a_nodes, a_edges, a_bridge = self.canonical()
        b_nodes, b_edges, b_bridge = other.canonical()
        if len(a_nodes) != len(b_nodes) or a_bridge != b_bridge:
            return False
        for x, y in zip(a_nodes, b_nodes):
            if (x.modality, x.origin) != (y.modality, y.origin):
                return False
            if not np.array_equal(x.feature.values, y.feature.values):
                return False
        return np.array_equal(a_edges, b_edges)


@dataclass(frozen=True)
class CentralityScores:
    values: np.ndarray

    def __post_init__(self):
        v = np.ascontiguousarray(self.values, dtype=np.float64)
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    def argmax(self) -> int:
        """Highest-centrality node; ties go to the lowest index."""
        return int(np.argmax(self.values))


def build_visual_graph(grid: PatchGrid, pruned: PrunedSet) -> VisualGraph:
    """Retained patches as nodes, 8-neighbor grid adjacency as edges."""
    if pruned.count == 0:
        raise EmptyPrunedSet("cannot build a visual graph from zero patches")
    if pruned.total != grid.count:
        raise ValueError("pruned set does not match grid size")
    position = {int(p): i for i, p in enumerate(pruned.retained)}
    cols = grid.cols
    rows = grid.rows
    nodes = []
    edges = []
    for i, patch_idx in enumerate(pruned.retained):
        patch = grid.patches[int(patch_idx)]
        nodes.append(
            VisualNode(
                patch_index=patch.index,
                grid_row=patch.grid_row,
                grid_col=patch.grid_col,
                feature=patch.feature,
            )
        )
        r, c = patch.grid_row, patch.grid_col
        # forward half of the 8-neighborhood, in ascending patch index order,
        # so each edge appears once and the list comes out lexsorted
        for dr, dc in ((0, 1), (1, -1), (1, 0), (1, 1)):
            rr, cc = r + dr, c + dc
            if 0 <= rr < rows and 0 <= cc < cols:
                j = position.get(rr * cols + cc)
                if j is not None:
                    edges.append((i, j))
    edge_arr = (
        np.array(edges, dtype=np.int64)
        if edges
        else np.empty((0, 2), np.int64)
    )
    return VisualGraph(nodes=tuple(nodes), edges=edge_arr)


def _fnv1a(data: bytes) -> int:
    h = _FNV_OFFSET
    for byte in data:
        h = ((h ^ byte) * _FNV_PRIME) & _MASK64
    return h


def entity_embedding(text: str, label: str, dim: int = 64) -> FeatureVector:
    """Hashed character-trigram bag of lowercase(text + "§" + label).

    Each trigram lands in bucket fnv1a(utf8(trigram)) mod dim; the count
    vector is L2-normalized.  Inputs too short for any trigram map to e_0.
    """
    if dim < 8:
        raise ValueError("embedding dim must be >= 8")
    combined = (text + "§" + label).lower()
    counts = np.zeros(dim, np.float64)
    for i in range(len(combined) - 2):
        bucket = _fnv1a(combined[i : i + 3].encode("utf-8")) % dim
        counts[bucket] += 1.0
    norm = float(np.linalg.norm(counts))
    if norm == 0.0:
        counts[0] = 1.0
        return FeatureVector(counts)
    return FeatureVector(counts / norm)


def _require(cond: bool, message: str):
    if not cond:
        raise MalformedDocument(message)


def parse_knowledge_graph(data: bytes, dim: int = 64) -> KnowledgeGraph:
    """Parse the entity/relation JSON document into a KnowledgeGraph.

    Duplicate relations (either direction) collapse to one edge keeping the
    first label seen.  Unknown keys are ignored so converted exports can
    carry extra metadata.
    """
    try:
        doc = json.loads(data)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise MalformedDocument(f"not valid JSON: {exc}") from None
    _require(isinstance(doc, dict), "top level must be an object")
    _require(isinstance(doc.get("entities"), list), "missing 'entities' list")
    _require(isinstance(doc.get("relations"), list), "missing 'relations' list")
    if not doc["entities"]:
        raise EmptyGraph("document contains zero entities")
    nodes = []
    ordinal = {}
    for item in doc["entities"]:
        _require(isinstance(item, dict), "entity must be an object")
        for key in ("id", "text", "label"):
            _require(isinstance(item.get(key), str), f"entity needs string '{key}'")
        if item["id"] in ordinal:
            raise DuplicateEntityId(f"duplicate entity id {item['id']!r}")
        ordinal[item["id"]] = len(nodes)
        nodes.append(
            KgNode(
                entity_id=item["id"],
                text=item["text"],
                label=item["label"],
                feature=entity_embedding(item["text"], item["label"], dim),
            )
        )
    seen = {}
    for item in doc["relations"]:
        _require(isinstance(item, dict), "relation must be an object")
        for key in ("src", "dst", "label"):
            _require(isinstance(item.get(key), str), f"relation needs string '{key}'")
        for end in (item["src"], item["dst"]):
            if end not in ordinal:
                raise DanglingRelation(f"relation references unknown id {end!r}")
        a, b = ordinal[item["src"]], ordinal[item["dst"]]
        _require(a != b, f"self-relation on {item['src']!r}")
        key = (min(a, b), max(a, b))
        if key not in seen:
            seen[key] = item["label"]
    ordered = sorted(seen)
    edge_arr = (
        np.array(ordered, dtype=np.int64) if ordered else np.empty((0, 2), np.int64)
    )
    return KnowledgeGraph(
        nodes=tuple(nodes),
        edges=edge_arr,
        edge_labels=tuple(seen[k] for k in ordered),
    )


def dump_knowledge_graph(kg: KnowledgeGraph) -> bytes:
    """Canonical JSON form accepted back by parse_knowledge_graph."""
    doc = {
        "entities": [
            {"id": n.entity_id, "text": n.text, "label": n.label} for n in kg.nodes
        ],
        "relations": [
            {
                "src": kg.nodes[int(a)].entity_id,
                "dst": kg.nodes[int(b)].entity_id,
                "label": lab,
            }
            for (a, b), lab in zip(kg.edges, kg.edge_labels)
        ],
    }
    return (json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n").encode()


def _adjacency(graph):
    if isinstance(graph, UnifiedGraph):
        nodes, edges, _ = graph.canonical()
        return len(nodes), edges
    return graph.count, graph.edges


def _csr(n: int, edges: np.ndarray):
    if edges.size == 0:
        return np.zeros(n + 1, np.int64), np.empty(0, np.int64)
    tails = np.concatenate([edges[:, 0], edges[:, 1]])
    heads = np.concatenate([edges[:, 1], edges[:, 0]])
    order = np.lexsort((heads, tails))
    tails, heads = tails[order], heads[order]
    indptr = np.zeros(n + 1, np.int64)
    np.add.at(indptr, tails + 1, 1)
    np.cumsum(indptr, out=indptr)
    return indptr, heads


def betweenness_centrality(graph) -> CentralityScores:
    """Shortest-path count through each node, unordered pairs counted once."""
    n, edges = _adjacency(graph)
    indptr, indices = _csr(n, edges)
    return CentralityScores(betweenness_counts(indptr, indices, n))


def _fit_dim(values: np.ndarray, dim: int) -> np.ndarray:
    """Tail-aligned resize: zero-pad or truncate at the front."""
    out = np.zeros(dim, np.float64)
    take = min(dim, values.size)
    if take:
        out[dim - take :] = values[values.size - take :]
    # quantize now so the float32 wire format roundtrips bit-exactly
    return out.astype(np.float32).astype(np.float64)


def fuse(g1: VisualGraph, g2: KnowledgeGraph, dim: int = 67) -> UnifiedGraph:
    """Join both graphs with one bridge between their BC argmax nodes."""
    if g1.count == 0:
        raise EmptyModality("visual graph is empty")
    if g2.count == 0:
        raise EmptyModality("knowledge graph is empty")
    visual_anchor = betweenness_centrality(g1).argmax()
    text_anchor = betweenness_centrality(g2).argmax()
    n1 = g1.count
    nodes = []
    for i, node in enumerate(g1.nodes):
        nodes.append(
            UnifiedNode(
                node_id=i,
                modality=VISUAL,
                origin=node.patch_index,
                feature=FeatureVector(_fit_dim(node.feature.values, dim)),
            )
        )
    for j, node in enumerate(g2.nodes):
        nodes.append(
            UnifiedNode(
                node_id=n1 + j,
                modality=TEXT,
                origin=j,
                feature=FeatureVector(_fit_dim(node.feature.values, dim)),
            )
        )
    bridge = (visual_anchor, n1 + text_anchor)
    parts = [g1.edges, g2.edges + n1, np.array([bridge], dtype=np.int64)]
    edges = np.concatenate([p.reshape(-1, 2) for p in parts])
    edges = edges[np.lexsort((edges[:, 1], edges[:, 0]))]
    return UnifiedGraph(nodes=tuple(nodes), edges=edges, bridge=bridge)
