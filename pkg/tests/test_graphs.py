"""Visual/knowledge graph construction, centrality, embeddings, and fusion."""

import json

import numpy as np
import pytest

from conftest import bc_oracle, random_edges
from patchfuse.attention import SalienceVector
from patchfuse.errors import (
    DanglingRelation,
    DuplicateEntityId,
    EmptyGraph,
    EmptyPrunedSet,
    MalformedDocument,
)
from patchfuse.graphs import (
    TEXT,
    VISUAL,
    CentralityScores,
    UnifiedGraph,
    UnifiedNode,
    betweenness_centrality,
    build_visual_graph,
    dump_knowledge_graph,
    entity_embedding,
    fuse,
    parse_knowledge_graph,
)
from patchfuse.patch_grid import FeatureVector, GrayImage, tile_image
from patchfuse.pruning import PrunedSet, TopK, prune_topk
from patchfuse.rng import Stream


def make_grid(seed, size=48, ps=16):
    px = Stream(seed).uniforms(size * size)
    return tile_image(GrayImage(size, size, px), ps)


def pruned(grid, indices):
    idx = np.array(sorted(indices), dtype=np.int64)
    return PrunedSet(retained=idx, total=grid.count, policy=TopK(1.0))


def kg_doc(entities, relations):
    return json.dumps({"entities": entities, "relations": relations}).encode()


def simple_kg(n=3, dim=16):
    ents = [{"id": f"e{i}", "text": f"entity {i}", "label": "observation"} for i in range(n)]
    rels = [
        {"src": f"e{i}", "dst": f"e{i+1}", "label": "related_to"} for i in range(n - 1)
    ]
    return parse_knowledge_graph(kg_doc(ents, rels), dim=dim)


# ---------------------------------------------------------------- visual side


def test_full_3x3_grid_has_20_edges():
    grid = make_grid(1)
    g = build_visual_graph(grid, pruned(grid, range(9)))
    # 6 horizontal + 6 vertical + 8 diagonal adjacencies
    assert g.edges.shape == (20, 2)


def test_visual_edges_match_brute_force():
    grid = make_grid(2, size=64, ps=16)  # 4x4
    s = Stream(7)
    for trial in range(40):
        sub = s.split(trial)
        k = 1 + sub.below(grid.count)
        keep = sorted(int(v) for v in sub.choice(grid.count, k))
        g = build_visual_graph(grid, pruned(grid, keep))
        pos = [(i // grid.cols, i % grid.cols) for i in keep]
        want = sorted(
            (a, b)
            for a in range(len(keep))
            for b in range(a + 1, len(keep))
            if abs(pos[a][0] - pos[b][0]) <= 1 and abs(pos[a][1] - pos[b][1]) <= 1
        )
        assert [tuple(e) for e in g.edges] == want


def test_visual_nodes_carry_patch_features():
    grid = make_grid(3)
    g = build_visual_graph(grid, pruned(grid, [2, 5, 7]))
    assert [n.patch_index for n in g.nodes] == [2, 5, 7]
    np.testing.assert_array_equal(g.nodes[1].feature.values, grid.patches[5].feature.values)


def test_isolated_corners_have_no_edges():
    grid = make_grid(4)  # 3x3
    g = build_visual_graph(grid, pruned(grid, [0, 8]))
    assert g.edges.shape == (0, 2)


def test_empty_pruned_set_rejected():
    grid = make_grid(5)
    with pytest.raises(EmptyPrunedSet):
        build_visual_graph(grid, pruned(grid, []))


# ----------------------------------------------------------------- centrality


def path_graph(n):
    return np.array([(i, i + 1) for i in range(n - 1)], dtype=np.int64)


def test_betweenness_path5():
    scores = betweenness_centrality_raw(5, path_graph(5))
    np.testing.assert_array_equal(scores, [0, 3, 4, 3, 0])


def test_betweenness_star5():
    edges = np.array([(0, i) for i in range(1, 5)], dtype=np.int64)
    scores = betweenness_centrality_raw(5, edges)
    np.testing.assert_array_equal(scores, [6, 0, 0, 0, 0])


def test_betweenness_complete4():
    edges = np.array(
        [(a, b) for a in range(4) for b in range(a + 1, 4)], dtype=np.int64
    )
    np.testing.assert_array_equal(betweenness_centrality_raw(4, edges), np.zeros(4))


def test_betweenness_theta_counts_multiplicity():
    # two hubs joined by three 2-hop routes; hub pairs see each middle once
    edges = np.array([(0, 2), (0, 3), (0, 4), (1, 2), (1, 3), (1, 4)], dtype=np.int64)
    scores = betweenness_centrality_raw(5, edges)
    np.testing.assert_array_equal(scores, [3, 3, 1, 1, 1])


def test_betweenness_disconnected():
    # two separate paths; no cross-component contributions
    edges = np.array([(0, 1), (1, 2), (3, 4)], dtype=np.int64)
    scores = betweenness_centrality_raw(5, edges)
    np.testing.assert_array_equal(scores, [0, 1, 0, 0, 0])


def test_betweenness_matches_oracle_random():
    s = Stream(99)
    for trial in range(60):
        sub = s.split(trial)
        n = 2 + sub.below(9)
        edges = random_edges(sub, n)
        got = betweenness_centrality_raw(n, edges)
        want = bc_oracle(n, [tuple(e) for e in edges])
        np.testing.assert_array_equal(got, want)


def betweenness_centrality_raw(n, edges):
    """Centrality on a bare edge list, via a throwaway node wrapper."""
    from patchfuse._kernels import betweenness_counts
    from patchfuse.graphs import _csr

    indptr, indices = _csr(n, np.asarray(edges, dtype=np.int64).reshape(-1, 2))
    return betweenness_counts(indptr, indices, n)


def test_argmax_tie_breaks_low():
    assert CentralityScores(np.array([2.0, 5.0, 5.0])).argmax() == 1
    assert CentralityScores(np.array([0.0, 0.0])).argmax() == 0


# ----------------------------------------------------------------- embeddings


def test_embedding_deterministic_unit_norm():
    a = entity_embedding("right pleural effusion", "finding", 32)
    b = entity_embedding("right pleural effusion", "finding", 32)
    np.testing.assert_array_equal(a.values, b.values)
    assert float(np.linalg.norm(a.values)) == pytest.approx(1.0, abs=1e-12)
    assert a.dim == 32


def test_embedding_label_matters():
    a = entity_embedding("opacity", "finding", 64)
    b = entity_embedding("opacity", "device", 64)
    assert not np.array_equal(a.values, b.values)


def test_embedding_distinct_texts_diverge():
    a = entity_embedding("opacity", "finding", 64).values
    b = entity_embedding("effusion", "finding", 64).values
    cos = float(a @ b)
    assert cos < 0.9


def test_embedding_short_text_falls_back():
    v = entity_embedding("", "", 16).values
    want = np.zeros(16)
    want[0] = 1.0
    np.testing.assert_array_equal(v, want)


def test_embedding_rejects_tiny_dim():
    with pytest.raises(ValueError):
        entity_embedding("x", "y", 7)


def test_embedding_case_insensitive():
    a = entity_embedding("Opacity", "Finding", 32)
    b = entity_embedding("opacity", "finding", 32)
    np.testing.assert_array_equal(a.values, b.values)


# -------------------------------------------------------------------- kg json


def test_parse_simple_chain():
    kg = simple_kg(3)
    assert kg.count == 3
    assert [tuple(e) for e in kg.edges] == [(0, 1), (1, 2)]
    assert kg.edge_labels == ("related_to", "related_to")


def test_parse_duplicate_relations_collapse():
    ents = [{"id": "a", "text": "aaa", "label": "l"}, {"id": "b", "text": "bbb", "label": "l"}]
    rels = [
        {"src": "a", "dst": "b", "label": "first"},
        {"src": "b", "dst": "a", "label": "second"},
    ]
    kg = parse_knowledge_graph(kg_doc(ents, rels))
    assert kg.edges.shape == (1, 2)
    assert kg.edge_labels == ("first",)


def test_parse_ignores_unknown_keys():
    ents = [{"id": "a", "text": "aaa", "label": "l", "confidence": 0.9}]
    kg = parse_knowledge_graph(kg_doc(ents, []))
    assert kg.count == 1


@pytest.mark.parametrize(
    "payload,err",
    [
        (b"not json", MalformedDocument),
        (b"[]", MalformedDocument),
        (kg_doc([], []), EmptyGraph),
        (kg_doc([{"id": "a", "text": "t"}], []), MalformedDocument),
        (
            kg_doc(
                [{"id": "a", "text": "t", "label": "l"}] * 2,
                [],
            ),
            DuplicateEntityId,
        ),
        (
            kg_doc(
                [{"id": "a", "text": "t", "label": "l"}],
                [{"src": "a", "dst": "ghost", "label": "r"}],
            ),
            DanglingRelation,
        ),
        (
            kg_doc(
                [{"id": "a", "text": "t", "label": "l"}],
                [{"src": "a", "dst": "a", "label": "r"}],
            ),
            MalformedDocument,
        ),
    ],
)
def test_parse_rejects_malformed(payload, err):
    with pytest.raises(err):
        parse_knowledge_graph(payload)


def test_dump_parse_roundtrip():
    kg = simple_kg(4, dim=24)
    back = parse_knowledge_graph(dump_knowledge_graph(kg), dim=24)
    assert [n.entity_id for n in back.nodes] == [n.entity_id for n in kg.nodes]
    assert back.edge_labels == kg.edge_labels
    np.testing.assert_array_equal(back.edges, kg.edges)
    for x, y in zip(back.nodes, kg.nodes):
        np.testing.assert_array_equal(x.feature.values, y.feature.values)


# --------------------------------------------------------------------- fusion


def test_fuse_edge_count_and_bridge():
    grid = make_grid(20, size=80, ps=16)  # 5x5
    g1 = build_visual_graph(grid, pruned(grid, [0, 1, 2, 3, 4]))  # top row: a path
    g2 = simple_kg(4)
    u = fuse(g1, g2, dim=32)
    assert u.edges.shape[0] == g1.edges.shape[0] + g2.edges.shape[0] + 1
    crossings = [
        (a, b)
        for a, b in u.edges
        if u.nodes[a].modality != u.nodes[b].modality
    ]
    assert len(crossings) == 1
    assert tuple(crossings[0]) == tuple(sorted(u.bridge))


def test_fuse_bridge_is_centrality_argmax():
    grid = make_grid(21, size=80, ps=16)
    g1 = build_visual_graph(grid, pruned(grid, [0, 1, 2, 3, 4]))  # path of 5
    # star knowledge graph: hub plus three leaves
    ents = [{"id": c, "text": f"entity {c}{c}", "label": "l"} for c in "habc"]
    rels = [{"src": "h", "dst": c, "label": "r"} for c in "abc"]
    g2 = parse_knowledge_graph(kg_doc(ents, rels))
    u = fuse(g1, g2, dim=32)
    n1 = g1.count
    # path-of-5 argmax is the middle (position 2); star argmax is the hub (0)
    assert u.bridge == (2, n1 + 0)
    want_vis = bc_oracle(n1, [tuple(e) for e in g1.edges]).argmax()
    want_txt = bc_oracle(g2.count, [tuple(e) for e in g2.edges]).argmax()
    assert u.bridge == (int(want_vis), n1 + int(want_txt))


def test_fuse_node_layout():
    grid = make_grid(22)
    g1 = build_visual_graph(grid, pruned(grid, [1, 4, 8]))
    g2 = simple_kg(2)
    u = fuse(g1, g2, dim=16)
    assert [n.modality for n in u.nodes] == [VISUAL] * 3 + [TEXT] * 2
    assert [n.origin for n in u.nodes] == [1, 4, 8, 0, 1]
    assert [n.node_id for n in u.nodes] == list(range(5))
    assert all(n.feature.dim == 16 for n in u.nodes)


def test_fuse_feature_tail_alignment():
    grid = make_grid(23)
    g1 = build_visual_graph(grid, pruned(grid, [0, 1]))
    g2 = simple_kg(2, dim=16)
    u = fuse(g1, g2, dim=70)
    # 66-wide visual feature lands in the last 66 slots, zero-padded in front
    vis = u.nodes[0].feature.values
    np.testing.assert_array_equal(vis[:4], np.zeros(4))
    np.testing.assert_array_equal(
        vis[4:], g1.nodes[0].feature.values.astype(np.float32).astype(np.float64)
    )
    # 16-wide text feature keeps its tail when truncating to dim
    u2 = fuse(g1, g2, dim=8)
    txt = u2.nodes[2].feature.values
    np.testing.assert_array_equal(
        txt, g2.nodes[0].feature.values[-8:].astype(np.float32).astype(np.float64)
    )


# ------------------------------------------------------------- unified graph


def small_unified():
    grid = make_grid(30)
    g1 = build_visual_graph(grid, pruned(grid, [0, 1, 3, 4]))
    return fuse(g1, simple_kg(3), dim=12)


def test_unified_relabeling_is_invisible():
    u = small_unified()
    perm = Stream(8).permutation(len(u.nodes))
    relabel = {int(old): int(perm[old]) for old in range(len(u.nodes))}
    nodes = tuple(
        UnifiedNode(relabel[n.node_id], n.modality, n.origin, n.feature)
        for n in reversed(u.nodes)
    )
    edges = np.array([(relabel[a], relabel[b]) for a, b in u.edges], dtype=np.int64)
    bridge = (relabel[u.bridge[0]], relabel[u.bridge[1]])
    v = UnifiedGraph(nodes=nodes, edges=edges, bridge=bridge)
    assert v == u
    from patchfuse.serialization import encode

    assert encode(v) == encode(u)


def test_unified_feature_change_breaks_equality():
    u = small_unified()
    bumped = list(u.nodes)
    vals = bumped[0].feature.values.copy()
    vals[-1] += 1.0
    bumped[0] = UnifiedNode(
        bumped[0].node_id, bumped[0].modality, bumped[0].origin, FeatureVector(vals)
    )
    v = UnifiedGraph(nodes=tuple(bumped), edges=u.edges.copy(), bridge=u.bridge)
    assert v != u


def test_unified_rejects_duplicate_edge():
    u = small_unified()
    edges = np.vstack([u.edges, u.edges[:1]])
    with pytest.raises(ValueError):
        UnifiedGraph(nodes=u.nodes, edges=edges, bridge=u.bridge)


def test_unified_rejects_second_cross_edge():
    u = small_unified()
    vis_ids = [n.node_id for n in u.nodes if n.modality == VISUAL]
    txt_ids = [n.node_id for n in u.nodes if n.modality == TEXT]
    extra = None
    for a in vis_ids:
        for b in txt_ids:
            pair = (min(a, b), max(a, b))
            if pair != tuple(sorted(u.bridge)):
                extra = pair
                break
        if extra:
            break
    edges = np.vstack([u.edges, np.array(extra, dtype=np.int64)])
    with pytest.raises(ValueError):
        UnifiedGraph(nodes=u.nodes, edges=edges, bridge=u.bridge)


def test_unified_rejects_self_loop():
    u = small_unified()
    edges = np.vstack([u.edges, np.array([(0, 0)], dtype=np.int64)])
    with pytest.raises(ValueError):
        UnifiedGraph(nodes=u.nodes, edges=edges, bridge=u.bridge)


def test_canonical_order_is_modality_then_origin():
    u = small_unified()
    nodes, edges, bridge = u.canonical()
    keys = [(n.modality, n.origin) for n in nodes]
    assert keys == sorted(keys)
    assert np.all(edges[:, 0] < edges[:, 1])
    assert nodes[bridge[0]].modality != nodes[bridge[1]].modality
