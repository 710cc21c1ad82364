"""Binary graph format: layout arithmetic, roundtrips, and hostile input."""

import struct

import numpy as np
import pytest

from patchfuse.errors import (
    BadMagic,
    BridgeMissing,
    EdgeOutOfRange,
    MalformedPayload,
    PipelineError,
    Truncated,
    UnsupportedVersion,
)
from patchfuse.graphs import TEXT, VISUAL, UnifiedGraph, UnifiedNode
from patchfuse.patch_grid import FeatureVector
from patchfuse.pipeline import study_to_unified
from patchfuse.rng import Stream
from patchfuse.serialization import decode, encode, encoded_size, size_report


def minimal_graph(dim=4):
    nodes = (
        UnifiedNode(0, VISUAL, 0, FeatureVector(np.zeros(dim))),
        UnifiedNode(1, TEXT, 0, FeatureVector(np.ones(dim))),
    )
    edges = np.array([(0, 1)], dtype=np.int64)
    return UnifiedGraph(nodes=nodes, edges=edges, bridge=(0, 1))


def test_minimal_payload_is_76_bytes():
    data = encode(minimal_graph())
    assert len(data) == 76
    assert encoded_size(2, 1, 4) == 76


def test_size_formula_is_affine():
    # header 26, node 5 + 4*dim, edge 8
    for n, e, d in [(2, 1, 4), (5, 7, 16), (30, 50, 67)]:
        assert encoded_size(n, e, d) == 26 + n * (5 + 4 * d) + 8 * e
    assert encoded_size(3, 2, 8) - encoded_size(2, 2, 8) == 5 + 4 * 8
    assert encoded_size(2, 3, 8) - encoded_size(2, 2, 8) == 8


def test_header_fields():
    data = encode(minimal_graph(dim=6))
    magic, version, nodes, edges, dim, blo, bhi = struct.unpack_from("<4sHIIIII", data)
    assert (magic, version) == (b"NRLG", 1)
    assert (nodes, edges, dim) == (2, 1, 6)
    assert (blo, bhi) == (0, 1)


def test_roundtrip_minimal():
    g = minimal_graph()
    data = encode(g)
    assert decode(data) == g
    assert encode(decode(data)) == data


def test_roundtrip_real_graphs(unified_pair):
    for g in unified_pair:
        data = encode(g)
        back = decode(data)
        assert back == g
        assert encode(back) == data
        assert len(data) == encoded_size(back.count, back.edges.shape[0], back.dim)


def test_encode_is_relabel_invariant():
    g = minimal_graph()
    swapped = UnifiedGraph(
        nodes=(
            UnifiedNode(5, TEXT, 0, FeatureVector(np.ones(4))),
            UnifiedNode(3, VISUAL, 0, FeatureVector(np.zeros(4))),
        ),
        edges=np.array([(5, 3)], dtype=np.int64),
        bridge=(3, 5),
    )
    assert encode(swapped) == encode(g)


def test_decode_rejects_bad_magic():
    data = bytearray(encode(minimal_graph()))
    data[:4] = b"WHAT"
    with pytest.raises(BadMagic):
        decode(bytes(data))


def test_decode_rejects_future_version():
    data = bytearray(encode(minimal_graph()))
    struct.pack_into("<H", data, 4, 2)
    with pytest.raises(UnsupportedVersion):
        decode(bytes(data))


def test_decode_rejects_all_truncations():
    data = encode(minimal_graph())
    for cut in range(len(data)):
        with pytest.raises(PipelineError):
            decode(data[:cut])


def test_short_prefix_is_truncated_not_bad_magic():
    data = encode(minimal_graph())
    with pytest.raises(Truncated):
        decode(data[:3])
    with pytest.raises(Truncated):
        decode(data[:20])


def test_decode_rejects_trailing_garbage():
    data = encode(minimal_graph())
    with pytest.raises(MalformedPayload):
        decode(data + b"\x00")


def test_decode_rejects_edge_out_of_range(unified_pair):
    g = unified_pair[0]
    data = bytearray(encode(g))
    n, e, d = g.count, g.edges.shape[0], g.dim
    edge_base = 26 + n * (5 + 4 * d)
    struct.pack_into("<I", data, edge_base, n + 3)  # first edge endpoint
    with pytest.raises((EdgeOutOfRange, MalformedPayload)):
        decode(bytes(data))


def test_decode_rejects_bridge_out_of_range():
    data = bytearray(encode(minimal_graph()))
    struct.pack_into("<II", data, 18, 0, 9)  # bridge fields in the header
    with pytest.raises((EdgeOutOfRange, BridgeMissing)):
        decode(bytes(data))


def test_decode_rejects_missing_bridge():
    # point the header bridge at a pair that is not the cross-modal edge
    g = study_graph()
    data = bytearray(encode(g))
    # set bridge to the first same-modality edge in the payload
    nodes, edges, bridge = g.canonical()
    same = next((a, b) for a, b in edges if nodes[a].modality == nodes[b].modality)
    struct.pack_into("<II", data, 18, int(same[0]), int(same[1]))
    with pytest.raises(BridgeMissing):
        decode(bytes(data))


def study_graph():
    from patchfuse.fixtures import generate_study

    study = generate_study(seed=31, index=0, positive=True, image_size=64, patch_size=16)
    return study_to_unified(study, 16, fraction=0.6, dim=12)


def test_decode_rejects_nonfinite_feature():
    data = bytearray(encode(minimal_graph()))
    struct.pack_into("<f", data, 26 + 5, float("nan"))  # first feature lane
    with pytest.raises(MalformedPayload):
        decode(bytes(data))


def test_decode_rejects_unsorted_nodes():
    # swap the two node records; canonical order is part of the format
    data = encode(minimal_graph())
    rec = 5 + 4 * 4
    body = data[26 : 26 + 2 * rec]
    swapped = data[:26] + body[rec:] + body[:rec] + data[26 + 2 * rec :]
    with pytest.raises(MalformedPayload):
        decode(swapped)


def test_decode_rejects_bad_modality_byte():
    data = bytearray(encode(minimal_graph()))
    data[26] = 7
    with pytest.raises(MalformedPayload):
        decode(bytes(data))


def test_decode_rejects_zero_nodes():
    data = struct.pack("<4sHIIIII", b"NRLG", 1, 0, 0, 4, 0, 0)
    with pytest.raises(MalformedPayload):
        decode(data)


def test_fuzz_corruptions_never_crash(unified_pair):
    # every mutation either raises a typed error or decodes to a graph
    # that re-encodes to the same bytes (float lanes carry no redundancy)
    data = encode(unified_pair[0])
    s = Stream(2024)
    rejected = consistent = 0
    for _ in range(400):
        pos = s.below(len(data))
        delta = 1 + s.below(255)
        buf = bytearray(data)
        buf[pos] = (buf[pos] + delta) & 0xFF
        blob = bytes(buf)
        try:
            back = decode(blob)
        except PipelineError:
            rejected += 1
        else:
            assert encode(back) == blob
            consistent += 1
    assert rejected + consistent == 400
    assert rejected > 0


def test_size_report_fields(unified_pair):
    g = unified_pair[0]
    from patchfuse.pruning import PrunedSet, TopK

    pruned = PrunedSet(
        retained=np.arange(4, dtype=np.int64), total=16, policy=TopK(0.25)
    )
    data = encode(g)
    rep = size_report(65551, data, pruned)
    assert rep.node_compression == pytest.approx(0.75)
    assert rep.encoded_bytes == len(data)
    assert rep.original_bytes == 65551
    assert rep.byte_ratio == pytest.approx(len(data) / 65551)
