"""Bit-exact binary encoding of unified graphs (NRLG) and size accounting.

Layout, all little-endian, no padding, no checksum:

    magic "NRLG" (4) | version u16 = 1 | node count u32 | edge count u32 |
    feature dim u32 | bridge endpoints u32 x2 |
    per node:  modality u8 (0=VISUAL, 1=TEXT) | origin u32 | feature f32 x D
    per edge:  endpoints u32 x2, lower id first, lexicographically sorted

Node ids on the wire are implicit: position in the node section, which is
the graph's canonical (modality, origin) order.  Decoding is strict: any
deviation from canonical form is rejected, which is what makes
encode(decode(b)) == b hold bytewise for every accepted payload.

Features are float32 on disk and float64 in memory; fusion already
quantized every feature through float32, so the roundtrip loses nothing.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import (
    BadMagic,
    BridgeMissing,
    EdgeOutOfRange,
    MalformedPayload,
    Truncated,
    UnsupportedVersion,
)
from .graphs import TEXT, VISUAL, UnifiedGraph, UnifiedNode
from .patch_grid import FeatureVector
from .pruning import PrunedSet, compression_ratio

NRLG_MAGIC = b"NRLG"
NRLG_VERSION = 1

_HEADER = struct.Struct("<4sHIIIII")


def encoded_size(nodes: int, edges: int, dim: int) -> int:
    """Header + nodes*(5 + 4*dim) + edges*8."""
    return _HEADER.size + nodes * (5 + 4 * dim) + edges * 8


def encode(graph: UnifiedGraph) -> bytes:
    nodes, edges, bridge = graph.canonical()
    dim = graph.dim
    out = bytearray()
    out += _HEADER.pack(
        NRLG_MAGIC,
        NRLG_VERSION,
        len(nodes),
        edges.shape[0],
        dim,
        bridge[0],
        bridge[1],
    )
    for node in nodes:
        out += struct.pack("<BI", node.modality, node.origin)
        out += node.feature.values.astype("<f4").tobytes()
    out += edges.astype("<u4").tobytes()
    return bytes(out)


def decode(data: bytes) -> UnifiedGraph:
    if data[:4] != NRLG_MAGIC:
        # a strict prefix of the magic is a truncation, not a foreign file
        if len(data) < 4 and data == NRLG_MAGIC[: len(data)]:
            raise Truncated(f"header needs {_HEADER.size} bytes, got {len(data)}")
        raise BadMagic(f"bad magic {data[:4]!r}")
    if len(data) < _HEADER.size:
        raise Truncated(f"header needs {_HEADER.size} bytes, got {len(data)}")
    magic, version, n_nodes, n_edges, dim, bridge_a, bridge_b = _HEADER.unpack_from(
        data
    )
    if version != NRLG_VERSION:
        raise UnsupportedVersion(f"NRLG version {version}")
    expected = encoded_size(n_nodes, n_edges, dim)
    if len(data) < expected:
        raise Truncated(f"need {expected} bytes, got {len(data)}")
    if len(data) > expected:
        raise MalformedPayload(f"{len(data) - expected} trailing bytes")
    if n_nodes == 0:
        raise MalformedPayload("zero nodes")
    offset = _HEADER.size
    node_width = 5 + 4 * dim
    nodes = []
    prev_key = None
    for i in range(n_nodes):
        modality, origin = struct.unpack_from("<BI", data, offset)
        if modality not in (VISUAL, TEXT):
            raise MalformedPayload(f"node {i}: modality byte {modality}")
        feat = np.frombuffer(data, dtype="<f4", count=dim, offset=offset + 5)
        vals = feat.astype(np.float64)
        if not np.all(np.isfinite(vals)):
            raise MalformedPayload(f"node {i}: non-finite feature")
        key = (modality, origin)
        if prev_key is not None and key <= prev_key:
            raise MalformedPayload(f"node {i}: nodes not in canonical order")
        prev_key = key
        nodes.append(
            UnifiedNode(
                node_id=i, modality=modality, origin=origin,
                feature=FeatureVector(vals),
            )
        )
        offset += node_width
    raw_edges = np.frombuffer(
        data, dtype="<u4", count=2 * n_edges, offset=offset
    ).reshape(-1, 2)
    edges = raw_edges.astype(np.int64)
    if edges.size:
        if int(edges.max()) >= n_nodes:
            raise EdgeOutOfRange(
                f"edge endpoint {int(edges.max())} with {n_nodes} nodes"
            )
        if np.any(edges[:, 0] >= edges[:, 1]):
            raise MalformedPayload("edge not lower-endpoint-first")
        keys = edges[:, 0] * n_nodes + edges[:, 1]
        if np.any(np.diff(keys) <= 0):
            raise MalformedPayload("edges not lexicographically sorted and unique")
    bridge = (int(bridge_a), int(bridge_b))
    if bridge[0] >= n_nodes or bridge[1] >= n_nodes:
        raise EdgeOutOfRange(f"bridge endpoint {max(bridge)} with {n_nodes} nodes")
    cross = [
        (int(a), int(b))
        for a, b in edges
        if nodes[int(a)].modality != nodes[int(b)].modality
    ]
    if len(cross) != 1 or cross[0] != bridge:
        raise BridgeMissing("bridge does not match the one cross-modal edge")
    try:
        return UnifiedGraph(nodes=tuple(nodes), edges=edges, bridge=bridge)
    except ValueError as exc:
        raise MalformedPayload(str(exc)) from None


@dataclass(frozen=True)
class SizeReport:
    node_compression: float
    encoded_bytes: int
    original_bytes: int
    byte_ratio: float


def size_report(
    original_image_bytes: int, encoded: bytes, pruned: PrunedSet
) -> SizeReport:
    if original_image_bytes <= 0:
        raise ValueError("original_image_bytes must be positive")
    return SizeReport(
        node_compression=compression_ratio(pruned),
        encoded_bytes=len(encoded),
        original_bytes=original_image_bytes,
        byte_ratio=len(encoded) / original_image_bytes,
    )
