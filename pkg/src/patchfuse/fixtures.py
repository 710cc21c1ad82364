"""Deterministic synthetic corpus: images, attention, reports as graphs.

Positives get a dim two-patch blob, extra attention mass on those patches,
and a knowledge graph containing a "pneumonia" finding wired into the
generic anatomy entities.  Negatives are noise images with diffuse
attention and generic-only graphs.  The blob brightness deliberately sits
close to the noise floor: the text signal is clean, the image signal is
noisy, which is what makes image-only ablations degrade.

Everything derives from one seed; studies use per-index derived streams so
generation order (or parallelism) cannot change any study's content.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .attention import AttentionMatrix, dump_attention, load_attention
from .errors import InvalidRate, NonDivisibleDimensions
from .graphs import KnowledgeGraph, dump_knowledge_graph, parse_knowledge_graph
from .patch_grid import POOL, GrayImage, dump_pgm, load_pgm
from .rng import Stream

TOKENS = 24  # attention rows per study

# noise floor and blob lift; the lift straddles patch-mean noise so the
# image channel alone ranks positives imperfectly
_BG_LO = 0.25
_BG_SPAN = 0.35
_BLOB_LO = 0.006
_BLOB_SPAN = 0.012
_ATTN_BOOST = 3.0

# stream split tags; frozen, do not renumber
_TAG_LABELS = 10
_TAG_STUDY = 11
_TAG_PIXELS = 12
_TAG_BLOB = 13
_TAG_ATTN = 14
_TAG_KG = 15

_ENTITY_POOL = (
    ("lung", "anatomy"),
    ("heart", "anatomy"),
    ("mediastinum", "anatomy"),
    ("trachea", "anatomy"),
    ("costophrenic angle", "anatomy"),
    ("cardiac silhouette", "observation"),
    ("clear airspace", "observation"),
    ("no effusion", "observation"),
    ("bony structures", "observation"),
    ("stable appearance", "observation"),
)
_RELATION_POOL = ("located_at", "modifies", "associated_with")


@dataclass(frozen=True)
class SyntheticStudy:
    image: GrayImage
    attention: AttentionMatrix
    kg: KnowledgeGraph
    label: int
    blob_patches: tuple = ()  # planted patch indices, empty on negatives


def _study_image(stream: Stream, size: int, patch: int, blob) -> GrayImage:
    u = stream.split(_TAG_PIXELS).uniforms(size * size)
    pixels = _BG_LO + _BG_SPAN * u
    if blob:
        lift = blob[0]
        grid = size // patch
        plane = pixels.reshape(size, size)
        for patch_idx in blob[1]:
            r, c = divmod(patch_idx, grid)
            plane[r * patch : (r + 1) * patch, c * patch : (c + 1) * patch] += lift
        pixels = np.clip(plane.ravel(), 0.0, 1.0)
    return GrayImage(height=size, width=size, pixels=pixels)


def _study_attention(stream: Stream, patches: int, blob_patches) -> AttentionMatrix:
    u = stream.split(_TAG_ATTN).uniforms(TOKENS * patches).reshape(TOKENS, patches)
    logits = u.copy()
    for patch_idx in blob_patches:
        logits[:, patch_idx] += _ATTN_BOOST
    logits -= logits.max(axis=1, keepdims=True)
    weights = np.exp(logits)
    weights /= weights.sum(axis=1, keepdims=True)
    return AttentionMatrix(num_tokens=TOKENS, num_patches=patches, weights=weights)


def _study_kg(stream: Stream, positive: bool) -> KnowledgeGraph:
    kg_stream = stream.split(_TAG_KG)
    n_generic = 3 + int(kg_stream.below(3))
    picks = kg_stream.choice(len(_ENTITY_POOL), n_generic)
    entities = [
        {"id": f"e{i}", "text": _ENTITY_POOL[int(p)][0], "label": _ENTITY_POOL[int(p)][1]}
        for i, p in enumerate(picks)
    ]
    relations = [
        {
            "src": f"e{i}",
            "dst": f"e{i + 1}",
            "label": _RELATION_POOL[i % len(_RELATION_POOL)],
        }
        for i in range(n_generic - 1)
    ]
    if positive:
        finding = f"e{n_generic}"
        entities.append({"id": finding, "text": "pneumonia", "label": "finding"})
        wired = min(n_generic, 2 + int(kg_stream.below(3)))
        for i in range(wired):
            relations.append(
                {"src": finding, "dst": f"e{i}", "label": "suggestive_of"}
            )
    doc = {"entities": entities, "relations": relations}
    return parse_knowledge_graph(json.dumps(doc).encode())


def dummy_knowledge_graph(dim: int = 64) -> KnowledgeGraph:
    """Single generic node; stands in for 'text removed' ablations."""
    return parse_knowledge_graph(
        b'{"entities": [{"id": "e0", "text": "study", "label": "observation"}],'
        b' "relations": []}',
        dim=dim,
    )


def generate_study(
    seed: int, index: int, positive: bool, image_size: int, patch_size: int
) -> SyntheticStudy:
    """One study, fully determined by (seed, index, positive)."""
    st = Stream(seed).split(_TAG_STUDY, index)
    grid = image_size // patch_size
    blob_patches = ()
    blob = None
    if positive:
        blob_stream = st.split(_TAG_BLOB)
        r = int(blob_stream.below(grid))
        c = int(blob_stream.below(grid - 1))
        blob_patches = (r * grid + c, r * grid + c + 1)
        lift = _BLOB_LO + _BLOB_SPAN * blob_stream.uniform()
        blob = (lift, blob_patches)
    return SyntheticStudy(
        image=_study_image(st, image_size, patch_size, blob),
        attention=_study_attention(st, grid * grid, blob_patches),
        kg=_study_kg(st, positive),
        label=1 if positive else 0,
        blob_patches=blob_patches,
    )


def _make_study(task) -> SyntheticStudy:
    return generate_study(*task)


def generate_corpus(
    seed: int,
    count: int,
    image_size: int = 128,
    patch_size: int = 16,
    positive_rate: float = 0.15,
    jobs: int = 1,
) -> list:
    """Deterministic list of SyntheticStudy with exactly round(rate*count)
    positives, placed by a seeded permutation.  `jobs` > 1 generates
    studies in parallel processes; output is identical either way."""
    if count < 10:
        raise ValueError("count must be >= 10")
    if not 0.0 < positive_rate < 1.0:
        raise InvalidRate(f"positive_rate must be in (0, 1), got {positive_rate!r}")
    if image_size % patch_size:
        raise NonDivisibleDimensions(
            f"image size {image_size} not divisible by patch {patch_size}"
        )
    if patch_size % POOL:
        raise NonDivisibleDimensions(
            f"patch size {patch_size} not divisible by {POOL}"
        )
    n_pos = int(round(positive_rate * count))
    if n_pos == 0 or n_pos == count:
        raise InvalidRate(
            f"rate {positive_rate} yields a single-class corpus at count {count}"
        )
    positive_at = np.zeros(count, dtype=bool)
    positive_at[Stream(seed).split(_TAG_LABELS).permutation(count)[:n_pos]] = True
    tasks = [
        (seed, idx, bool(positive_at[idx]), image_size, patch_size)
        for idx in range(count)
    ]
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_make_study, tasks, chunksize=16))
    return [_make_study(task) for task in tasks]


def corpus_digest(studies) -> str:
    """SHA-256 over the serialized corpus; the release-stability anchor."""
    h = hashlib.sha256()
    for study in studies:
        h.update(dump_pgm(study.image))
        h.update(dump_attention(study.attention))
        h.update(dump_knowledge_graph(study.kg))
        h.update(b"1" if study.label else b"0")
    return h.hexdigest()


def study_name(index: int) -> str:
    return f"study_{index:04d}"


def write_corpus(directory, studies) -> None:
    """Write PGM + ATTN + KG JSON per study plus labels.csv."""
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    rows = []
    for idx, study in enumerate(studies):
        name = study_name(idx)
        (root / f"{name}.pgm").write_bytes(dump_pgm(study.image))
        (root / f"{name}.attn").write_bytes(dump_attention(study.attention))
        (root / f"{name}.kg.json").write_bytes(dump_knowledge_graph(study.kg))
        rows.append((name, study.label))
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["study", "label"])
    writer.writerows(rows)
    (root / "labels.csv").write_text(out.getvalue())


def read_corpus(directory) -> list:
    """Load a corpus directory back into SyntheticStudy values.

    Blob locations are generation-time knowledge and are not persisted;
    round-tripped studies carry an empty blob_patches.
    """
    root = Path(directory)
    with open(root / "labels.csv", newline="") as handle:
        rows = list(csv.DictReader(handle))
    studies = []
    for row in rows:
        name = row["study"]
        label = int(row["label"])
        if label not in (0, 1):
            raise ValueError(f"label must be 0 or 1, got {label}")
        studies.append(
            SyntheticStudy(
                image=load_pgm((root / f"{name}.pgm").read_bytes()),
                attention=load_attention((root / f"{name}.attn").read_bytes()),
                kg=parse_knowledge_graph((root / f"{name}.kg.json").read_bytes()),
                label=label,
            )
        )
    return studies
