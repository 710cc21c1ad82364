"""Message passing network for binary classification over unified graphs.

Everything is explicit numpy: forward, exact reverse-mode gradients, and
plain per-example SGD.  No autograd, no minibatching, no GPU.

Per graph, nodes are processed in canonical (modality, origin) order, so
relabeling node ids cannot change a single bit of the output.  The input
to the first projection is the node feature with one extra channel:
+1 for VISUAL nodes, -1 for TEXT nodes.  A model with input_dim D
therefore serves graphs whose feature dim is D - 1.

Forward pass, L layers:

    h0 = relu(W_in x)
    m_i = mean_{j in N(i)} W_msg[l] h_j      (zero vector when N(i) is empty)
    h^{l+1} = relu(W_upd[l] [h^l || m] + b[l])
    p = sigmoid(w_out . mean_i h^L_i + b_out), clamped to [1e-7, 1 - 1e-7]

The clamp is treated as a constant region by the backward pass: a fully
saturated prediction contributes zero gradient.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from ._kernels import neighbor_sum
from .errors import (
    BadMagic,
    DimensionMismatch,
    EmptyDataset,
    MalformedPayload,
    Truncated,
    UnsupportedVersion,
)
from .graphs import VISUAL, UnifiedGraph
from .rng import Stream

NRLM_MAGIC = b"NRLM"
NRLM_VERSION = 1
PROB_CLAMP = 1e-7

_HEADER = struct.Struct("<4sHIII")

# stream split tags for init and shuffling; frozen, do not renumber
_TAG_MSG = 1
_TAG_UPD = 2
_TAG_IN = 3
_TAG_OUT = 4
_TAG_SHUFFLE = 5


@dataclass(frozen=True)
class TrainConfig:
    epochs: int
    learning_rate: float
    seed: int

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not self.learning_rate >= 0:
            raise ValueError("learning rate must be >= 0")


@dataclass(frozen=True)
class MpnnModel:
    num_layers: int
    hidden: int
    input_dim: int
    w_msg: tuple = field(repr=False)  # L matrices (H, H)
    w_upd: tuple = field(repr=False)  # L matrices (H, 2H)
    biases: tuple = field(repr=False)  # L vectors (H,)
    w_in: np.ndarray = field(repr=False)  # (H, D)
    w_out: np.ndarray = field(repr=False)  # (H,)
    b_out: float = 0.0

    def __post_init__(self):
        L, H, D = self.num_layers, self.hidden, self.input_dim
        if L < 1 or H < 1 or D < 1:
            raise ValueError("num_layers, hidden, input_dim must be >= 1")
        if len(self.w_msg) != L or len(self.w_upd) != L or len(self.biases) != L:
            raise ValueError("per-layer tensor count must equal num_layers")
        shapes = (
            [(m, (H, H)) for m in self.w_msg]
            + [(m, (H, 2 * H)) for m in self.w_upd]
            + [(b, (H,)) for b in self.biases]
            + [(self.w_in, (H, D)), (self.w_out, (H,))]
        )
        for arr, want in shapes:
            if arr.shape != want:
                raise ValueError(f"tensor shape {arr.shape}, want {want}")
            if not np.all(np.isfinite(arr)):
                raise ValueError("non-finite weight")
        if not np.isfinite(self.b_out):
            raise ValueError("non-finite bias")

    @classmethod
    def init(cls, num_layers: int, hidden: int, input_dim: int, seed: int):
        """Glorot-uniform weights, zero biases, drawn in declaration order."""
        stream = Stream(seed)

        def glorot(tag, index, rows, cols):
            a = np.sqrt(6.0 / (rows + cols))
            u = stream.split(tag, index).uniforms(rows * cols)
            return ((2.0 * u - 1.0) * a).reshape(rows, cols)

        H = hidden
        w_msg = tuple(glorot(_TAG_MSG, l, H, H) for l in range(num_layers))
        w_upd = tuple(glorot(_TAG_UPD, l, H, 2 * H) for l in range(num_layers))
        biases = tuple(np.zeros(H, np.float64) for _ in range(num_layers))
        w_in = glorot(_TAG_IN, 0, H, input_dim)
        w_out = glorot(_TAG_OUT, 0, 1, H).reshape(H)
        return cls(
            num_layers=num_layers,
            hidden=hidden,
            input_dim=input_dim,
            w_msg=w_msg,
            w_upd=w_upd,
            biases=biases,
            w_in=w_in,
            w_out=w_out,
            b_out=0.0,
        )


@dataclass(frozen=True)
class MpnnGrad:
    w_msg: tuple
    w_upd: tuple
    biases: tuple
    w_in: np.ndarray
    w_out: np.ndarray
    b_out: float


class _Params:
    """Mutable tensor bundle; the math runs on this, not on the dataclass."""

    __slots__ = ("num_layers", "hidden", "w_msg", "w_upd", "biases",
                 "w_in", "w_out", "b_out")

    def __init__(self, model: MpnnModel, copy: bool = False):
        dup = (lambda a: a.copy()) if copy else (lambda a: a)
        self.num_layers = model.num_layers
        self.hidden = model.hidden
        self.w_msg = [dup(m) for m in model.w_msg]
        self.w_upd = [dup(m) for m in model.w_upd]
        self.biases = [dup(b) for b in model.biases]
        self.w_in = dup(model.w_in)
        self.w_out = dup(model.w_out)
        self.b_out = float(model.b_out)

    def freeze(self, input_dim: int) -> MpnnModel:
        return MpnnModel(
            num_layers=self.num_layers,
            hidden=self.hidden,
            input_dim=input_dim,
            w_msg=tuple(m.copy() for m in self.w_msg),
            w_upd=tuple(m.copy() for m in self.w_upd),
            biases=tuple(b.copy() for b in self.biases),
            w_in=self.w_in.copy(),
            w_out=self.w_out.copy(),
            b_out=self.b_out,
        )


def _prepare(input_dim: int, graph: UnifiedGraph):
    """Canonical feature matrix with modality channel, CSR, degrees."""
    nodes, edges, _ = graph.canonical()
    n = len(nodes)
    feat_dim = nodes[0].feature.dim
    if feat_dim + 1 != input_dim:
        raise DimensionMismatch(
            f"graph features {feat_dim}+1 vs model input_dim {input_dim}"
        )
    x = np.empty((n, input_dim), np.float64)
    for i, node in enumerate(nodes):
        x[i, :feat_dim] = node.feature.values
        x[i, feat_dim] = 1.0 if node.modality == VISUAL else -1.0
    if edges.size:
        tails = np.concatenate([edges[:, 0], edges[:, 1]])
        heads = np.concatenate([edges[:, 1], edges[:, 0]])
        order = np.lexsort((heads, tails))
        tails, heads = tails[order], heads[order]
        indptr = np.zeros(n + 1, np.int64)
        np.add.at(indptr, tails + 1, 1)
        np.cumsum(indptr, out=indptr)
    else:
        indptr = np.zeros(n + 1, np.int64)
        heads = np.empty(0, np.int64)
    deg = np.diff(indptr).astype(np.float64)[:, None]
    return x, indptr, heads, deg


def _neighbor_mean(indptr, indices, deg, values):
    total = neighbor_sum(indptr, indices, values)
    out = np.zeros_like(total)
    np.divide(total, deg, out=out, where=deg > 0)
    return out


def _run_forward(params: _Params, prep):
    x, indptr, indices, deg = prep
    h = np.maximum(x @ params.w_in.T, 0.0)
    states = [h]
    cats = []
    for layer in range(params.num_layers):
        msg = states[-1] @ params.w_msg[layer].T
        mean = _neighbor_mean(indptr, indices, deg, msg)
        cat = np.concatenate([states[-1], mean], axis=1)
        nxt = np.maximum(cat @ params.w_upd[layer].T + params.biases[layer], 0.0)
        cats.append(cat)
        states.append(nxt)
    readout = states[-1].mean(axis=0)
    z = float(readout @ params.w_out) + params.b_out
    raw = float(1.0 / (1.0 + np.exp(-z)))
    prob = min(max(raw, PROB_CLAMP), 1.0 - PROB_CLAMP)
    return states, cats, readout, raw, prob


def _run_backward(params: _Params, prep, run, label: int):
    x, indptr, indices, deg = prep
    states, cats, readout, raw, prob = run
    n = states[0].shape[0]
    H = params.hidden
    # clamp active means the prediction sits in the flat region: zero grads
    dz = 0.0 if raw != prob else raw - float(label)
    g_msg = [None] * params.num_layers
    g_upd = [None] * params.num_layers
    g_b = [None] * params.num_layers
    g_out = dz * readout
    g_bout = dz
    dh = np.tile((dz / n) * params.w_out, (n, 1))
    for layer in range(params.num_layers - 1, -1, -1):
        dpre = dh * (states[layer + 1] > 0.0)
        g_b[layer] = dpre.sum(axis=0)
        g_upd[layer] = dpre.T @ cats[layer]
        dcat = dpre @ params.w_upd[layer]
        dmean = dcat[:, H:]
        scaled = np.zeros_like(dmean)
        np.divide(dmean, deg, out=scaled, where=deg > 0)
        dmsg = neighbor_sum(indptr, indices, scaled)
        g_msg[layer] = dmsg.T @ states[layer]
        dh = dcat[:, :H] + dmsg @ params.w_msg[layer]
    dpre0 = dh * (states[0] > 0.0)
    g_in = dpre0.T @ x
    return g_msg, g_upd, g_b, g_in, g_out, g_bout


def forward(model: MpnnModel, graph: UnifiedGraph) -> float:
    """Probability of the positive class, in (0, 1) after clamping."""
    params = _Params(model)
    return _run_forward(params, _prepare(model.input_dim, graph))[4]


def loss(prob: float, label: int) -> float:
    """Binary cross-entropy with the probability clamp applied."""
    p = min(max(prob, PROB_CLAMP), 1.0 - PROB_CLAMP)
    if label == 1:
        return -float(np.log(p))
    return -float(np.log1p(-p))


def grad(model: MpnnModel, graph: UnifiedGraph, label: int) -> MpnnGrad:
    """Exact gradients of loss(forward(model, graph), label)."""
    if label not in (0, 1):
        raise ValueError(f"label must be 0 or 1, got {label!r}")
    params = _Params(model)
    prep = _prepare(model.input_dim, graph)
    run = _run_forward(params, prep)
    g_msg, g_upd, g_b, g_in, g_out, g_bout = _run_backward(params, prep, run, label)
    return MpnnGrad(
        w_msg=tuple(g_msg),
        w_upd=tuple(g_upd),
        biases=tuple(g_b),
        w_in=g_in,
        w_out=g_out,
        b_out=g_bout,
    )


def train(
    model: MpnnModel, dataset, config: TrainConfig, history: list | None = None
) -> MpnnModel:
    """Per-example SGD with a seeded shuffle each epoch.

    Bit-deterministic for a fixed (model, dataset order, config).  When
    `history` is given, the mean pre-update loss of each epoch is appended
    to it.
    """
    if not dataset:
        raise EmptyDataset("training needs at least one example")
    for _, label in dataset:
        if label not in (0, 1):
            raise ValueError(f"label must be 0 or 1, got {label!r}")
    preps = [_prepare(model.input_dim, graph) for graph, _ in dataset]
    labels = [label for _, label in dataset]
    params = _Params(model, copy=True)
    lr = float(config.learning_rate)
    shuffler = Stream(config.seed).split(_TAG_SHUFFLE)
    for epoch in range(config.epochs):
        order = shuffler.split(epoch).permutation(len(dataset))
        total = 0.0
        for idx in order:
            idx = int(idx)
            run = _run_forward(params, preps[idx])
            total += loss(run[4], labels[idx])
            g_msg, g_upd, g_b, g_in, g_out, g_bout = _run_backward(
                params, preps[idx], run, labels[idx]
            )
            for layer in range(params.num_layers):
                params.w_msg[layer] -= lr * g_msg[layer]
                params.w_upd[layer] -= lr * g_upd[layer]
                params.biases[layer] -= lr * g_b[layer]
            params.w_in -= lr * g_in
            params.w_out -= lr * g_out
            params.b_out -= lr * g_bout
        if history is not None:
            history.append(total / len(dataset))
    return params.freeze(model.input_dim)


def dump_model(model: MpnnModel) -> bytes:
    """NRLM checkpoint: header then float64 tensors in declaration order."""
    out = bytearray()
    out += _HEADER.pack(
        NRLM_MAGIC, NRLM_VERSION, model.num_layers, model.hidden, model.input_dim
    )
    for group in (model.w_msg, model.w_upd, model.biases):
        for tensor in group:
            out += tensor.astype("<f8").tobytes()
    out += model.w_in.astype("<f8").tobytes()
    out += model.w_out.astype("<f8").tobytes()
    out += struct.pack("<d", model.b_out)
    return bytes(out)


def load_model(data: bytes) -> MpnnModel:
    if data[:4] != NRLM_MAGIC:
        if len(data) < 4 and data == NRLM_MAGIC[: len(data)]:
            raise Truncated(f"header needs {_HEADER.size} bytes, got {len(data)}")
        raise BadMagic(f"bad magic {data[:4]!r}")
    if len(data) < _HEADER.size:
        raise Truncated(f"header needs {_HEADER.size} bytes, got {len(data)}")
    magic, version, L, H, D = _HEADER.unpack_from(data)
    if version != NRLM_VERSION:
        raise UnsupportedVersion(f"NRLM version {version}")
    if L < 1 or H < 1 or D < 1:
        raise MalformedPayload(f"bad dimensions L={L} H={H} D={D}")
    counts = [H * H] * L + [H * 2 * H] * L + [H] * L + [H * D, H, 1]
    expected = _HEADER.size + 8 * sum(counts)
    if len(data) < expected:
        raise Truncated(f"need {expected} bytes, got {len(data)}")
    if len(data) > expected:
        raise MalformedPayload(f"{len(data) - expected} trailing bytes")
    offset = _HEADER.size

    def take(count, shape):
        nonlocal offset
        arr = np.frombuffer(data, dtype="<f8", count=count, offset=offset)
        offset += 8 * count
        arr = arr.astype(np.float64).reshape(shape)
        if not np.all(np.isfinite(arr)):
            raise MalformedPayload("non-finite weight")
        return arr

    w_msg = tuple(take(H * H, (H, H)) for _ in range(L))
    w_upd = tuple(take(H * 2 * H, (H, 2 * H)) for _ in range(L))
    biases = tuple(take(H, (H,)) for _ in range(L))
    w_in = take(H * D, (H, D))
    w_out = take(H, (H,))
    b_out = float(take(1, (1,))[0])
    return MpnnModel(
        num_layers=L,
        hidden=H,
        input_dim=D,
        w_msg=w_msg,
        w_upd=w_upd,
        biases=biases,
        w_in=w_in,
        w_out=w_out,
        b_out=b_out,
    )
