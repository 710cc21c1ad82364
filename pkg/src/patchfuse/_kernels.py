"""Hot numeric kernels.

Two implementations per kernel: a scalar loop compiled with numba on first
use, and a vectorized pure-numpy fallback.  Dispatch is decided by
:func:`patchfuse.backend.active_backend`.

Both paths are bit-identical for every graph this package can encounter:
the quantities accumulated (shortest-path counts, successor tallies) are
integers carried in float64, so addition order does not affect the result
until counts exceed 2**53.  Neighbor sums accumulate in CSR order on both
paths.  Parity is enforced by tests, not just argued here.

Graphs are CSR: ``indptr`` (n+1 int64), ``indices`` (int64 neighbor list).
Undirected graphs store both edge directions.
"""

from __future__ import annotations

import numpy as np

from .backend import active_backend

# sources per block in the vectorized betweenness path; bounds peak memory
# at roughly 4 * _BLOCK * n * 8 bytes
_BLOCK = 256

_jitted: dict = {}


def _betweenness_scalar(indptr, indices, n):
    bc = np.zeros(n, np.float64)
    dist = np.empty(n, np.int64)
    sigma = np.empty(n, np.float64)
    tally = np.empty(n, np.float64)
    order = np.empty(n, np.int64)
    for s in range(n):
        for i in range(n):
            dist[i] = -1
            sigma[i] = 0.0
            tally[i] = 0.0
        dist[s] = 0
        sigma[s] = 1.0
        order[0] = s
        head = 0
        count = 1
        while head < count:
            v = order[head]
            head += 1
            dv = dist[v]
            for p in range(indptr[v], indptr[v + 1]):
                w = indices[p]
                if dist[w] < 0:
                    dist[w] = dv + 1
                    order[count] = w
                    count += 1
                if dist[w] == dv + 1:
                    sigma[w] += sigma[v]
        # reverse BFS order: successors are finalized before their parents
        for i in range(count - 1, -1, -1):
            v = order[i]
            dv = dist[v]
            acc = 0.0
            for p in range(indptr[v], indptr[v + 1]):
                w = indices[p]
                if dist[w] == dv + 1:
                    acc += 1.0 + tally[w]
            tally[v] = acc
            if v != s:
                bc[v] += sigma[v] * acc
    # each pair was counted from both endpoints
    for i in range(n):
        bc[i] *= 0.5
    return bc


def _neighbor_sum_scalar(indptr, indices, values):
    n = indptr.shape[0] - 1
    d = values.shape[1]
    out = np.zeros((n, d), np.float64)
    for i in range(n):
        for p in range(indptr[i], indptr[i + 1]):
            j = indices[p]
            for k in range(d):
                out[i, k] += values[j, k]
    return out


def _betweenness_numpy(indptr, indices, n):
    if n == 0:
        return np.zeros(0, np.float64)
    adj = np.zeros((n, n), np.float64)
    tails = np.repeat(np.arange(n), np.diff(indptr))
    adj[tails, indices] = 1.0
    bc = np.zeros(n, np.float64)
    for lo in range(0, n, _BLOCK):
        hi = min(lo + _BLOCK, n)
        block = hi - lo
        dist = np.full((block, n), -1, np.int64)
        sigma = np.zeros((block, n), np.float64)
        rows = np.arange(block)
        dist[rows, rows + lo] = 0
        sigma[rows, rows + lo] = 1.0
        level = 0
        while True:
            frontier = dist == level
            if not frontier.any():
                break
            pushed = (sigma * frontier) @ adj
            newly = (frontier @ adj > 0) & (dist < 0)
            dist[newly] = level + 1
            sigma[newly] = pushed[newly]
            level += 1
        tally = np.zeros((block, n), np.float64)
        top = int(dist.max())
        for lev in range(top - 1, -1, -1):
            succ = dist == lev + 1
            contrib = ((1.0 + tally) * succ) @ adj.T
            cur = dist == lev
            tally[cur] = contrib[cur]
        interior = dist > 0
        bc += np.where(interior, sigma * tally, 0.0).sum(axis=0)
    return 0.5 * bc


def _neighbor_sum_numpy(indptr, indices, values):
    n = indptr.shape[0] - 1
    out = np.zeros((n, values.shape[1]), np.float64)
    rows = np.repeat(np.arange(n), np.diff(indptr))
    np.add.at(out, rows, values[indices])
    return out


def _get_jitted(name, impl):
    fn = _jitted.get(name)
    if fn is None:
        from numba import njit

        fn = njit(cache=True)(impl)
        _jitted[name] = fn
    return fn


def _as_csr(indptr, indices):
    indptr = np.ascontiguousarray(indptr, dtype=np.int64)
    indices = np.ascontiguousarray(indices, dtype=np.int64)
    return indptr, indices


def betweenness_counts(indptr, indices, n):
    """Per-node count of shortest paths passing through it.

    Counts unordered pairs (s, t) with s != v != t; each path contributes
    once per pair.  Returns float64 of length ``n``; values are exact
    integers for any graph with path counts below 2**53.
    """
    indptr, indices = _as_csr(indptr, indices)
    if n == 0:
        return np.zeros(0, np.float64)
    if active_backend() == "numba":
        fn = _get_jitted("betweenness", _betweenness_scalar)
        return fn(indptr, indices, n)
    return _betweenness_numpy(indptr, indices, n)


def neighbor_sum(indptr, indices, values):
    """Row i of the result is the sum of ``values[j]`` over neighbors j."""
    indptr, indices = _as_csr(indptr, indices)
    values = np.ascontiguousarray(values, dtype=np.float64)
    if values.ndim != 2:
        raise ValueError("values must be 2-D")
    if active_backend() == "numba":
        fn = _get_jitted("neighbor_sum", _neighbor_sum_scalar)
        return fn(indptr, indices, values)
    return _neighbor_sum_numpy(indptr, indices, values)
