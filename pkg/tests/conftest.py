"""Shared fixtures and independent oracles used across the suite."""

import numpy as np
import pytest

from patchfuse.rng import Stream


def matmul_int(a, b):
    """Exact integer matrix product over python ints."""
    n = len(a)
    m = len(b[0])
    k = len(b)
    out = [[0] * m for _ in range(n)]
    for i in range(n):
        ai = a[i]
        for j in range(m):
            out[i][j] = sum(ai[t] * b[t][j] for t in range(k))
    return out


def bc_oracle(n, edge_list):
    """Geodesic-count betweenness, computed without BFS bookkeeping.

    Distances come from Floyd-Warshall style relaxation; path counts come
    from powers of the adjacency matrix (entry [s][t] of A^d counts walks
    of length d, and every walk at the shortest-path length is a path).
    Everything stays in python ints, so the result is exact at any size
    the tests use. Each unordered pair contributes once.
    """
    adj = [[0] * n for _ in range(n)]
    for a, b in edge_list:
        adj[a][b] = adj[b][a] = 1
    big = n + 1
    dist = [[0 if i == j else (1 if adj[i][j] else big) for j in range(n)] for i in range(n)]
    for k in range(n):
        dk = dist[k]
        for i in range(n):
            dik = dist[i][k]
            if dik >= big:
                continue
            di = dist[i]
            for j in range(n):
                alt = dik + dk[j]
                if alt < di[j]:
                    di[j] = alt
    maxd = max((d for row in dist for d in row if d < big), default=0)
    powers = [[[1 if i == j else 0 for j in range(n)] for i in range(n)]]
    for _ in range(maxd):
        powers.append(matmul_int(powers[-1], adj))

    def sigma(s, t):
        d = dist[s][t]
        return 0 if d >= big else powers[d][s][t]

    bc = [0] * n
    for v in range(n):
        acc = 0
        for s in range(n):
            if s == v:
                continue
            dsv = dist[s][v]
            if dsv >= big:
                continue
            for t in range(s + 1, n):
                if t == v:
                    continue
                dst = dist[s][t]
                if dst >= big:
                    continue
                if dsv + dist[v][t] == dst:
                    acc += sigma(s, v) * sigma(v, t)
        bc[v] = acc
    return np.array(bc, dtype=np.float64)


def random_edges(stream: Stream, n: int, density_below: int = 0):
    """Random undirected simple graph as a sorted unique (E, 2) array."""
    pairs = [(a, b) for a in range(n) for b in range(a + 1, n)]
    if not pairs:
        return np.empty((0, 2), dtype=np.int64)
    m = stream.below(len(pairs) + 1)
    if density_below:
        m = min(m, stream.below(density_below + 1))
    if m == 0:
        return np.empty((0, 2), dtype=np.int64)
    chosen = sorted(pairs[int(j)] for j in stream.choice(len(pairs), m))
    return np.array(chosen, dtype=np.int64)


def is_connected(n, edge_list):
    if n <= 1:
        return True
    adj = [[] for _ in range(n)]
    for a, b in edge_list:
        adj[a].append(b)
        adj[b].append(a)
    seen = [False] * n
    stack = [0]
    seen[0] = True
    count = 1
    while stack:
        u = stack.pop()
        for v in adj[u]:
            if not seen[v]:
                seen[v] = True
                count += 1
                stack.append(v)
    return count == n


@pytest.fixture(scope="session")
def small_corpus():
    """40 studies, 64x64 at patch 16; shared to keep the suite fast."""
    from patchfuse.fixtures import generate_corpus

    return generate_corpus(seed=404, count=40, image_size=64, patch_size=16)


@pytest.fixture(scope="session")
def unified_pair(small_corpus):
    """Two unified graphs with distinct shapes for serialization tests."""
    from patchfuse.pipeline import study_to_unified

    g1 = study_to_unified(small_corpus[0], 16, fraction=0.5, dim=19)
    g2 = study_to_unified(small_corpus[1], 16, tau=0.05, dim=9)
    return g1, g2
