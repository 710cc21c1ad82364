"""Compare the numba and numpy kernel backends on realistic graph shapes.

Each backend runs in its own subprocess because the backend choice is
resolved once per process from the PATCHFUSE_BACKEND environment variable.
The workload mirrors the package hot path: betweenness counts on an
8-neighbor patch grid and neighbor feature sums during message passing.

    python3 benchmarks/bench_kernels.py
    python3 benchmarks/bench_kernels.py --side 40 --features 64 --repeat 5
"""

import argparse
import hashlib
import json
import os
import subprocess
import sys
import time

import numpy as np


def grid_csr(side):
    """8-neighbor adjacency of a side x side grid in CSR form."""
    n = side * side
    adj = [[] for _ in range(n)]
    for r in range(side):
        for c in range(side):
            v = r * side + c
            for dr in (-1, 0, 1):
                for dc in (-1, 0, 1):
                    if dr == dc == 0:
                        continue
                    rr, cc = r + dr, c + dc
                    if 0 <= rr < side and 0 <= cc < side:
                        adj[v].append(rr * side + cc)
    indptr = np.zeros(n + 1, dtype=np.int64)
    flat = []
    for v in range(n):
        neigh = sorted(adj[v])
        indptr[v + 1] = indptr[v] + len(neigh)
        flat.extend(neigh)
    return indptr, np.array(flat, dtype=np.int64), n


def run_worker(args):
    from patchfuse._kernels import betweenness_counts, neighbor_sum
    from patchfuse.backend import active_backend
    from patchfuse.rng import Stream

    indptr, indices, n = grid_csr(args.side)
    values = Stream(11).uniforms(n * args.features).reshape(n, args.features)

    tiny_ptr = np.array([0, 1, 2], dtype=np.int64)
    tiny_idx = np.array([1, 0], dtype=np.int64)
    t0 = time.perf_counter()
    betweenness_counts(tiny_ptr, tiny_idx, 2)
    neighbor_sum(tiny_ptr, tiny_idx, np.ones((2, 1)))
    warmup = time.perf_counter() - t0  # includes jit compile on numba

    bc_best = ns_best = float("inf")
    for _ in range(args.repeat):
        t0 = time.perf_counter()
        bc = betweenness_counts(indptr, indices, n)
        bc_best = min(bc_best, time.perf_counter() - t0)
        t0 = time.perf_counter()
        ns = neighbor_sum(indptr, indices, values)
        ns_best = min(ns_best, time.perf_counter() - t0)

    print(
        json.dumps(
            {
                "backend": active_backend(),
                "warmup_s": round(warmup, 4),
                "betweenness_s": round(bc_best, 4),
                "neighbor_sum_s": round(ns_best, 4),
                "bc_sha": hashlib.sha256(bc.tobytes()).hexdigest(),
                "ns_sha": hashlib.sha256(ns.tobytes()).hexdigest(),
            }
        )
    )


def spawn(backend, args):
    env = dict(os.environ)
    env["PATCHFUSE_BACKEND"] = backend
    cmd = [
        sys.executable, os.path.abspath(__file__), "--worker",
        "--side", str(args.side), "--features", str(args.features),
        "--repeat", str(args.repeat),
    ]
    proc = subprocess.run(cmd, env=env, capture_output=True, text=True)
    if proc.returncode != 0:
        sys.stderr.write(proc.stderr)
        raise SystemExit(f"{backend} worker failed")
    return json.loads(proc.stdout)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--side", type=int, default=30, help="grid side length")
    parser.add_argument("--features", type=int, default=32)
    parser.add_argument("--repeat", type=int, default=3, help="best-of timing")
    parser.add_argument("--worker", action="store_true", help=argparse.SUPPRESS)
    args = parser.parse_args()
    if args.worker:
        run_worker(args)
        return

    n = args.side * args.side
    print(f"graph: {args.side}x{args.side} grid, {n} nodes, 8-neighborhood")
    print(f"neighbor_sum features: {args.features}, best of {args.repeat}\n")
    rows = [spawn(backend, args) for backend in ("numpy", "numba")]
    header = f"{'backend':<8} {'warmup':>9} {'betweenness':>12} {'neighbor_sum':>13}"
    print(header)
    print("-" * len(header))
    for row in rows:
        print(
            f"{row['backend']:<8} {row['warmup_s']:>8.3f}s "
            f"{row['betweenness_s']:>11.4f}s {row['neighbor_sum_s']:>12.4f}s"
        )
    numpy_row, numba_row = rows
    for key in ("bc_sha", "ns_sha"):
        if numpy_row[key] != numba_row[key]:
            raise SystemExit(f"backend results differ on {key}")
    print("\nresults bitwise identical across backends")
    speed = numpy_row["betweenness_s"] / max(numba_row["betweenness_s"], 1e-9)
    print(f"betweenness speedup numba vs numpy fallback: {speed:.1f}x")


if __name__ == "__main__":
    main()
