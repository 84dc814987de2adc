"""Compare the numba and numpy kernel backends on retrieval-sized inputs.

Usage: python3 benchmarks/bench_kernels.py [--dim 1024] [--queries 1253]
       [--index 1355] [--repeats 5]

Spawns one subprocess per backend (the backend is chosen at import time
via EMBEDKIT_BACKEND) and prints wall times plus the max deviation of the
score matrices between the two paths.
"""

import argparse
import json
import os
import subprocess
import sys

WORKER = """
import json, os, sys, time
import numpy as np
from embedkit._kernels import dot_matrix, row_norms, BACKEND

dim, nq, ni, repeats = json.loads(sys.argv[1])
rng = np.random.default_rng(0)
Q = rng.standard_normal((nq, dim)).astype(np.float32)
X = rng.standard_normal((ni, dim)).astype(np.float32)
dot_matrix(Q[:2], X[:2]); row_norms(Q[:2])  # warm up (jit compile)
times = []
for _ in range(repeats):
    t0 = time.perf_counter()
    S = dot_matrix(Q, X) / (row_norms(Q)[:, None] * row_norms(X)[None, :])
    times.append(time.perf_counter() - t0)
print(json.dumps({
    "backend": BACKEND,
    "best_s": min(times),
    "mean_s": sum(times) / len(times),
    "checksum": float(S.sum()),
}))
"""


def run_backend(backend, payload):
    env = dict(os.environ, EMBEDKIT_BACKEND=backend)
    out = subprocess.run(
        [sys.executable, "-c", WORKER, json.dumps(payload)],
        env=env, capture_output=True, text=True, check=True,
    )
    return json.loads(out.stdout.strip().splitlines()[-1])


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--dim", type=int, default=1024)
    ap.add_argument("--queries", type=int, default=1253)
    ap.add_argument("--index", type=int, default=1355)
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args()
    payload = [args.dim, args.queries, args.index, args.repeats]

    results = [run_backend(b, payload) for b in ("numpy", "numba")]
    print(f"{'backend':<8} {'best (s)':>10} {'mean (s)':>10}")
    for r in results:
        print(f"{r['backend']:<8} {r['best_s']:>10.4f} {r['mean_s']:>10.4f}")
    drift = abs(results[0]["checksum"] - results[1]["checksum"])
    print(f"checksum drift between backends: {drift:.3e}")
    speedup = results[0]["best_s"] / results[1]["best_s"]
    print(f"numba speedup over numpy: {speedup:.2f}x")


if __name__ == "__main__":
    main()
