"""Benchmark the jitted kernels against their pure-NumPy fallbacks.

Usage: python benchmarks/bench_kernels.py [--repeats N]

Times the three hot kernels at training-like sizes and prints a table of
per-call milliseconds for each backend plus the speedup. The numba column
excludes compilation (one warmup call per kernel).
"""
import argparse
import time

import numpy as np
import scipy.sparse as sp

from imbnode import kernels


def bench(fn, repeats):
    fn()  # warmup (and JIT compile on the numba path)
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best * 1e3


def make_cases(rng):
    n, k = 3000, 64
    dense = sp.random(n, n, density=0.004, random_state=42, format="csr")
    dense = ((dense + dense.T) > 0).astype(np.float64).tocsr()
    dense.setdiag(0)
    dense.eliminate_zeros()
    x = rng.normal(size=(n, k))
    indptr = dense.indptr.astype(np.int64)
    indices = dense.indices.astype(np.int64)
    data = dense.data

    m = rng.normal(size=(1500, 1500)) * 3.0
    a = (rng.random((1500, 1500)) < 0.01).astype(np.float64)
    e = 1.0 / (1.0 + np.exp(-m))

    h = rng.normal(size=(n, k))
    candidates = np.sort(rng.choice(n, size=400, replace=False))
    queries = rng.choice(candidates, size=200, replace=True)

    return {
        "csr_dense_matmul": lambda: kernels.csr_dense_matmul(indptr, indices, data, x),
        "sigmoid_sqdiff": lambda: kernels.sigmoid_sqdiff(m, a),
        "sigmoid_sqdiff_grad": lambda: kernels.sigmoid_sqdiff_grad(e, a, 1.0),
        "nearest_same_class": lambda: kernels.nearest_same_class_ids(h, candidates, queries),
    }


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=7)
    args = parser.parse_args()

    cases = make_cases(np.random.default_rng(0))
    backends = ["numpy"] + (["numba"] if kernels.HAS_NUMBA else [])
    timings = {}
    for backend in backends:
        kernels.set_backend(backend)
        for name, fn in cases.items():
            timings[(backend, name)] = bench(fn, args.repeats)

    width = max(len(n) for n in cases)
    header = f"{'kernel':<{width}}  " + "".join(f"{b + ' (ms)':>14}" for b in backends)
    if len(backends) == 2:
        header += f"{'speedup':>10}"
    print(header)
    print("-" * len(header))
    for name in cases:
        row = f"{name:<{width}}  " + "".join(f"{timings[(b, name)]:>14.3f}" for b in backends)
        if len(backends) == 2:
            row += f"{timings[('numpy', name)] / timings[('numba', name)]:>9.1f}x"
        print(row)
    if len(backends) == 1:
        print("(numba not installed; showing the fallback only)")


if __name__ == "__main__":
    main()
