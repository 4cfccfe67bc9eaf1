"""Time the numba kernels against their pure-numpy fallbacks.

Run: python3 benchmarks/bench_kernels.py [--rows N] [--edges E] [--dim D]
The first numba call includes JIT compilation; a warmup call is timed out
of band so the table reflects steady-state cost.
"""

import argparse
import time

import numpy as np

from spoofgraph import kernels


def bench(fn, args, repeats=5):
    fn(*args)  # warmup / compile
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--rows", type=int, default=20000)
    ap.add_argument("--edges", type=int, default=400000)
    ap.add_argument("--dim", type=int, default=64)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    values = rng.normal(size=(args.edges, args.dim))
    idx = np.sort(rng.integers(args.rows, size=args.edges)).astype(np.int64)
    seg_vals = rng.normal(size=args.edges)
    x = rng.normal(size=(args.rows, args.dim))
    rows_coo = idx
    cols_coo = rng.integers(args.rows, size=args.edges).astype(np.int64)
    vals_coo = rng.normal(size=args.edges)

    cases = {
        "index_add": (values, idx, args.rows),
        "segment_max": (seg_vals, idx, args.rows),
        "coo_sym_matmat": (rows_coo, cols_coo, vals_coo, x, args.rows),
    }

    print(f"rows={args.rows} edges={args.edges} dim={args.dim}")
    print(f"{'kernel':<16}{'impl':<8}{'best (ms)':>12}")
    for name, case in cases.items():
        for impl_name, impl in kernels.IMPLS.items():
            t = bench(impl[name], case)
            print(f"{name:<16}{impl_name:<8}{t * 1e3:>12.3f}")


if __name__ == "__main__":
    main()
