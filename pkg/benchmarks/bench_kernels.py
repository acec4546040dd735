"""Timing comparison of the numba and numpy kernel backends.

Times forest training (dominated by the best-split search) and batch
prediction (tree traversal) on synthetic data of a few sizes, under both
backends, and prints a small table with speedup factors. Run as

    python benchmarks/bench_kernels.py [--trees 30] [--repeats 3]

The first numba call includes JIT compilation; a warm-up run keeps that out
of the measurements.
"""

import argparse
import time

import numpy as np

from smallclip import kernels
from smallclip.forest import train_forest


def time_once(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_case(n, d, n_classes, n_trees, repeats):
    rng = np.random.default_rng(0)
    X = rng.standard_normal((n, d))
    y = rng.integers(0, n_classes, size=n).astype(np.int64)
    Xq = rng.standard_normal((4 * n, d))

    rows = {}
    for backend in ("numpy", "numba"):
        try:
            kernels.set_backend(backend)
        except RuntimeError:
            rows[backend] = None
            continue
        forest = train_forest(X, y, n_classes, n_trees=n_trees, seed=0)
        train_s = time_once(
            lambda: train_forest(X, y, n_classes, n_trees=n_trees, seed=0),
            repeats)
        apply_s = time_once(lambda: forest.predict_proba(Xq), repeats)
        rows[backend] = (train_s, apply_s)
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--trees", type=int, default=30)
    ap.add_argument("--repeats", type=int, default=3)
    args = ap.parse_args()

    default = kernels.backend()
    cases = [(200, 16, 7), (1000, 32, 7), (3000, 64, 7)]
    print(f"default backend: {default}; forests of {args.trees} trees, "
          f"best of {args.repeats} runs\n")
    print(f"{'case':>16} {'phase':>8} {'numpy':>10} {'numba':>10} {'speedup':>8}")
    for n, d, c in cases:
        rows = bench_case(n, d, c, args.trees, args.repeats)
        if rows.get("numba") is None:
            np_train, np_apply = rows["numpy"]
            print(f"{f'{n}x{d}':>16} {'train':>8} {np_train:>9.3f}s "
                  f"{'n/a':>10} {'n/a':>8}")
            print(f"{'':>16} {'apply':>8} {np_apply:>9.3f}s "
                  f"{'n/a':>10} {'n/a':>8}")
            continue
        for phase, idx in (("train", 0), ("apply", 1)):
            np_t = rows["numpy"][idx]
            nb_t = rows["numba"][idx]
            print(f"{f'{n}x{d}':>16} {phase:>8} {np_t:>9.3f}s {nb_t:>9.3f}s "
                  f"{np_t / nb_t:>7.1f}x")
    kernels.set_backend(default)


if __name__ == "__main__":
    main()
