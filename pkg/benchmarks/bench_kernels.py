"""Compares the compiled tree kernels against the pure-numpy fallback.

Usage: python benchmarks/bench_kernels.py [--rows 8000] [--features 8] [--trees 20]
"""

import argparse
import time

import numpy as np

from compass.kernels import _pykern

try:
    from compass.kernels import _ckern
except ImportError:
    _ckern = None


def time_backend(kern, X, y, n_classes, trees, seed):
    n = X.shape[0]
    rng = np.random.default_rng(seed)
    built = []
    t0 = time.perf_counter()
    for t in range(trees):
        idx = rng.integers(0, n, size=n)
        built.append(kern.build_tree(X, y, idx, n_classes, 0, 1, max(1, X.shape[1] // 3), 1000 + t))
    build_s = time.perf_counter() - t0

    t0 = time.perf_counter()
    for tree in built:
        kern.apply_tree(*tree[:4], X)
    apply_s = time.perf_counter() - t0
    return build_s, apply_s, built


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--rows", type=int, default=8000)
    ap.add_argument("--features", type=int, default=8)
    ap.add_argument("--trees", type=int, default=20)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    X = rng.normal(size=(args.rows, args.features))
    y_reg = X[:, 0] * 2 + np.sin(X[:, 1]) + 0.1 * rng.normal(size=args.rows)
    y_clf = ((X[:, 0] > 0).astype(float) + (X[:, 1] > 0.5)).astype(float)

    print(f"rows={args.rows} features={args.features} trees={args.trees}")
    for task, y, n_classes in (("regression", y_reg, 0), ("classification", y_clf, 3)):
        rows = {}
        for name, kern in (("python", _pykern), ("compiled", _ckern)):
            if kern is None:
                print(f"  {task:14s} compiled: extension not built, skipping")
                continue
            build_s, apply_s, built = time_backend(kern, X, y, n_classes, args.trees, 7)
            rows[name] = (build_s, apply_s, built)
            print(f"  {task:14s} {name:8s} build {build_s:8.3f}s  apply {apply_s:8.3f}s")
        if len(rows) == 2:
            pb, pa, ptrees = rows["python"]
            cb, ca, ctrees = rows["compiled"]
            same = all(
                np.array_equal(a[0], b[0]) and np.array_equal(a[4], b[4])
                for a, b in zip(ptrees, ctrees)
            )
            print(
                f"  {task:14s} speedup: build {pb / cb:6.1f}x  apply {pa / ca:6.1f}x  "
                f"identical trees: {same}"
            )


if __name__ == "__main__":
    main()
