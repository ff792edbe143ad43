"""Benchmark the compiled kernels against the pure-NumPy fallback.

Run:  python benchmarks/compare_backends.py [--quick]

Each kernel runs on representative problem sizes; the table reports the
best-of-3 wall time per backend and the speedup of the compiled path.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from hsipipe import _kernels_np

try:
    from hsipipe import _kernels
except ImportError:
    _kernels = None


def best_of(fn, repeats=3):
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def knn3_case(n, k, seed=0):
    rng = np.random.default_rng(seed)
    f = np.empty((n, 3))
    f[:, 0] = rng.random(n)
    side = int(np.sqrt(n))
    rr, cc = np.meshgrid(np.arange(side), np.arange(side), indexing="ij")
    f[: side * side, 1] = (cc / max(side - 1, 1)).ravel()
    f[: side * side, 2] = (rr / max(side - 1, 1)).ravel()
    f[side * side :, 1:] = rng.random((n - side * side, 2))
    return lambda mod: mod.knn3_indices(f, k)


def smo_case(n, seed=0):
    rng = np.random.default_rng(seed)
    X = np.vstack([rng.normal(0, 1, size=(n // 2, 10)), rng.normal(3, 1, size=(n - n // 2, 10))])
    y = np.array([-1.0] * (n // 2) + [1.0] * (n - n // 2))
    Q = np.outer(y, y) * (X @ X.T)
    return lambda mod: mod.smo_solve(Q, y, 1.0, 1e-3, 10**7)


def kmeans_case(n, k, d, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, d))
    c = rng.normal(size=(k, d))
    return lambda mod: mod.kmeans_assign(x, c)


def tsne_case(n, seed=0):
    rng = np.random.default_rng(seed)
    P = rng.random((n, n))
    P = P + P.T
    np.fill_diagonal(P, 0.0)
    P /= P.sum()
    y = rng.normal(size=n)
    return lambda mod: mod.tsne_grad(P, y, 1.0)


def perplexity_case(n, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, 8))
    sq = np.einsum("nd,nd->n", x, x)
    d2 = sq[:, None] - 2 * (x @ x.T) + sq[None, :]
    np.fill_diagonal(d2, 0.0)
    return lambda mod: mod.perplexity_betas(d2, 30.0, 1e-5, 200)


def main() -> None:
    parser = argparse.ArgumentParser()
    parser.add_argument("--quick", action="store_true", help="smaller problem sizes")
    args = parser.parse_args()

    scale = 0.25 if args.quick else 1.0
    cases = [
        ("knn3 n=16384 k=40", knn3_case(int(16384 * scale), 40)),
        ("knn3 n=4096 k=40", knn3_case(int(4096 * scale), 40)),
        ("smo n=800", smo_case(int(800 * scale))),
        ("kmeans_assign n=65536 k=24 d=129", kmeans_case(int(65536 * scale), 24, 129)),
        ("tsne_grad n=2000", tsne_case(int(2000 * scale))),
        ("perplexity n=1000", perplexity_case(int(1000 * scale))),
    ]

    print(f"{'kernel':<36}{'numpy (s)':>12}{'compiled (s)':>14}{'speedup':>10}")
    for name, make_call in cases:
        t_np = best_of(lambda: make_call(_kernels_np))
        if _kernels is None:
            print(f"{name:<36}{t_np:>12.4f}{'n/a':>14}{'n/a':>10}")
            continue
        t_c = best_of(lambda: make_call(_kernels))
        ratio = t_np / t_c if t_c > 0 else float("inf")
        print(f"{name:<36}{t_np:>12.4f}{t_c:>14.4f}{ratio:>9.1f}x")


if __name__ == "__main__":
    main()
