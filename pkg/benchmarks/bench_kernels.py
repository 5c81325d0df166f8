#!/usr/bin/env python3
"""Benchmark the compiled kernel core against the numpy fallback.

Shapes mirror the real workload: stem/mixed-block convolution patch
gathers, stem max pooling, block average pooling, and the augmentation
warp. The matrix products themselves run through BLAS in both backends,
so the interesting deltas are the data-movement kernels benchmarked here.

Usage: python benchmarks/bench_kernels.py [--repeats N]
"""

import argparse
import time

import numpy as np

from tumorgraph import kernels_numpy

try:
    from tumorgraph import _kernels
except ImportError:
    _kernels = None


def timeit(fn, repeats):
    fn()  # warm up
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def bench_cases(rng):
    """(name, callable-factory) pairs; factories take a backend module."""
    x_stem = rng.standard_normal((8, 74, 74, 32)).astype(np.float32)
    x_block = rng.standard_normal((8, 16, 16, 288)).astype(np.float32)
    x_mixed4 = rng.standard_normal((8, 7, 7, 768)).astype(np.float32)
    k_stem = rng.standard_normal((3 * 3 * 32, 32)).astype(np.float32)
    dp = rng.standard_normal((8 * 36 * 36, 3 * 3 * 32)).astype(np.float32)
    img = rng.standard_normal((512, 512, 1)).astype(np.float32)
    inv = np.array([[0.98, 0.05, 1.3], [-0.04, 1.02, -2.1]])

    def conv_stem(mod):
        # full conv unit cost: patch gather + shared BLAS matmul
        patches = mod.im2col(x_stem, 3, 3, 1, 0, 0, 72, 72)
        return patches @ k_stem

    return [
        ("im2col 3x3 stem (8,74,74,32)",
         lambda mod: mod.im2col(x_stem, 3, 3, 1, 0, 0, 72, 72)),
        ("im2col 5x5 block (8,16,16,288)",
         lambda mod: mod.im2col(x_block, 5, 5, 1, 2, 2, 16, 16)),
        ("im2col 1x7 factorized (8,7,7,768)",
         lambda mod: mod.im2col(x_mixed4, 1, 7, 1, 0, 3, 7, 7)),
        ("conv = im2col + BLAS matmul", conv_stem),
        ("col2im 3x3 backward (8,74,74,32)",
         lambda mod: mod.col2im(dp, (8, 74, 74, 32), 3, 3, 2, 0, 0, 36, 36)),
        ("maxpool 3x3 s2 (8,72,72,64)",
         lambda mod, x=rng.standard_normal((8, 72, 72, 64)).astype(np.float32):
             mod.maxpool_forward(x, 3, 2, 0, 0, 35, 35)),
        ("avgpool 3x3 s1 same (8,16,16,288)",
         lambda mod: mod.avgpool_forward(x_block, 3, 1, 1, 1, 16, 16)),
        ("bilinear warp 512x512",
         lambda mod: mod.warp_bilinear(img, inv, "edge", 0.0)),
    ]


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    cases = bench_cases(rng)

    if _kernels is None:
        print("compiled extension not built; timing the numpy fallback only")
        for name, fn in cases:
            print(f"{name:<38} numpy {timeit(lambda: fn(kernels_numpy), args.repeats)*1e3:8.2f} ms")
        return

    print(f"{'kernel':<38} {'numpy':>10} {'compiled':>10} {'speedup':>8}")
    for name, fn in cases:
        t_np = timeit(lambda: fn(kernels_numpy), args.repeats)
        t_cy = timeit(lambda: fn(_kernels), args.repeats)
        print(f"{name:<38} {t_np*1e3:8.2f}ms {t_cy*1e3:8.2f}ms {t_np/t_cy:7.2f}x")


if __name__ == "__main__":
    main()
