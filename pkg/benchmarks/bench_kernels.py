#!/usr/bin/env python3
"""Benchmark the compiled kernels against the numpy fallback.

Usage: python benchmarks/bench_kernels.py [--size 256] [--repeat 3]
"""

import argparse
import sys
import time
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from usegmix._kernels import HAVE_NATIVE, _fallback  # noqa: E402


def timed(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--size", type=int, default=256)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    if not HAVE_NATIVE:
        print("compiled kernels are not built; run `python setup.py build_ext --inplace` first")
        return 1
    from usegmix._kernels import _native

    from usegmix.features import _resize_bilinear
    from usegmix.superpixel import _init_centers, rgb_to_lab

    size = args.size
    rng = np.random.default_rng(0)
    low = rng.integers(0, 256, (8, 8, 3), dtype=np.uint8)
    img = _resize_bilinear(low, size, size)
    lab = rgb_to_lab(img)
    centers, step = _init_centers(lab, 30)

    cases = []

    c_nat = centers.copy()
    c_fb = centers.copy()
    cases.append(
        (
            f"slic_iterate {size}x{size}, K=30, 10 iters",
            lambda: _native.slic_iterate(lab, c_nat.copy(), step, 10.0, 10),
            lambda: _fallback.slic_iterate(lab, c_fb.copy(), step, 10.0, 10),
        )
    )

    cases.append(
        (
            f"flood_fill {size}x{size} smooth, tol=40",
            lambda: _native.flood_fill(img, size // 2, size // 2, 40, 4, size * size),
            lambda: _fallback.flood_fill(img, size // 2, size // 2, 40, 4, size * size),
        )
    )

    inv = np.array([0.8, 0.1, 2.0, -0.1, 0.9, 1.0])
    cases.append(
        (
            f"warp_bilinear {size}x{size}",
            lambda: _native.warp_bilinear_rgb(img, inv, size, size),
            lambda: _fallback.warp_bilinear_rgb(img, inv, size, size),
        )
    )

    unk = np.zeros((size, size), dtype=np.uint8)
    unk[size // 8 : -size // 8, size // 8 : -size // 8] = 1
    n = int(unk.sum())
    b = rng.normal(size=n) * 100
    x0 = np.zeros(n)
    cases.append(
        (
            f"cg_masked_laplacian {n} unknowns",
            lambda: _native.cg_masked_laplacian(unk, b, x0, 1e-8, 10 * n),
            lambda: _fallback.cg_masked_laplacian(unk, b, x0, 1e-8, 10 * n),
        )
    )

    print(f"{'kernel':44s} {'native':>10s} {'fallback':>10s} {'speedup':>8s}")
    for name, nat, fb in cases:
        tn = timed(nat, args.repeat)
        tf = timed(fb, args.repeat)
        print(f"{name:44s} {tn * 1e3:9.2f}ms {tf * 1e3:9.2f}ms {tf / tn:7.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
