#!/usr/bin/env python3
"""Benchmark the numba convolution kernels against the numpy fallback.

Times forward, input-gradient, and weight-gradient passes over a grid of
shapes, checks the two backends agree numerically, and prints a table.

    python3 benchmarks/bench_kernels.py [--repeats 200]
"""

import argparse
import time

import numpy as np

from pirk.kernels import numpy_ops

try:
    from pirk.kernels import numba_ops
except ImportError:
    numba_ops = None

SHAPES = [
    # (label, padded input BxCxHpxWp, taps OxCxkhxkw)
    ("embed 16x1x14x14 k7 D8", (16, 1, 14, 14), (8, 1, 7, 7)),
    ("attn  16x8x8x8   k1 D8", (16, 8, 8, 8), (1, 8, 1, 1)),
    ("embed 64x1x34x34 k3 D8", (64, 1, 34, 34), (8, 1, 3, 3)),
    ("wide  8x8x16x16  k5 O4", (8, 8, 20, 20), (4, 8, 5, 5)),
]


def _time(fn, repeats):
    fn()  # warm up (and JIT-compile on the numba path)
    start = time.perf_counter()
    for _ in range(repeats):
        fn()
    return (time.perf_counter() - start) / repeats * 1e6  # us


def bench(repeats: int) -> None:
    if numba_ops is None:
        print("numba unavailable; nothing to compare")
        return
    rng = np.random.default_rng(0)
    header = f"{'case':26s} {'pass':8s} {'numpy us':>10s} {'numba us':>10s} {'speedup':>8s}"
    print(header)
    print("-" * len(header))
    for label, xshape, wshape in SHAPES:
        xp = rng.standard_normal(xshape)
        w = rng.standard_normal(wshape)
        out = numpy_ops.conv2d_forward(xp, w)
        gout = rng.standard_normal(out.shape)
        assert np.allclose(out, numba_ops.conv2d_forward(xp, w), atol=1e-10)
        assert np.allclose(numpy_ops.conv2d_grad_input(gout, w),
                           numba_ops.conv2d_grad_input(gout, w), atol=1e-10)
        assert np.allclose(numpy_ops.conv2d_grad_weights(xp, gout),
                           numba_ops.conv2d_grad_weights(xp, gout), atol=1e-10)
        cases = [
            ("forward", lambda: numpy_ops.conv2d_forward(xp, w),
             lambda: numba_ops.conv2d_forward(xp, w)),
            ("grad_in", lambda: numpy_ops.conv2d_grad_input(gout, w),
             lambda: numba_ops.conv2d_grad_input(gout, w)),
            ("grad_w", lambda: numpy_ops.conv2d_grad_weights(xp, gout),
             lambda: numba_ops.conv2d_grad_weights(xp, gout)),
        ]
        for name, np_fn, nb_fn in cases:
            t_np = _time(np_fn, repeats)
            t_nb = _time(nb_fn, repeats)
            print(f"{label:26s} {name:8s} {t_np:10.1f} {t_nb:10.1f} "
                  f"{t_np / t_nb:7.2f}x")


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=200)
    bench(parser.parse_args().repeats)
