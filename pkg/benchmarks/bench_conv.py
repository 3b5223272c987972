"""Benchmark the compiled convolution kernels against the numpy fallback.

Shapes mirror the training harness: a 3x3 stem over one input channel and
a strided 3x3 stage over 16 channels, at small and large batch sizes. The
two backends trade places depending on shape: the compiled loops win where
channel counts are tiny and per-call overhead dominates, while the matmul
formulation wins once the inner dimensions are big enough for BLAS.

Usage: python benchmarks/bench_conv.py [--min-time 0.3]
"""

import argparse
import time

import numpy as np

from frnlayer.kernels import available_backends

CASES = [
    ("stem 3x3 c1->16, batch 1", (1, 18, 18, 1), (3, 3, 1, 16), 1),
    ("stem 3x3 c1->16, batch 32", (32, 18, 18, 1), (3, 3, 1, 16), 1),
    ("stage 3x3 c16->32 s2, batch 1", (1, 17, 17, 16), (3, 3, 16, 32), 2),
    ("stage 3x3 c16->32 s2, batch 32", (32, 17, 17, 16), (3, 3, 16, 32), 2),
    ("stage 3x3 c16->32 s2, batch 256", (256, 17, 17, 16), (3, 3, 16, 32), 2),
]


def timed(fn, min_time: float) -> float:
    fn()  # warm up
    start = time.perf_counter()
    calls = 0
    while time.perf_counter() - start < min_time:
        fn()
        calls += 1
    return (time.perf_counter() - start) / calls * 1e3


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--min-time", type=float, default=0.3,
                        help="seconds of repeats per measurement")
    args = parser.parse_args()

    backends = available_backends()
    if len(backends) < 2:
        print("compiled backend not available; only timing the numpy fallback")

    rng = np.random.default_rng(0)
    name_width = max(len(label) for label, *_ in CASES)
    header = f"{'case':<{name_width}}  {'pass':<8}"
    header += "".join(f"{name:>12}" for name in backends)
    print(header)
    print("-" * len(header))

    for label, x_shape, w_shape, stride in CASES:
        x = rng.normal(size=x_shape)
        w = rng.normal(size=w_shape)
        ref = None
        rows = {"forward": [], "backward": []}
        for name, impl in backends.items():
            out = impl.conv2d_forward(x, w, stride)
            if ref is None:
                ref = out
                g = rng.normal(size=out.shape)
            else:
                # summation order differs between backends, so entries that
                # nearly cancel need an absolute term
                np.testing.assert_allclose(out, ref, rtol=1e-11, atol=1e-13)
            rows["forward"].append(timed(
                lambda: impl.conv2d_forward(x, w, stride), args.min_time))
            rows["backward"].append(timed(
                lambda: (impl.conv2d_backward_input(g, w, x_shape, stride),
                         impl.conv2d_backward_weights(g, x, w_shape[:2],
                                                      stride)),
                args.min_time))
        for direction, times in rows.items():
            cells = "".join(f"{t:>9.3f} ms" for t in times)
            print(f"{label:<{name_width}}  {direction:<8}{cells}")
    print("\nbackend outputs agree within floating-point reordering noise")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
