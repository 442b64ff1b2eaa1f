"""Compare the pure-numpy kernels against the compiled extension.

Run from the repository root:

    python3 benchmarks/bench_kernels.py

The shapes mirror the encoder's two convolutions plus the pooling stage at
training-batch geometry, so the numbers predict epoch time directly.
"""

import argparse
import time

import numpy as np

from eegfactor import backend


def bench(fn, *args, repeats=20, warmup=3):
    for _ in range(warmup):
        fn(*args)
    t0 = time.perf_counter()
    for _ in range(repeats):
        fn(*args)
    return (time.perf_counter() - t0) / repeats * 1e3  # ms


def conv_case(name, xs, ws, stride, backends, repeats):
    rng = np.random.default_rng(0)
    x = rng.standard_normal(xs)
    w = rng.standard_normal(ws)
    b = rng.standard_normal(ws[0])
    ref = None
    print(f"\n{name}: x{xs} w{ws} stride{stride}")
    for bname, k in backends.items():
        y = k.conv2d_forward(x, w, b, stride)
        gy = np.ones_like(y)
        if ref is None:
            ref = (y, k.conv2d_backward(x, w, stride, gy))
        else:
            gb = k.conv2d_backward(x, w, stride, gy)
            err = max(
                np.abs(y - ref[0]).max(),
                max(np.abs(a - b2).max() for a, b2 in zip(gb, ref[1])),
            )
            print(f"  parity vs numpy: max abs diff {err:.2e}")
        fwd = bench(k.conv2d_forward, x, w, b, stride, repeats=repeats)
        bwd = bench(k.conv2d_backward, x, w, stride, gy, repeats=repeats)
        print(f"  {bname:<9} forward {fwd:8.2f} ms   backward {bwd:8.2f} ms")


def pool_case(xs, kernel, stride, backends, repeats):
    rng = np.random.default_rng(0)
    x = rng.standard_normal(xs)
    print(f"\navg_pool: x{xs} kernel{kernel} stride{stride}")
    for bname, k in backends.items():
        y = k.avgpool_forward(x, kernel, stride)
        gy = np.ones_like(y)
        fwd = bench(k.avgpool_forward, x, kernel, stride, repeats=repeats)
        bwd = bench(k.avgpool_backward, x.shape, kernel, stride, gy, repeats=repeats)
        print(f"  {bname:<9} forward {fwd:8.2f} ms   backward {bwd:8.2f} ms")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeats", type=int, default=20)
    ap.add_argument("--batch", type=int, default=16)
    args = ap.parse_args()

    backends = {"numpy": backend.get_backend("numpy")}
    try:
        backends["compiled"] = backend.get_backend("compiled")
    except Exception as e:
        print(f"compiled backend unavailable ({e}); benchmarking numpy only")
    print(f"active backend at import: {backend.BACKEND_NAME}")

    B = args.batch
    conv_case("temporal conv", (B, 1, 24, 997), (40, 1, 1, 48), (1, 1), backends, args.repeats)
    conv_case("spatial conv", (B, 40, 24, 950), (40, 40, 24, 1), (1, 1), backends, args.repeats)
    conv_case(
        "temporal conv (reduced acceptance geometry)",
        (B, 1, 24, 384), (8, 1, 1, 24), (1, 1), backends, args.repeats,
    )
    conv_case("generic strided conv", (B, 4, 16, 128), (8, 4, 5, 9), (2, 3), backends, args.repeats)
    pool_case((B, 40, 1, 950), (1, 68), (1, 14), backends, args.repeats)


if __name__ == "__main__":
    main()
