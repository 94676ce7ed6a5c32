"""Compare the numba and numpy kernel backends on the hot paths.

Run with::

    python3 benchmarks/bench_kernels.py [--repeats 20000]

The sizes match the default training configuration, where per-call
overhead (not FLOPs) decides which backend wins.
"""

import argparse
import time

import numpy as np

from distok import kernels

SIZES = {
    "encoder (32 -> 64 -> 8)": (32, 64, 8),
    "decoder (8 -> 64 -> 32)": (8, 64, 32),
}


def bench(fn, repeats):
    fn()  # warm up (triggers JIT compilation for the numba backend)
    start = time.perf_counter()
    for _ in range(repeats):
        fn()
    return (time.perf_counter() - start) / repeats


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=20000)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    rows = []
    for label, (in_dim, hid, out_dim) in SIZES.items():
        w1 = rng.standard_normal((hid, in_dim))
        b1 = rng.standard_normal(hid)
        w2 = rng.standard_normal((out_dim, hid))
        b2 = rng.standard_normal(out_dim)
        x = rng.standard_normal(in_dim)
        dy = rng.standard_normal(out_dim)

        for name, (mv, mvt, fwd, bwd) in sorted(kernels.BACKENDS.items()):
            y, h = fwd(w1, b1, w2, b2, x)
            t_fwd = bench(lambda: fwd(w1, b1, w2, b2, x), args.repeats)
            t_bwd = bench(lambda: bwd(w1, b1, w2, b2, x, h, dy), args.repeats)
            t_mv = bench(lambda: mv(w1, x), args.repeats)
            rows.append((label, name, t_fwd, t_bwd, t_mv))

    print(f"active backend: {kernels.backend_name()}; "
          f"{args.repeats} repeats per cell\n")
    print(f"{'case':28} {'backend':8} {'forward':>10} {'backward':>10} {'matvec':>10}")
    for label, name, t_fwd, t_bwd, t_mv in rows:
        print(f"{label:28} {name:8} {t_fwd * 1e6:9.2f}u {t_bwd * 1e6:9.2f}u "
              f"{t_mv * 1e6:9.2f}u")

    if "numba" in kernels.BACKENDS:
        by_case = {}
        for label, name, t_fwd, t_bwd, _ in rows:
            by_case.setdefault(label, {})[name] = t_fwd + t_bwd
        print()
        for label, times in by_case.items():
            ratio = times["numpy"] / times["numba"]
            print(f"{label}: numba is {ratio:.2f}x the speed of numpy "
                  "(forward+backward)")


if __name__ == "__main__":
    main()
