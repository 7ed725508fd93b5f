"""Time the numba kernels against their numpy fallbacks.

    python benchmarks/bench_kernels.py [--repeat 5]

Each pair is checked for bit-identical output before timing. The numpy
column is what runs when ANISOEVAL_DISABLE_NUMBA=1 is set.
"""

import argparse
import time

import numpy as np

from anisoeval import kernels
from anisoeval._accel import NUMBA_AVAILABLE


def best_of(fn, args, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t0)
    return min(times)


def cases(rng):
    keys = rng.integers(0, 2**63, size=2_000_000, dtype=np.uint64)
    a = rng.integers(0, 30, size=300).astype(np.float64)
    b = rng.integers(0, 30, size=300).astype(np.float64)
    xs = np.sort(rng.normal(size=200_000))
    ys = np.sort(rng.normal(0.1, 1.0, size=200_000))
    tokens = rng.integers(0, 2**63, size=2_000_000, dtype=np.uint64)
    return [
        ("hash_uniform  2M keys", "hash_uniform", (keys, np.uint64(7))),
        ("bootstrap     300 x 1000", "bootstrap_means", (a, b, 1000, np.uint64(3))),
        ("ks_d          200k x 200k", "ks_d", (xs, ys)),
        ("window_hashes 2M tokens", "window_hashes", (tokens, 13)),
    ]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if not NUMBA_AVAILABLE:
        raise SystemExit("numba is not installed; nothing to compare")
    rng = np.random.default_rng(0)
    print(f"{'kernel':<28}{'numba ms':>10}{'numpy ms':>10}{'speedup':>9}")
    for label, name, call in cases(rng):
        jit = getattr(kernels, f"{name}_jit")
        ref = getattr(kernels, f"{name}_np")
        out_j, out_n = jit(*call), ref(*call)  # also compiles
        same = all(np.array_equal(x, y) for x, y in zip(out_j, out_n)) if isinstance(out_j, tuple) \
            else np.array_equal(out_j, out_n)
        if not same:
            raise SystemExit(f"{name}: numba and numpy results differ")
        tj = best_of(jit, call, args.repeat)
        tn = best_of(ref, call, args.repeat)
        print(f"{label:<28}{tj * 1e3:>10.2f}{tn * 1e3:>10.2f}{tn / tj:>8.1f}x")


if __name__ == "__main__":
    main()
