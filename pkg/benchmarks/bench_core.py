"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_core.py [--repeat 5]
"""
import argparse
import timeit

import numpy as np

from dyadiclab import _fallback

try:
    from dyadiclab import _core
except ImportError:
    _core = None


def cases(rng):
    A = rng.normal(size=(256, 3, 3))
    B = rng.normal(size=(256, 3, 3))
    w = np.exp(rng.normal(size=(64, 256)))
    mu = rng.uniform(0.1, 1.0, size=256)
    a = rng.uniform(size=12)
    return {
        "pair_opnorms 256x256 d=3": lambda m: m.pair_opnorms(A, B),
        "fujii_wilson 64 dirs, 256 leaves": lambda m: m.fujii_wilson(w, mu, 1, 8),
        "expanding_sum_rhs len 12, m=4": lambda m: m.expanding_sum_rhs(a, 4, 0.5),
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    print(f"{'kernel':36s} {'python [ms]':>12s} {'cython [ms]':>12s} {'speedup':>8s}")
    for name, fn in cases(rng).items():
        tp = min(timeit.repeat(lambda: fn(_fallback), number=1, repeat=args.repeat)) * 1e3
        if _core is None:
            print(f"{name:36s} {tp:12.2f} {'n/a':>12s}")
            continue
        tc = min(timeit.repeat(lambda: fn(_core), number=1, repeat=args.repeat)) * 1e3
        print(f"{name:36s} {tp:12.2f} {tc:12.2f} {tp / tc:8.1f}")


if __name__ == "__main__":
    main()
