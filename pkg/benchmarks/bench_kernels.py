"""Time the compiled kernels against the numpy fallback.

Usage: python benchmarks/bench_kernels.py [--repeat N]
"""
import argparse
import timeit

import numpy as np

from luba import _backend
from luba.equilibrium import solve_infinite_v


def cases():
    rng = np.random.default_rng(0)
    nash = solve_infinite_v(1000.0)
    K = nash.support_end + 25
    p = np.exp(-np.arange(1, K + 1) / 30.0)
    p /= p.sum()
    target = nash.probabilities(K)
    counts = rng.poisson(0.8, size=(8192, 60)).astype(np.int64)
    w = rng.random(120)
    u = rng.random((20000, 5))
    return {
        "recurrence_infinite(1e5)": lambda k: k.recurrence_infinite(1e5, 1e-12, 10**6),
        "recurrence_finite(V=1000)": lambda k: k.recurrence_finite(5.0, 1000, 10**6),
        "potential_win(K=240)": lambda k: k.potential_win(1000.0 * p, K),
        "replicator_advance(100 steps)": lambda k: k.replicator_advance(p, 1000.0, 0.01, 100, target,
                                                                      1e-12, 2, -1e-6),
        "lowest_unique(8192x60)": lambda k: k.lowest_unique(counts),
        "sample_distinct(20000x5)": lambda k: k.sample_distinct(w, u),
    }


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    if _backend.compiled is None:
        raise SystemExit("compiled kernels are not built; reinstall with Cython available")
    print(f"{'kernel':32s} {'python ms':>10s} {'cython ms':>10s} {'speedup':>8s}")
    for name, fn in cases().items():
        times = {}
        for label, mod in (("python", _backend.python), ("cython", _backend.compiled)):
            number = 1
            while timeit.timeit(lambda: fn(mod), number=number) < 0.05:
                number *= 2
            best = min(timeit.repeat(lambda: fn(mod), number=number, repeat=args.repeat))
            times[label] = 1e3 * best / number
        print(f"{name:32s} {times['python']:10.3f} {times['cython']:10.3f} "
              f"{times['python'] / times['cython']:8.1f}x")


if __name__ == "__main__":
    main()
