"""Time the numba loop kernels against their numpy twins.

    python3 benchmarks/bench_kernels.py [--n 50] [--samples 64] [--repeat 5]

Both backends receive identical inputs; outputs are cross-checked before
timing so a speedup never hides a disagreement.
"""

import argparse
import time

import numpy as np

from prefopt import generate_uniform
from prefopt._jit import HAS_NUMBA
from prefopt.kernels import loops, vectorized


def best_of(fn, repeat):
    fn()  # warm-up (triggers JIT compilation on the first call)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases(n, samples, hk_n, seed):
    g = np.random.default_rng(seed)
    dist = np.asarray(generate_uniform(n, 1, seed=seed)[0].dist)
    theta = -5.0 * dist
    u = g.random((samples, n - 1))
    perms, _, _ = loops.sample_tours(theta, 1.0, 0, u)
    weights = g.normal(size=samples)
    start = g.permutation(n)
    order = g.permutation(n - 1).astype(np.int64)
    hk_dist = np.asarray(generate_uniform(hk_n, 1, seed=seed)[0].dist)
    return {
        f"sample_tours  N={samples} n={n}": lambda k: k.sample_tours(theta, 1.0, 0, u),
        f"score_tours   N={samples} n={n}": lambda k: k.score_tours(theta, 1.0, perms),
        f"grad_weighted N={samples} n={n}": lambda k: k.grad_weighted(theta, 1.0, perms, weights),
        f"two_opt       n={n} to convergence": lambda k: k.two_opt(dist, start, 10**6, False, order),
        f"held_karp     n={hk_n}": lambda k: k.held_karp(hk_dist),
    }


def check(a, b):
    for x, y in zip(a if isinstance(a, tuple) else (a,), b if isinstance(b, tuple) else (b,)):
        if isinstance(x, np.ndarray) and x.dtype.kind == "f":
            assert np.allclose(x, y, atol=1e-9), "backends disagree"
        else:
            assert np.array_equal(np.asarray(x), np.asarray(y)), "backends disagree"


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=50)
    ap.add_argument("--samples", type=int, default=64)
    ap.add_argument("--hk-n", type=int, default=13)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    if not HAS_NUMBA:
        print("numba is not installed; the loop kernels run as plain Python")
    print(f"{'kernel':40s} {'numba [ms]':>12s} {'numpy [ms]':>12s} {'speedup':>8s}")
    for name, run in cases(args.n, args.samples, args.hk_n, args.seed).items():
        check(run(loops), run(vectorized))
        t_loop = best_of(lambda: run(loops), args.repeat)
        t_vec = best_of(lambda: run(vectorized), args.repeat)
        print(f"{name:40s} {1e3 * t_loop:12.3f} {1e3 * t_vec:12.3f} {t_vec / t_loop:8.1f}x")


if __name__ == "__main__":
    main()
