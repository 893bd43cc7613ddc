"""Timing comparison of the numba-compiled kernels against the pure-Python
fallback on the production sampling workloads.

Run:  python3 benchmarks/bench_kernels.py
"""

import math
import time

import numpy as np

from dppost._kernels import build_backend, new_state
from dppost.constraints import ph5_system
from dppost.mechanisms import kl_matched_gaussian_variance


def bench(label, fn, repeat=3):
    fn()  # warm-up (triggers JIT compilation for the numba backend)
    best = math.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    print(f"  {label:<28s} {best * 1e3:10.2f} ms")
    return best


def main():
    cs = ph5_system(10)
    D = np.ascontiguousarray(cs.matrix)
    lo = np.ascontiguousarray(cs.lower)
    up = np.ascontiguousarray(cs.upper)
    z = np.array([500.0, 800.0, 400.0])
    y0 = z.copy()
    lam = 200.0 / math.log(10.0)
    prop_sd = math.sqrt(kl_matched_gaussian_variance(lam))

    results = {}
    for name, jit in (("numpy", False), ("numba", True)):
        print(f"{name} backend:")
        b = build_backend(jit)

        def run_tn():
            state = new_state(1)
            for _ in range(50_000):
                b.tn_draw(0.0, 1.0, 8.0, 9.0, state)

        def run_gibbs():
            b.gibbs_chain(z, 121.59, D, lo, up, y0.copy(), 10_000, 500, 1, new_state(2))

        def run_mh():
            b.mh_chain(z, lam, False, prop_sd, D, lo, up, y0.copy(),
                       2_000, 200, 1, 25, new_state(3))

        results[name] = {
            "tn_draw x50k (tail)": bench("tn_draw x50k (tail)", run_tn),
            "gibbs_chain 10k draws": bench("gibbs_chain 10k draws", run_gibbs),
            "mh_chain 2k draws": bench("mh_chain 2k draws", run_mh),
        }

    print("speedup (numpy / numba):")
    for key in results["numpy"]:
        print(f"  {key:<28s} {results['numpy'][key] / results['numba'][key]:10.1f}x")


if __name__ == "__main__":
    main()
