"""Compare the compiled and numpy exploration kernels.

    python benchmarks/bench_explore.py [--n 200000] [--repeat 3]

Both backends must produce identical arrays; the script checks that before
timing.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from arboreal.kernels import BACKENDS
from arboreal.params import Params
from arboreal.sampler import _layer_params

CASES = [(3, 2.0, 10), (3, 2.0, 30), (3, 1.0, 30), (4, 1.5, 30), (3, 2.0, 100)]


def best_time(fn, repeat: int) -> float:
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--n", type=int, default=200_000)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args(argv)

    if "compiled" not in BACKENDS:
        print("compiled extension not available; only the numpy backend is timed")
    print(f"{'k':>2} {'beta':>5} {'R':>4} {'backend':>9} {'seconds':>9} {'samples/s':>12} {'speedup':>8}")
    for k, beta, R in CASES:
        p_open, eta_root, eta_other = _layer_params(Params(k, beta))
        outs = {}
        times = {}
        for name, fn in BACKENDS.items():
            def call(fn=fn):
                return fn(k, R, p_open, eta_root, eta_other, args.seed, 0, args.n)

            outs[name] = call()
            times[name] = best_time(call, args.repeat)
        if len(outs) == 2:
            a, b = outs["python"], outs["compiled"]
            if not all(np.array_equal(x, y) for x, y in zip(a, b)):
                raise SystemExit(f"backends disagree at k={k} beta={beta} R={R}")
        for name, t in times.items():
            speedup = times["python"] / t
            print(f"{k:>2} {beta:>5} {R:>4} {name:>9} {t:>9.3f} {args.n / t:>12.0f} {speedup:>7.1f}x")


if __name__ == "__main__":
    main()
