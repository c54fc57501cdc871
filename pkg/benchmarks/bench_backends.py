"""Time the numba kernels against the numpy fallback.

    python benchmarks/bench_backends.py [--horizon N] [--repeat K]

Each kernel runs once untimed per backend so numba compilation is excluded.
"""

import argparse
import time

import numpy as np

from halpern_rates import _kernels, moduli, operators


def _best(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def cases(horizon):
    rot = operators.rotation(2, [(0, 1, 90.0)])
    comp = operators.composition([operators.rotation(2, [(0, 1, 60.0)]),
                                  operators.box_projection([-1.0, -1.0], [1.0, 1.0])])
    lam = moduli.inverse_sqrt().lam_array(1, horizon + 1)
    values = np.random.default_rng(0).normal(size=horizon)

    def run(op, backend):
        anchor = np.ones(op.dim) / np.sqrt(op.dim)
        x = anchor.copy()
        _kernels.iterate_chunk(anchor, x, lam, op.program, op.norm.code, _kernels.MODE_HALPERN,
                               0, backend)

    return {
        "halpern[rotation]": lambda b: run(rot, b),
        "halpern[rotation+box]": lambda b: run(comp, b),
        "prefix_sums": lambda b: _kernels.prefix_sums(values, b),
        "recurrence": lambda b: _kernels.recurrence(lam[1:], values[:-1], 1.0, b),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--horizon", type=int, default=200_000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    backends = ["numpy"] + (["numba"] if _kernels.HAVE_NUMBA else [])
    print(f"horizon={args.horizon} repeat={args.repeat} (best of)")
    print(f"{'kernel':<24}" + "".join(f"{b:>12}" for b in backends) + f"{'speedup':>10}")
    for name, fn in cases(args.horizon).items():
        times = {}
        for b in backends:
            fn(b)  # warm-up / compile
            times[b] = _best(lambda: fn(b), args.repeat)
        speed = times["numpy"] / times["numba"] if "numba" in times else float("nan")
        print(f"{name:<24}" + "".join(f"{times[b]:>11.4f}s" for b in backends) + f"{speed:>9.1f}x")


if __name__ == "__main__":
    main()
