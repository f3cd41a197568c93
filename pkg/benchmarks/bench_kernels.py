#!/usr/bin/env python3
"""Timing comparison of the compiled and pure-numpy kernels.

Usage: python benchmarks/bench_kernels.py [--repeats N]
"""

import argparse
import time

import numpy as np

from e2f.kernels import available_backends


def time_call(fn, *args, repeats: int) -> float:
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - start)
    return best


def bench_accumulate(backends, repeats):
    print("\naccumulate: events -> (F,3,H,W) volume")
    print(f"{'events':>10} {'size':>10}"
          + "".join(f" {name:>12}" for name in backends)
          + f" {'speedup':>9}")
    for n, (h, w) in ((10_000, (64, 64)), (200_000, (240, 180)),
                      (2_000_000, (320, 448))):
        rng = np.random.default_rng(0)
        frames = 12
        gidx = rng.integers(0, frames, n)
        xs = rng.integers(0, w, n)
        ys = rng.integers(0, h, n)
        ps = rng.choice([-1, 1], n).astype(np.int64)
        times = {name: time_call(mod.accumulate, gidx, xs, ys, ps,
                                 frames, h, w, repeats=repeats)
                 for name, mod in backends.items()}
        ratio = (times["python"] / times["compiled"]
                 if "compiled" in times else float("nan"))
        print(f"{n:>10} {f'{h}x{w}':>10}"
              + "".join(f" {times[name] * 1e3:>10.2f}ms" for name in backends)
              + f" {ratio:>8.1f}x")


def bench_simulate(backends, repeats):
    print("\nsimulate: threshold events from (F,N) intensity tracks")
    print(f"{'frames':>10} {'pixels':>10}"
          + "".join(f" {name:>12}" for name in backends)
          + f" {'speedup':>9}")
    for frames, pixels in ((12, 32 * 32), (12, 128 * 128), (12, 320 * 448)):
        rng = np.random.default_rng(1)
        base = rng.uniform(0.2, 0.8, pixels)
        intens = np.ascontiguousarray(np.clip(
            base + rng.uniform(-0.05, 0.05, (frames, pixels)).cumsum(axis=0),
            0.0, 1.0))
        times_arr = np.linspace(1.0 / frames, 1.0, frames)
        times = {name: time_call(mod.simulate, intens, times_arr, 0.02,
                                 repeats=repeats)
                 for name, mod in backends.items()}
        ratio = (times["python"] / times["compiled"]
                 if "compiled" in times else float("nan"))
        print(f"{frames:>10} {pixels:>10}"
              + "".join(f" {times[name] * 1e3:>10.2f}ms" for name in backends)
              + f" {ratio:>8.1f}x")


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=3)
    args = parser.parse_args()
    backends = available_backends()
    print("available backends:", ", ".join(backends))
    if "compiled" not in backends:
        print("compiled kernels not built; timing the fallback only")
    bench_accumulate(backends, args.repeats)
    bench_simulate(backends, args.repeats)


if __name__ == "__main__":
    main()
