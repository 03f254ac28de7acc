"""Compare the numba kernels with their pure-numpy fallbacks.

Usage: python3 benchmarks/bench_kernels.py [--reps 200] [--steps 5000] [--repeat 3]

Each kernel is run once per backend to warm up (JIT compile), then timed
``--repeat`` times; the best time is reported together with the maximum
absolute difference between the two backends' outputs.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from ergolab import _accel


def best_time(fn, repeat):
    out = fn()
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--reps", type=int, default=200)
    ap.add_argument("--steps", type=int, default=5000)
    ap.add_argument("--points", type=int, default=200_000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    if not _accel._HAVE_NUMBA:
        print("numba is not importable; only the numpy backend is available")
        return 1
    keys = np.array([_accel.derive_key(0, r, 1) for r in range(args.reps)], dtype=np.uint64)
    x0 = np.zeros((args.reps, 1))
    rng = np.random.default_rng(0)
    pts = rng.normal(scale=0.5, size=(args.points, 2))
    r, step = 0.05, 0.025
    offs = _accel.stencil(r, step, 2)
    shape = [81, 81]
    lo = np.array([-1.0, -1.0])

    cases = {
        "gaussian_block": lambda b: _accel.gaussian_block(keys, 0, args.steps, 1, backend=b),
        "em_poly (OU)": lambda b: _accel.em_poly(x0, keys, 0, args.steps, 0.01, 1.0, 1.0, 0.0,
                                                 backend=b)[0],
        "em_poly (quartic)": lambda b: _accel.em_poly(x0, keys, 0, args.steps, 0.01, 1.0, 0.0, 1.0,
                                                      backend=b)[0],
        "stamp_occupation": lambda b: _accel.stamp_occupation(pts, np.ones(len(pts)), lo, step,
                                                              shape, offs, r, backend=b),
    }
    print(f"{'kernel':<20}{'numpy [s]':>12}{'numba [s]':>12}{'speedup':>10}{'max |diff|':>14}")
    for name, fn in cases.items():
        t_np, out_np = best_time(lambda: fn("numpy"), args.repeat)
        t_nb, out_nb = best_time(lambda: fn("numba"), args.repeat)
        diff = float(np.max(np.abs(np.asarray(out_np) - np.asarray(out_nb))))
        print(f"{name:<20}{t_np:>12.4f}{t_nb:>12.4f}{t_np / t_nb:>10.1f}{diff:>14.2e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
