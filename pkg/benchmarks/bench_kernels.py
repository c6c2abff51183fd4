"""Timing comparison of the compiled kernel core against the NumPy fallback.

Runs the six grid reductions at the sizes the solvers actually use and
prints per-call times plus the speedup.  Agreement between backends is
checked to 1e-12 relative before any timing is reported.

Usage: python3 benchmarks/bench_kernels.py [--repeats 200]
"""

import argparse
import time

import numpy as np

from pqlab import _kernels_py

try:
    from pqlab import _kernels_cy
except ImportError:
    _kernels_cy = None


def _time(fn, args, repeats):
    # one warm-up call, then best-of-5 batches
    fn(*args)
    best = float("inf")
    for _ in range(5):
        t0 = time.perf_counter()
        for _ in range(repeats):
            fn(*args)
        best = min(best, (time.perf_counter() - t0) / repeats)
    return best


def _cases(rng):
    u1a = rng.standard_normal(511)
    u1b = rng.standard_normal(4095)
    u2 = rng.standard_normal((128, 256))
    cases = []
    for name, u, h in (("1d n=512", u1a, 1 / 512), ("1d n=4096", u1b, 1 / 4096)):
        out = np.zeros_like(u)
        cases.append((f"grad_pow_sum_1d  {name}", "grad_pow_sum_1d",
                      (u, h, 3.0, 1e-12)))
        cases.append((f"grad_pow_grad_1d {name}", "grad_pow_grad_1d",
                      (u, h, 3.0, 1e-12, 1.0, out)))
        cases.append((f"abs_pow_sum      {name}", "abs_pow_sum", (u, 1.5)))
        cases.append((f"abs_pow_grad     {name}", "abs_pow_grad",
                      (u, 1.5, 1.0, out)))
    out2 = np.zeros_like(u2)
    cases.append(("grad_pow_sum_2d  128x256", "grad_pow_sum_2d",
                  (u2, 1 / 256, 3.0, 1e-12)))
    cases.append(("grad_pow_grad_2d 128x256", "grad_pow_grad_2d",
                  (u2, 1 / 256, 3.0, 1e-12, 1.0, out2)))
    return cases


def _agree(fname, args):
    py_fn = getattr(_kernels_py, fname)
    cy_fn = getattr(_kernels_cy, fname)
    if "sum" in fname:
        a, b = py_fn(*args), cy_fn(*args)
        return abs(a - b) / max(abs(a), 1e-300)
    out_py = np.zeros_like(args[0])
    out_cy = np.zeros_like(args[0])
    py_fn(*args[:-1], out_py)
    cy_fn(*args[:-1], out_cy)
    scale = np.abs(out_py).max()
    return float(np.abs(out_py - out_cy).max() / max(scale, 1e-300))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeats", type=int, default=200)
    args = ap.parse_args()

    if _kernels_cy is None:
        print("compiled backend not built; nothing to compare")
        return

    rng = np.random.default_rng(0)
    cases = _cases(rng)

    worst = max(_agree(fname, fargs) for _, fname, fargs in cases)
    print(f"backend agreement: worst relative deviation {worst:.2e}")
    assert worst < 1e-12

    print(f"{'kernel':<28} {'numpy':>10} {'cython':>10} {'speedup':>8}")
    for label, fname, fargs in cases:
        t_py = _time(getattr(_kernels_py, fname), fargs, args.repeats)
        t_cy = _time(getattr(_kernels_cy, fname), fargs, args.repeats)
        print(f"{label:<28} {t_py * 1e6:>8.1f}us {t_cy * 1e6:>8.1f}us "
              f"{t_py / t_cy:>7.2f}x")


if __name__ == "__main__":
    main()
