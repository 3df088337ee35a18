"""Compare the compiled kernels with the numpy fallback.

Run with ``python benchmarks/bench_kernels.py``.  Each case reports the best
of several repeats for both backends and checks that their outputs agree.
"""
import argparse
import timeit

import numpy as np

from shockratio import _kernels_py

try:
    from shockratio import _kernels
except ImportError:  # extension not built
    _kernels = None


def cases(rng):
    for m in (512, 2048, 4096):
        k, s = rng.random(m), rng.random(m)
        yield f"causal_convolve m={m}", "causal_convolve", (k, s)
    # dyadic-atom lattice: 2^-16 grid, 9 atoms, 400 steps
    shifts = np.array([0] + [2 ** (16 - j) for j in range(1, 9)], dtype=np.int64)
    probs = np.array([0.5] + [0.5 * 2.0**-j for j in range(1, 9)])
    probs /= probs.sum()
    for n in (50, 400):
        yield f"lattice_renewal size=65537 n={n}", "lattice_renewal", (shifts, probs, 65537, n)


def best(fn, args, repeat):
    return min(timeit.repeat(lambda: fn(*args), number=1, repeat=repeat))


def main(argv=None):
    p = argparse.ArgumentParser()
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args(argv)
    rng = np.random.default_rng(0)
    print(f"{'case':40s} {'python [s]':>12s} {'cython [s]':>12s} {'speedup':>8s} {'max diff':>10s}")
    for label, name, fargs in cases(rng):
        py = getattr(_kernels_py, name)
        t_py = best(py, fargs, args.repeat)
        if _kernels is None:
            print(f"{label:40s} {t_py:12.4g} {'n/a':>12s}")
            continue
        cy = getattr(_kernels, name)
        t_cy = best(cy, fargs, args.repeat)
        a, b = np.asarray(py(*fargs)), np.asarray(cy(*fargs))
        diff = float(np.max(np.abs(a - b)))
        print(f"{label:40s} {t_py:12.4g} {t_cy:12.4g} {t_py / t_cy:8.2f} {diff:10.2e}")


if __name__ == "__main__":
    main()
