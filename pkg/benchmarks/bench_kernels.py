"""Compare the compiled and numpy kernels for the fixed-point averages.

Usage: python3 benchmarks/bench_kernels.py [--d 3] [--n 20000] [--repeat 50]
"""
import argparse
import timeit

import numpy as np

from gsfica import _ext
from gsfica.preprocess import random_orthogonal
from gsfica.sources import rng


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--d", type=int, default=3)
    p.add_argument("--n", type=int, default=20000)
    p.add_argument("--repeat", type=int, default=50)
    a = p.parse_args()
    X = rng(0).standard_normal((a.d, a.n))
    W = random_orthogonal(a.d, 1)
    codes = np.arange(a.d) % 3
    print(f"d={a.d} N={a.n} codes={codes.tolist()} selected backend: {_ext.BACKEND}")
    kernels = {"python": _ext.accumulate_py}
    if _ext.accumulate_c is not None:
        kernels["cython"] = _ext.accumulate_c
    ref = _ext.accumulate_py(W, X, codes)
    for name, fn in kernels.items():
        gp, gx = fn(W, X, codes)
        err = max(np.abs(gp - ref[0]).max(), np.abs(gx - ref[1]).max())
        t = min(timeit.repeat(lambda: fn(W, X, codes), number=1, repeat=a.repeat))
        print(f"{name:>7}: {t * 1e3:8.3f} ms   max |diff| vs python = {err:.2e}")


if __name__ == "__main__":
    main()
