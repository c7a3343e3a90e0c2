"""Time the numba kernels against the numpy fallback on space-time arrays.

Usage::

    python benchmarks/bench_kernels.py [--sizes 101x200 201x400] [--repeat 20]

The first numba call compiles (or loads from the on-disk cache) and is timed
separately, so the table reports steady-state cost per call.
"""
import argparse
import time

import numpy as np

from waveplate import _kernels as K


def best_of(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench(m, n, repeat):
    rng = np.random.default_rng(0)
    p = rng.standard_normal((m, n)) + 1j * rng.standard_normal((m, n))
    logw = rng.uniform(0.0, 400.0, (m, n))
    f = np.abs(p) ** 2
    ds, hx = 2.0 / (m + 1), np.pi / (n + 1)
    cases = {
        "st_operator": lambda b: K.st_operator(p, ds, hx, 1.0, -0.3, 1.0, backend=b),
        "node_gradients": lambda b: K.node_gradients(p, ds, hx, backend=b),
        "weighted_sum": lambda b: K.weighted_sum(logw, logw.max(), f, backend=b),
    }
    rows = []
    for name, fn in cases.items():
        t_np = best_of(lambda: fn("numpy"), repeat)
        if K.HAVE_NUMBA:
            t0 = time.perf_counter()
            fn("numba")
            first = time.perf_counter() - t0
            t_nb = best_of(lambda: fn("numba"), repeat)
        else:
            first = t_nb = float("nan")
        rows.append((name, m, n, t_np, t_nb, first))
    return rows


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--sizes", nargs="+", default=["101x200", "201x400", "401x800"])
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args(argv)
    print(f"numba available: {K.HAVE_NUMBA}")
    print(f"{'kernel':<16}{'m':>6}{'n':>6}{'numpy [ms]':>13}{'numba [ms]':>13}{'speedup':>9}{'first [ms]':>12}")
    for size in args.sizes:
        m, n = (int(v) for v in size.lower().split("x"))
        for name, m_, n_, t_np, t_nb, first in bench(m, n, args.repeat):
            print(f"{name:<16}{m_:>6}{n_:>6}{1e3 * t_np:>13.3f}{1e3 * t_nb:>13.3f}"
                  f"{t_np / t_nb:>9.2f}{1e3 * first:>12.1f}")


if __name__ == "__main__":
    main()
