"""Benchmark the jit-compiled hot loops against the pure-numpy fallback.

The numba path is selected by default; set ALIGNLAB_NUMBA=0 to force numpy.
This script times both inside one process by calling the private
implementations directly, so the two columns are directly comparable.

    python benchmarks/bench_forces.py [--sizes 250,500,1000,2000]
"""

import argparse
import time

import numpy as np

from alignlab import accel
from alignlab.torus import TorusGeometry, inverse_power_kernel


def _time(fn, repeat=5):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench(sizes):
    geom = TorusGeometry(dim=2, period=1.0)
    kernel = inverse_power_kernel(40.0, geom=geom)
    period = np.ascontiguousarray(geom.period)
    rows = []
    for n in sizes:
        rng = np.random.default_rng(0)
        x = rng.random((n, 2))
        v = rng.standard_normal((n, 2))
        m = np.full(n, 1.0 / n)
        w = np.ones(n)
        grid = rng.random((4096, 2))

        np_pair = lambda: accel._np_pairwise_alignment(x, v, m, kernel, period, w)
        np_favre = lambda: accel._np_favre_points(grid, x, v, m, kernel, period)
        row = {"n": n,
               "pairwise_numpy": _time(np_pair),
               "favre_numpy": _time(np_favre)}
        if accel.NUMBA_ENABLED:
            kind, param, tv, inv_dr = accel._unpack(kernel)
            nb_pair = lambda: accel._nb_pairwise_alignment(x, v, m, kind, param, tv,
                                                           inv_dr, period, w)
            nb_favre = lambda: accel._nb_favre_points(grid, x, v, m, kind, param, tv,
                                                      inv_dr, period)
            nb_pair()  # compile outside the timer
            nb_favre()
            row["pairwise_numba"] = _time(nb_pair)
            row["favre_numba"] = _time(nb_favre)
            a = np_pair()
            b = nb_pair()
            row["max_diff"] = float(np.max(np.abs(a - b)))
        rows.append(row)
    return rows


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--sizes", default="250,500,1000,2000")
    args = parser.parse_args()
    sizes = [int(s) for s in args.sizes.split(",")]

    rows = bench(sizes)
    cols = ["n", "pairwise_numpy", "pairwise_numba", "favre_numpy", "favre_numba", "max_diff"]
    print(f"numba enabled: {accel.NUMBA_ENABLED}")
    print("  ".join(f"{c:>16}" for c in cols))
    for row in rows:
        cells = []
        for c in cols:
            val = row.get(c, float("nan"))
            cells.append(f"{val:>16d}" if c == "n" else f"{val:>16.3g}")
        print("  ".join(cells))
    if accel.NUMBA_ENABLED:
        for row in rows:
            speed = row["pairwise_numpy"] / row["pairwise_numba"]
            print(f"n={row['n']}: pairwise speedup {speed:.1f}x, "
                  f"favre speedup {row['favre_numpy'] / row['favre_numba']:.1f}x")


if __name__ == "__main__":
    main()
