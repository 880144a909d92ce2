"""Compare the compiled and numpy pair-sum kernels on the seminorm workload.

    python benchmarks/bench_kernels.py [--sizes 17 33 65] [--repeat 3]

Prints one line per grid size with the best-of-``repeat`` wall time of each
backend and their relative difference.
"""
import argparse
import time

import numpy as np

from winkler_lab import _kernels_py
from winkler_lab.fields import _distance_table
from winkler_lab.grid import build_rectangle

try:
    from winkler_lab import _kernels as compiled
except ImportError:  # extension not built
    compiled = None


def workload(n, columns=5, s=0.25):
    dom = build_rectangle(1.0, 1.0, n)
    ii, jj = np.nonzero(dom.interior)
    X, Y = dom.coords()
    vals = np.column_stack([np.sin((c + 1) * np.pi * X[dom.interior]) * Y[dom.interior]
                            for c in range(columns)])
    return (ii.astype(np.int64), jj.astype(np.int64), np.ascontiguousarray(vals),
            _distance_table(dom.nx, dom.ny, s), np.ones(ii.size))


def best_time(fn, args, repeat):
    best, out = np.inf, None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, np.asarray(out)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[17, 33, 65])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    print(f"{'n':>5} {'nodes':>7} {'numpy [s]':>10} {'cython [s]':>11} {'speedup':>8} {'max rel diff':>13}")
    for n in args.sizes:
        data = workload(n)
        tp, rp = best_time(_kernels_py.pair_sums, data, args.repeat)
        if compiled is None:
            print(f"{n:>5} {data[0].size:>7} {tp:>10.4f} {'n/a':>11}")
            continue
        tc, rc = best_time(compiled.pair_sums, data, args.repeat)
        diff = float(np.max(np.abs(rc - rp) / np.abs(rp)))
        print(f"{n:>5} {data[0].size:>7} {tp:>10.4f} {tc:>11.4f} {tp / tc:>8.2f} {diff:>13.2e}")


if __name__ == "__main__":
    main()
