"""Timing comparison of the candidate-scan backends.

The scan is the inner loop of every optimizer iteration: for each element
find the candidate minimizing w . f over the whole design space.  Run as

    python3 benchmarks/bench_scan.py [--elements 300] [--features 62]
                                     [--threads 1 2 4]

and it times the compiled kernel (if built) against the numpy fallback on
a few design-space sizes, checking that both agree on the winners.
"""

import argparse
import time

import numpy as np

from porosgp import kernels, scan_numpy


def time_call(fun, repeat=5):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fun()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--elements", type=int, default=300)
    ap.add_argument("--features", type=int, default=62)
    ap.add_argument("--candidates", type=int, nargs="*",
                    default=[10_000, 50_000, 141_180])
    ap.add_argument("--threads", type=int, nargs="*", default=[1])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    have_compiled = kernels.scan_backend() == "compiled"
    if not have_compiled:
        print("compiled kernel not built; timing the numpy fallback only")

    rng = np.random.default_rng(0)
    weights = rng.standard_normal((args.elements, args.features))

    header = ["candidates", "numpy [ms]"]
    if have_compiled:
        header += ["compiled(t=%d) [ms]" % t for t in args.threads]
        header += ["speedup(t=%d)" % t for t in args.threads]
    print("  ".join("%-18s" % h for h in header))

    for nc in args.candidates:
        feats = rng.standard_normal((nc, args.features))
        idx_np, val_np = scan_numpy.scan_scores(weights, feats)
        t_np = time_call(lambda: scan_numpy.scan_scores(weights, feats),
                         args.repeat)
        cells = ["%-18d" % nc, "%-18.2f" % (t_np * 1e3)]
        if have_compiled:
            times = []
            for t in args.threads:
                idx_c, val_c = kernels.scan_scores(weights, feats,
                                                   threads=t)
                if not np.array_equal(idx_c, idx_np):
                    raise SystemExit("backends disagree at nc=%d" % nc)
                if np.abs(val_c - val_np).max() > 1e-10:
                    raise SystemExit("score values drift at nc=%d" % nc)
                times.append(time_call(
                    lambda t=t: kernels.scan_scores(weights, feats,
                                                    threads=t),
                    args.repeat))
            cells += ["%-18.2f" % (x * 1e3) for x in times]
            cells += ["%-18.1f" % (t_np / x) for x in times]
        print("  ".join(cells))


if __name__ == "__main__":
    main()
