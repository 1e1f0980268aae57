#!/usr/bin/env python3
"""Time the numba kernels against their pure-numpy fallbacks.

Each case runs through the public API under both backends, checks that
the two outputs agree, and reports the best of ``--repeat`` wall times.
Numba compile time is excluded by one warm-up call per case.

Usage:
    python3 benchmarks/bench_kernels.py
    python3 benchmarks/bench_kernels.py --n 562 --p 120 --repeat 3 --json bench.json
"""
import argparse
import json
import sys
import time

import numpy as np

from dnrisk import _accel
from dnrisk.explain import tree_shap
from dnrisk.lasso import fit_l1_logistic, lambda_max
from dnrisk.learners import DTParams, GBDTParams, RFParams, fit_cart, fit_gbdt, fit_random_forest


def make_data(n, p, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, p))
    beta = np.zeros(p)
    beta[: max(1, p // 4)] = rng.normal(0, 1, size=max(1, p // 4))
    y = (rng.random(n) < 1 / (1 + np.exp(-X @ beta))).astype(np.int64)
    return X, y


def cases(X, y):
    lam = 0.05 * lambda_max(X, y)
    gb = fit_gbdt(X, y, GBDTParams(n_estimators=100, max_depth=4, learning_rate=0.1))
    return {
        "cd (L1 logistic fit)": lambda: fit_l1_logistic(X, y, lam).coef,
        "splits (CART depth 6)": lambda: fit_cart(X, y, DTParams(max_depth=6)).predict_proba(X),
        "splits (RF 50 trees)": lambda: fit_random_forest(
            X, y, RFParams(n_estimators=50, max_depth=6), seed=1).predict_proba(X),
        "splits (GBDT 100 rounds)": lambda: fit_gbdt(
            X, y, GBDTParams(n_estimators=100, max_depth=4, learning_rate=0.1)).raw_output(X),
        "treeshap (GBDT 100 trees)": lambda: tree_shap(gb, X).values,
    }


def best_time(fn, repeat):
    best, out = np.inf, None
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t)
    return best, out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=562)
    ap.add_argument("--p", type=int, default=60)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--json", help="write results to this path")
    args = ap.parse_args(argv)
    if not _accel.NUMBA_AVAILABLE:
        print("numba is not installed; nothing to compare", file=sys.stderr)
        return 1

    X, y = make_data(args.n, args.p)
    with _accel.use_backend("numba"):
        table = cases(X, y)
    rows = []
    print(f"n={args.n} p={args.p} best of {args.repeat}")
    print(f"{'case':<28}{'numba s':>10}{'numpy s':>10}{'speedup':>9}{'max |diff|':>12}")
    for name, fn in table.items():
        with _accel.use_backend("numba"):
            fn()  # compile
            t_nb, out_nb = best_time(fn, args.repeat)
        with _accel.use_backend("numpy"):
            t_np, out_np = best_time(fn, args.repeat)
        diff = float(np.max(np.abs(np.asarray(out_nb) - np.asarray(out_np))))
        rows.append({"case": name, "numba_s": t_nb, "numpy_s": t_np,
                     "speedup": t_np / t_nb, "max_abs_diff": diff})
        print(f"{name:<28}{t_nb:>10.4f}{t_np:>10.4f}{t_np / t_nb:>8.1f}x{diff:>12.2e}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump({"n": args.n, "p": args.p, "repeat": args.repeat, "results": rows}, fh, indent=2)
    return 0


if __name__ == "__main__":
    sys.exit(main())
