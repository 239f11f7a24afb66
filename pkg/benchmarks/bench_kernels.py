#!/usr/bin/env python3
"""Time the compiled forest kernels against their pure-numpy fallbacks.

Both implementations of each kernel ship in ``survstack.kernels``; the
package picks one at import time (numba unless SURVSTACK_DISABLE_NUMBA is
set). This script times the pair on matched inputs, checks they agree,
and reports the speedup, e.g.::

    python benchmarks/bench_kernels.py --sizes 500,2000,8000 --repeats 7
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from survstack.kernels import (
    NUMBA_ENABLED,
    logrank_best_split_numpy,
    traverse_tree_numpy,
)

if NUMBA_ENABLED:
    from survstack.kernels import logrank_best_split_numba, traverse_tree_numba


def _split_problem(n, rng):
    """One tree node's worth of split-search inputs (~70% events)."""
    t = rng.exponential(8.0, size=n)
    e = (rng.random(n) < 0.7).astype(np.int64)
    xf = np.ascontiguousarray(rng.standard_normal(n))
    death_times = np.unique(t[e == 1])
    bucket = (np.searchsorted(death_times, t, side="right") - 1).astype(np.int64)
    at_risk = np.bincount(bucket[bucket >= 0], minlength=death_times.size)
    y_total = np.cumsum(at_risk[::-1])[::-1].astype(np.float64)
    d_total = np.bincount(bucket[e == 1], minlength=death_times.size).astype(np.float64)
    return xf, bucket, e == 1, d_total, y_total, 15


def _tree_problem(n, depth, p, rng):
    """A complete binary tree of the given depth plus rows to route."""
    n_internal = 2 ** depth - 1
    n_nodes = 2 ** (depth + 1) - 1
    feature = np.full(n_nodes, -1, dtype=np.int64)
    threshold = np.full(n_nodes, np.nan)
    left = np.full(n_nodes, -1, dtype=np.int64)
    right = np.full(n_nodes, -1, dtype=np.int64)
    feature[:n_internal] = rng.integers(0, p, size=n_internal)
    threshold[:n_internal] = rng.standard_normal(n_internal) * 0.5
    left[:n_internal] = 2 * np.arange(n_internal) + 1
    right[:n_internal] = 2 * np.arange(n_internal) + 2
    x = rng.standard_normal((n, p))
    return feature, threshold, left, right, x


def _best_of(fn, args, repeats):
    fn(*args)  # warm-up (and JIT compilation for the numba variant)
    times = []
    for _ in range(repeats):
        start = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - start)
    return min(times)


def _check_agreement(split_args, tree_args):
    a = logrank_best_split_numba(*split_args)
    b = logrank_best_split_numpy(*split_args)
    if not (abs(a[0] - b[0]) < 1e-9 and a[2] == b[2]
            and (np.isnan(a[1]) and np.isnan(b[1]) or abs(a[1] - b[1]) < 1e-9)):
        raise AssertionError(f"split kernels disagree: {a} vs {b}")
    if not np.array_equal(traverse_tree_numba(*tree_args),
                          traverse_tree_numpy(*tree_args)):
        raise AssertionError("traversal kernels disagree")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--sizes", default="500,2000,8000",
                        help="comma-separated node/row counts")
    parser.add_argument("--repeats", type=int, default=7)
    parser.add_argument("--depth", type=int, default=12,
                        help="tree depth for the traversal benchmark")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    sizes = [int(s) for s in args.sizes.split(",")]
    rng = np.random.default_rng(args.seed)

    if not NUMBA_ENABLED:
        print("numba is disabled or unavailable; timing the numpy fallback only")
    header = f"{'kernel':<22}{'n':>8}{'numpy':>12}{'numba':>12}{'speedup':>9}"
    print(header)
    print("-" * len(header))

    for n in sizes:
        split_args = _split_problem(n, rng)
        tree_args = _tree_problem(n, args.depth, 5, rng)
        if NUMBA_ENABLED:
            _check_agreement(split_args, tree_args)
        for name, np_fn, nb_fn, fn_args in (
            ("logrank_best_split", logrank_best_split_numpy,
             NUMBA_ENABLED and logrank_best_split_numba, split_args),
            ("traverse_tree", traverse_tree_numpy,
             NUMBA_ENABLED and traverse_tree_numba, tree_args),
        ):
            t_np = _best_of(np_fn, fn_args, args.repeats)
            if nb_fn:
                t_nb = _best_of(nb_fn, fn_args, args.repeats)
                print(f"{name:<22}{n:>8}{t_np * 1e3:>10.3f}ms"
                      f"{t_nb * 1e3:>10.3f}ms{t_np / t_nb:>8.1f}x")
            else:
                print(f"{name:<22}{n:>8}{t_np * 1e3:>10.3f}ms{'-':>12}{'-':>9}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
