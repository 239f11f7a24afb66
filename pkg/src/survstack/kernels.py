"""Hot numeric kernels for the survival forest.

Each kernel has two implementations with matching semantics: a loop form
compiled with numba's @njit, and a vectorized pure-numpy fallback. The
fallback is selected when numba is unavailable or when the environment
variable SURVSTACK_DISABLE_NUMBA is set to a truthy value. Both are
importable directly (``*_numba`` / ``*_numpy``) so they can be compared;
``benchmarks/bench_kernels.py`` times them against each other.

Split-search convention: samples with feature value <= threshold go left;
candidate thresholds are midpoints between consecutive distinct values,
swept in increasing order, first-best wins ties.
"""

import os

import numpy as np

__all__ = [
    "NUMBA_ENABLED",
    "logrank_best_split",
    "logrank_best_split_numpy",
    "traverse_tree",
    "traverse_tree_numpy",
]

_DISABLE = os.environ.get("SURVSTACK_DISABLE_NUMBA", "").strip().lower()
_want_numba = _DISABLE not in ("1", "true", "yes", "on")


def _logrank_best_split_impl(xf, bucket, is_death, d_total, y_total, min_leaf):
    # One feature, one node. bucket[i] = index of the last death time
    # <= sample i's time (-1 if none): the sample is at risk for death-time
    # buckets 0..bucket[i]. is_death flags event samples (their time is a
    # death time of the node by construction).
    n = xf.shape[0]
    m = d_total.shape[0]
    order = np.argsort(xf, kind="mergesort")

    cnt_left = np.zeros(m, dtype=np.float64)
    d_left = np.zeros(m, dtype=np.float64)
    best_score = -1.0
    best_threshold = np.nan
    best_n_left = 0

    for pos in range(n - 1):
        i = order[pos]
        if bucket[i] >= 0:
            cnt_left[bucket[i]] += 1.0
        if is_death[i]:
            d_left[bucket[i]] += 1.0
        nxt = order[pos + 1]
        if xf[i] == xf[nxt]:
            continue
        n_left = pos + 1
        n_right = n - n_left
        if n_left < min_leaf:
            continue
        if n_right < min_leaf:
            break
        num = 0.0
        var = 0.0
        y_left = 0.0
        for k in range(m - 1, -1, -1):
            y_left += cnt_left[k]
            yk = y_total[k]
            dk = d_total[k]
            ratio = y_left / yk
            num += d_left[k] - ratio * dk
            if yk > 1.0:
                var += dk * ratio * (1.0 - ratio) * (yk - dk) / (yk - 1.0)
        if var > 0.0:
            score = abs(num) / np.sqrt(var)
            if score > best_score:
                best_score = score
                best_threshold = 0.5 * (xf[i] + xf[nxt])
                best_n_left = n_left
    return best_score, best_threshold, best_n_left


def logrank_best_split_numpy(xf, bucket, is_death, d_total, y_total, min_leaf):
    """Vectorized log-rank split search; same contract as the numba kernel."""
    n = xf.shape[0]
    m = d_total.shape[0]
    order = np.argsort(xf, kind="mergesort")
    xs = xf[order]
    b = bucket[order]
    isd = is_death[order].astype(bool)

    # Prefix-cumulated per-bucket death counts and at-risk entry counts.
    deaths = np.zeros((n, m))
    rows = np.flatnonzero(isd)
    deaths[rows, b[rows]] = 1.0
    at_risk = (np.arange(m)[None, :] <= b[:, None]).astype(float)
    d_left = np.cumsum(deaths, axis=0)
    y_left = np.cumsum(at_risk, axis=0)

    ratio = y_left / y_total[None, :]
    num = np.sum(d_left - ratio * d_total[None, :], axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        var_terms = d_total * ratio * (1.0 - ratio) * np.where(
            y_total > 1.0, (y_total - d_total) / np.maximum(y_total - 1.0, 1.0), 0.0
        )
    var = np.sum(var_terms, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        score = np.where(var > 0.0, np.abs(num) / np.sqrt(var), -np.inf)

    n_left = np.arange(1, n + 1)
    boundary = np.empty(n, dtype=bool)
    boundary[:-1] = xs[:-1] != xs[1:]
    boundary[-1] = False
    ok = boundary & (n_left >= min_leaf) & (n - n_left >= min_leaf)
    score = np.where(ok, score, -np.inf)
    pos = int(np.argmax(score))
    if not ok[pos] or not np.isfinite(score[pos]):
        return -1.0, np.nan, 0
    return float(score[pos]), float(0.5 * (xs[pos] + xs[pos + 1])), int(n_left[pos])


def _traverse_tree_impl(feature, threshold, left, right, x):
    n = x.shape[0]
    out = np.empty(n, dtype=np.int64)
    for i in range(n):
        node = 0
        while feature[node] >= 0:
            if x[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = node
    return out


def traverse_tree_numpy(feature, threshold, left, right, x):
    """Route each row of x to its leaf node index."""
    node = np.zeros(x.shape[0], dtype=np.int64)
    while True:
        f = feature[node]
        active = np.flatnonzero(f >= 0)
        if active.size == 0:
            return node
        cur = node[active]
        go_left = x[active, f[active]] <= threshold[cur]
        node[active] = np.where(go_left, left[cur], right[cur])


NUMBA_ENABLED = False
if _want_numba:
    try:
        from numba import njit

        logrank_best_split_numba = njit(cache=True)(_logrank_best_split_impl)
        traverse_tree_numba = njit(cache=True)(_traverse_tree_impl)
        NUMBA_ENABLED = True
    except ImportError:
        pass

if NUMBA_ENABLED:
    logrank_best_split = logrank_best_split_numba
    traverse_tree = traverse_tree_numba
else:
    logrank_best_split = logrank_best_split_numpy
    traverse_tree = traverse_tree_numpy
