"""Random survival forest: bootstrap trees, log-rank splits, Nelson-Aalen leaves.

The ensemble curve is the average of per-tree leaf survival curves
exp(-leaf cumulative hazard). Bootstrap draws are keyed by (seed, tree
index) against the id-sorted record order, so predictions do not depend on
the row order of the training set. Split search runs through the compiled
kernels in ``kernels`` (numba when available, numpy fallback otherwise).
"""

from __future__ import annotations

import math
import warnings

import numpy as np

from .errors import ValidationError
from .kernels import logrank_best_split, traverse_tree
from .learners import (
    FittedLearner,
    LearnerSpec,
    _covariate_columns,
    _flip_for_censoring,
    _restore_base,
)
from .seeds import substream

__all__ = ["FittedSurvivalForest", "fit_survival_forest"]


class _Tree:
    """Flat array representation of one fitted tree."""

    __slots__ = ("feature", "threshold", "left", "right",
                 "leaf_offset", "leaf_count", "leaf_times", "leaf_cumhaz")

    def __init__(self, feature, threshold, left, right,
                 leaf_offset, leaf_count, leaf_times, leaf_cumhaz):
        self.feature = np.asarray(feature, dtype=np.int64)
        self.threshold = np.asarray(threshold, dtype=np.float64)
        self.left = np.asarray(left, dtype=np.int64)
        self.right = np.asarray(right, dtype=np.int64)
        self.leaf_offset = np.asarray(leaf_offset, dtype=np.int64)
        self.leaf_count = np.asarray(leaf_count, dtype=np.int64)
        self.leaf_times = np.asarray(leaf_times, dtype=np.float64)
        self.leaf_cumhaz = np.asarray(leaf_cumhaz, dtype=np.float64)

    def to_dict(self):
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "leaf_offset": self.leaf_offset.tolist(),
            "leaf_count": self.leaf_count.tolist(),
            "leaf_times": self.leaf_times.tolist(),
            "leaf_cumhaz": self.leaf_cumhaz.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(d["feature"], d["threshold"], d["left"], d["right"],
                   d["leaf_offset"], d["leaf_count"],
                   d["leaf_times"], d["leaf_cumhaz"])


def _node_death_stats(t, e):
    death_times = np.unique(t[e == 1])
    if death_times.size == 0:
        return None
    bucket = (np.searchsorted(death_times, t, side="right") - 1).astype(np.int64)
    at_risk_counts = np.bincount(bucket[bucket >= 0], minlength=death_times.size)
    y_total = np.cumsum(at_risk_counts[::-1])[::-1].astype(np.float64)
    d_total = np.bincount(bucket[e == 1], minlength=death_times.size).astype(np.float64)
    return death_times, bucket, d_total, y_total


class _TreeBuilder:
    def __init__(self, x, t, e, mtry, min_leaf, max_depth, rng):
        self.x, self.t, self.e = x, t, e
        self.mtry, self.min_leaf, self.max_depth = mtry, min_leaf, max_depth
        self.rng = rng
        self.feature, self.threshold = [], []
        self.left, self.right = [], []
        self.leaf_offset, self.leaf_count = [], []
        self.leaf_times, self.leaf_cumhaz = [], []

    def _new_node(self):
        for arr, val in ((self.feature, -1), (self.threshold, np.nan),
                         (self.left, -1), (self.right, -1),
                         (self.leaf_offset, -1), (self.leaf_count, 0)):
            arr.append(val)
        return len(self.feature) - 1

    def _make_leaf(self, node, idx):
        stats = _node_death_stats(self.t[idx], self.e[idx])
        self.leaf_offset[node] = len(self.leaf_times)
        if stats is not None:
            death_times, _, d_total, y_total = stats
            self.leaf_count[node] = len(death_times)
            self.leaf_times.extend(death_times.tolist())
            self.leaf_cumhaz.extend(np.cumsum(d_total / y_total).tolist())

    def _best_split(self, idx):
        stats = _node_death_stats(self.t[idx], self.e[idx])
        if stats is None:
            return None
        _, bucket, d_total, y_total = stats
        is_death = self.e[idx] == 1
        p = self.x.shape[1]
        feats = self.rng.permutation(p)[: self.mtry]
        best = None
        for f in feats:
            xf = np.ascontiguousarray(self.x[idx, f], dtype=np.float64)
            score, thr, _ = logrank_best_split(
                xf, bucket, is_death, d_total, y_total, self.min_leaf
            )
            if score > 0.0 and (best is None or score > best[0]):
                best = (float(score), int(f), float(thr))
        return best

    def build(self):
        n = len(self.t)
        root = self._new_node()
        stack = [(root, np.arange(n), 0)]
        while stack:
            node, idx, depth = stack.pop()
            if len(idx) < 2 * self.min_leaf or depth >= self.max_depth:
                self._make_leaf(node, idx)
                continue
            best = self._best_split(idx)
            if best is None:
                self._make_leaf(node, idx)
                continue
            _, f, thr = best
            go_left = self.x[idx, f] <= thr
            self.feature[node] = f
            self.threshold[node] = thr
            left_child = self._new_node()
            right_child = self._new_node()
            self.left[node] = left_child
            self.right[node] = right_child
            # Right first so the left child is processed next (LIFO):
            # fully deterministic construction order.
            stack.append((right_child, idx[~go_left], depth + 1))
            stack.append((left_child, idx[go_left], depth + 1))
        return _Tree(self.feature, self.threshold, self.left, self.right,
                     self.leaf_offset, self.leaf_count,
                     self.leaf_times, self.leaf_cumhaz)


class FittedSurvivalForest(FittedLearner):
    def __init__(self, spec, trees, columns, **kw):
        super().__init__(spec, **kw)
        self.trees = list(trees)
        self.columns = list(columns)

    def _survival(self, x, t):
        xs = np.ascontiguousarray(x[:, self.columns], dtype=np.float64)
        acc = np.zeros((x.shape[0], len(t)))
        for tree in self.trees:
            leaves = traverse_tree(tree.feature, tree.threshold,
                                   tree.left, tree.right, xs)
            for leaf in np.unique(leaves):
                off = tree.leaf_offset[leaf]
                cnt = tree.leaf_count[leaf]
                seg_t = tree.leaf_times[off:off + cnt]
                seg_ch = tree.leaf_cumhaz[off:off + cnt]
                pos = np.searchsorted(seg_t, t, side="right")
                ch = np.concatenate([[0.0], seg_ch])[pos]
                acc[leaves == leaf] += np.exp(-ch)[None, :]
        return acc / len(self.trees)

    def _params_dict(self):
        return {
            "columns": self.columns,
            "trees": [tree.to_dict() for tree in self.trees],
        }

    @classmethod
    def _from_dict(cls, payload):
        p = payload["params"]
        trees = [_Tree.from_dict(d) for d in p["trees"]]
        return cls(trees=trees, columns=p["columns"],
                   **_restore_base(cls, payload))


def fit_survival_forest(spec: LearnerSpec, data, target: str) -> FittedSurvivalForest:
    train = data if target == "event" else _flip_for_censoring(data)
    hp = spec.hyperparameters
    cols = _covariate_columns(data.covariate_names, hp["covariates"])
    x_all = np.ascontiguousarray(data.covariates[:, cols], dtype=np.float64)
    p = x_all.shape[1]
    if all(np.ptp(x_all[:, j]) == 0 for j in range(p)):
        warnings.warn(
            "all covariates constant; forest degenerates to a marginal "
            "Nelson-Aalen estimate",
            RuntimeWarning,
            stacklevel=2,
        )

    n_trees = int(hp["n_trees"])
    mtry = int(hp["mtry"]) if hp["mtry"] is not None else math.ceil(math.sqrt(p))
    if mtry > p:
        raise ValidationError(f"mtry {mtry} exceeds covariate count {p}")
    min_leaf = int(hp["min_node_size"])
    max_depth = float("inf") if hp["max_depth"] is None else int(hp["max_depth"])
    seed = int(hp["seed"])
    bootstrap = bool(hp["bootstrap"])

    # Canonical id-sorted order makes the bootstrap independent of row order.
    canon = np.array(sorted(range(len(data)), key=lambda i: data.ids[i]),
                     dtype=np.int64)
    n = len(data)
    trees = []
    for k in range(n_trees):
        rng = substream(seed, "forest-tree", str(k))
        rows = canon[rng.integers(0, n, size=n)] if bootstrap else canon
        builder = _TreeBuilder(
            x=x_all[rows], t=train.time[rows], e=train.event[rows],
            mtry=mtry, min_leaf=min_leaf, max_depth=max_depth, rng=rng,
        )
        trees.append(builder.build())

    return FittedSurvivalForest(
        spec, trees, cols,
        target=target, support_end=float(data.time.max()),
        train_n=n, train_events=data.n_events,
    )
