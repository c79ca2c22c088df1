"""Random-forest ensemble over global-feature subsets.

Trees are plain CART (Gini, bootstrap, sqrt-of-mask candidate features)
stored as flat arrays so an ensemble round-trips through the index file.
Each tree casts one vote; votes of all trees of all groups are summed and
normalized into P_rf.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np

from .errors import DimensionMismatch, NonFiniteFeature, SingleClassTraining
from .globalfeat import GEOMETRIC_DIMS, SKELETON_DIMS, WAVELET_DIMS

N_FEATURES = 13


def default_groups(n_features: int = N_FEATURES) -> list[np.ndarray]:
    """All dimensions, then one mask per feature family."""
    dims = np.arange(n_features)
    return [dims, dims[SKELETON_DIMS], dims[WAVELET_DIMS], dims[GEOMETRIC_DIMS]]


@numba.njit(cache=True)
def _best_split(x, y, n_classes):
    """Lowest weighted Gini split of one feature column.

    Returns (weighted impurity sum, threshold); impurity is +inf when the
    column is constant. Thresholds are midpoints between distinct sorted
    values, scanned in ascending order, so ties keep the lower threshold.
    """
    order = np.argsort(x, kind="mergesort")
    xs = x[order]
    ys = y[order]
    n = len(xs)
    left = np.zeros(n_classes)
    right = np.zeros(n_classes)
    for i in range(n):
        right[ys[i]] += 1.0
    best = np.inf
    thr = 0.0
    for i in range(n - 1):
        left[ys[i]] += 1.0
        right[ys[i]] -= 1.0
        if xs[i + 1] <= xs[i]:
            continue
        nl = i + 1.0
        nr = n - nl
        gl = 1.0
        gr = 1.0
        for k in range(n_classes):
            gl -= (left[k] / nl) ** 2
            gr -= (right[k] / nr) ** 2
        score = nl * gl + nr * gr
        if score < best - 1e-12:
            best = score
            thr = 0.5 * (xs[i] + xs[i + 1])
    return best, thr


def _majority(y, n_classes):
    return int(np.argmax(np.bincount(y, minlength=n_classes)))


@dataclass
class DecisionTree:
    feature: np.ndarray  # -1 at leaves
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray  # leaf vote (cluster id), -1 at internal nodes

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def depth(self) -> int:
        best, stack = 0, [(0, 0)]
        while stack:
            node, d = stack.pop()
            best = max(best, d)
            if self.feature[node] >= 0:
                stack += [(self.left[node], d + 1), (self.right[node], d + 1)]
        return best

    def predict(self, X: np.ndarray) -> np.ndarray:
        return _tree_predict(self.feature, self.threshold, self.left, self.right, self.value,
                             np.ascontiguousarray(X, dtype=np.float64))


@numba.njit(cache=True)
def _tree_predict(feature, threshold, left, right, value, X):
    out = np.empty(X.shape[0], dtype=np.int64)
    for i in range(X.shape[0]):
        node = 0
        while feature[node] >= 0:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = value[node]
    return out


def build_tree(X, y, mask, n_classes, rng, max_depth=12, min_leaf=1) -> DecisionTree:
    """Grow one CART tree on (X, y) using only the columns in ``mask``."""
    mask = np.sort(np.asarray(mask, dtype=np.int64))
    n_cand = max(1, int(math.isqrt(len(mask))))
    feature, threshold, left, right, value = [], [], [], [], []

    def new_node():
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(-1)
        return len(feature) - 1

    root = new_node()
    stack = [(root, np.arange(len(y)), 0)]
    while stack:
        node, idx, depth = stack.pop()
        ys = y[idx]
        pure = np.all(ys == ys[0])
        split = None
        if not pure and depth < max_depth and len(idx) >= 2 * min_leaf:
            cand = np.sort(rng.choice(mask, size=min(n_cand, len(mask)), replace=False))
            best = np.inf
            for f in cand:
                score, thr = _best_split(X[idx, f], ys, n_classes)
                if score < best - 1e-12:
                    go_left = X[idx, f] <= thr
                    if min_leaf <= go_left.sum() <= len(idx) - min_leaf:
                        best, split = score, (int(f), float(thr), go_left)
        if split is None:
            value[node] = _majority(ys, n_classes)
            continue
        f, thr, go_left = split
        feature[node], threshold[node] = f, thr
        l, r = new_node(), new_node()
        left[node], right[node] = l, r
        # right pushed first so the left subtree is numbered first
        stack.append((r, idx[~go_left], depth + 1))
        stack.append((l, idx[go_left], depth + 1))
    return DecisionTree(np.array(feature, np.int64), np.array(threshold, np.float64),
                        np.array(left, np.int64), np.array(right, np.int64),
                        np.array(value, np.int64))


@dataclass
class ForestEnsemble:
    n_classes: int
    groups: list  # feature masks
    trees: list  # per group, list of DecisionTree
    seed: int = 0
    n_features: int = N_FEATURES
    _flat: tuple | None = field(default=None, repr=False, compare=False)

    @property
    def n_trees(self) -> int:
        return sum(len(t) for t in self.trees)

    def flat(self):
        """All trees concatenated: node arrays plus per-tree root offsets."""
        if self._flat is None:
            all_trees = [t for group in self.trees for t in group]
            offsets = np.cumsum([0] + [t.n_nodes for t in all_trees])
            shift = lambda a, o: np.where(a >= 0, a + o, -1)
            self._flat = (
                np.concatenate([t.feature for t in all_trees]),
                np.concatenate([t.threshold for t in all_trees]),
                np.concatenate([shift(t.left, o) for t, o in zip(all_trees, offsets)]),
                np.concatenate([shift(t.right, o) for t, o in zip(all_trees, offsets)]),
                np.concatenate([t.value for t in all_trees]),
                offsets[:-1].astype(np.int64),
            )
        return self._flat

    def votes(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.n_features:
            raise DimensionMismatch(f"expected {self.n_features} features, got {X.shape[1]}")
        f, t, l, r, v, roots = self.flat()
        return _votes(f, t, l, r, v, roots, np.ascontiguousarray(X), self.n_classes)

    def to_arrays(self) -> dict:
        f, t, l, r, v, roots = self.flat()
        sizes = np.array([len(g) for g in self.trees], np.int64)
        masks = np.zeros((len(self.groups), self.n_features), np.uint8)
        for k, g in enumerate(self.groups):
            masks[k, g] = 1
        return {"feature": f, "threshold": t, "left": l, "right": r, "value": v,
                "roots": roots, "group_sizes": sizes, "group_masks": masks,
                "meta": np.array([self.n_classes, self.seed, self.n_features], np.int64)}

    @classmethod
    def from_arrays(cls, a: dict) -> "ForestEnsemble":
        n_classes, seed, n_features = (int(x) for x in a["meta"])
        roots = list(a["roots"]) + [len(a["feature"])]
        trees, k = [], 0
        for size in a["group_sizes"]:
            group = []
            for _ in range(int(size)):
                lo, hi = roots[k], roots[k + 1]
                unshift = lambda x: np.where(x >= 0, x - lo, -1)
                group.append(DecisionTree(a["feature"][lo:hi].copy(), a["threshold"][lo:hi].copy(),
                                          unshift(a["left"][lo:hi]), unshift(a["right"][lo:hi]),
                                          a["value"][lo:hi].copy()))
                k += 1
            trees.append(group)
        groups = [np.flatnonzero(m) for m in a["group_masks"]]
        return cls(n_classes, groups, trees, seed, n_features)

    def __eq__(self, other):
        if not isinstance(other, ForestEnsemble):
            return False
        a, b = self.to_arrays(), other.to_arrays()
        return all(np.array_equal(a[k], b[k]) for k in a)


@numba.njit(cache=True)
def _votes(feature, threshold, left, right, value, roots, X, n_classes):
    out = np.zeros((X.shape[0], n_classes))
    for i in range(X.shape[0]):
        for root in roots:
            node = root
            while feature[node] >= 0:
                if X[i, feature[node]] <= threshold[node]:
                    node = left[node]
                else:
                    node = right[node]
            out[i, value[node]] += 1.0
    return out


def train_forest(X, y, n_classes: int | None = None, groups=None, n_trees: int = 100,
                 max_depth: int = 12, min_leaf: int = 1, seed: int = 0) -> ForestEnsemble:
    """Train one bootstrap forest per feature group.

    Tree (g, t) draws from its own substream of ``SeedSequence(seed)``, so
    results do not depend on training order.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if not np.all(np.isfinite(X)):
        raise NonFiniteFeature("training features contain NaN or inf")
    if len(np.unique(y)) < 2:
        raise SingleClassTraining("forest training needs at least two cluster labels")
    n_classes = int(n_classes if n_classes is not None else y.max() + 1)
    groups = default_groups(X.shape[1]) if groups is None else [np.asarray(g) for g in groups]
    streams = np.random.SeedSequence(seed).spawn(len(groups) * n_trees)
    trees = []
    for g, mask in enumerate(groups):
        group = []
        for t in range(n_trees):
            rng = np.random.default_rng(streams[g * n_trees + t])
            boot = rng.integers(0, len(y), size=len(y))
            group.append(build_tree(X[boot], y[boot], mask, n_classes, rng, max_depth, min_leaf))
        trees.append(group)
    return ForestEnsemble(n_classes, groups, trees, seed, X.shape[1])


def predict_prf(ensemble: ForestEnsemble, x) -> np.ndarray:
    """Normalized vote counts (sum rule over every tree of every group).

    Accepts one feature vector or a matrix of them.
    """
    X = np.asarray(x, dtype=np.float64)
    v = ensemble.votes(X)
    p = v / v.sum(axis=1, keepdims=True)
    return p[0] if X.ndim == 1 else p


def normalize_votes(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    return v / v.sum()
