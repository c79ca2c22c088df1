import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tsr.errors import DimensionMismatch, NonFiniteFeature, SingleClassTraining
from tsr.forest import (
    ForestEnsemble,
    _best_split,
    build_tree,
    default_groups,
    predict_prf,
    train_forest,
)


def _data(seed=0, n=60):
    rng = np.random.default_rng(seed)
    X = rng.uniform(0, 1, (n, 13))
    y = (X[:, 7] > 0.5).astype(np.int64) + 2 * (X[:, 11] > 0.5)
    return X, y


def _gini_oracle(x, y, k):
    best = (np.inf, 0.0)
    vals = np.unique(x)
    for a, b in zip(vals[:-1], vals[1:]):
        t = 0.5 * (a + b)
        s = 0.0
        for side in (x <= t, x > t):
            p = np.bincount(y[side], minlength=k) / side.sum()
            s += side.sum() * (1 - (p**2).sum())
        if s < best[0] - 1e-12:
            best = (s, t)
    return best


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 6), st.integers(0, 2)), min_size=2, max_size=25))
def test_best_split_matches_bruteforce(rows):
    x = np.array([r[0] for r in rows], float)
    y = np.array([r[1] for r in rows], np.int64)
    got = _best_split(x, y, 3)
    want = _gini_oracle(x, y, 3)
    assert got[0] == pytest.approx(want[0]) or got[0] == want[0] == np.inf
    if np.isfinite(want[0]):
        assert got[1] == want[1]


def test_dominating_feature_is_used():
    """A single informative dimension should carry the whole-vector group."""
    rng = np.random.default_rng(1)
    X = rng.uniform(0, 1, (80, 13))
    y = (X[:, 9] > 0.5).astype(np.int64)
    f = train_forest(X, y, 2, n_trees=100, seed=0)
    # a root sees only ~sqrt(13) candidates; whenever 9 is among them it wins
    roots = np.bincount([t.feature[0] for t in f.trees[0]], minlength=13)
    assert int(np.argmax(roots)) == 9
    test = rng.uniform(0, 1, (200, 13))
    acc = np.mean(np.argmax(predict_prf(f, test), axis=1) == (test[:, 9] > 0.5))
    assert acc > 0.9


def test_tree_fits_training_data():
    X, y = _data()
    rng = np.random.default_rng(0)
    t = build_tree(X, y, np.arange(13), 4, rng, max_depth=30)
    assert np.array_equal(t.predict(X), y)
    assert t.depth() <= 30


def test_max_depth_respected():
    X, y = _data()
    t = build_tree(X, y, np.arange(13), 4, np.random.default_rng(0), max_depth=2)
    assert t.depth() <= 2


def test_prf_is_distribution_and_deterministic():
    X, y = _data()
    a = train_forest(X, y, 4, n_trees=20, seed=3)
    b = train_forest(X, y, 4, n_trees=20, seed=3)
    assert a == b
    P = predict_prf(a, X)
    assert np.allclose(P.sum(axis=1), 1.0, atol=1e-12)
    assert a.n_trees == 20 * len(default_groups())


def test_persistence_roundtrip():
    X, y = _data(2)
    f = train_forest(X, y, 4, n_trees=10, seed=1)
    g = ForestEnsemble.from_arrays(f.to_arrays())
    assert g == f
    assert np.array_equal(predict_prf(f, X), predict_prf(g, X))


def test_errors():
    X, y = _data()
    with pytest.raises(SingleClassTraining):
        train_forest(X, np.zeros(len(y), np.int64))
    bad = X.copy()
    bad[0, 0] = np.nan
    with pytest.raises(NonFiniteFeature):
        train_forest(bad, y)
    f = train_forest(X, y, 4, n_trees=2)
    with pytest.raises(DimensionMismatch):
        f.votes(np.zeros((1, 5)))
