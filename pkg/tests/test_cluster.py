import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.metrics import adjusted_rand_score

from tsr.cluster import canonical_labels, kmeans, local_scale, spectral_cluster, spectral_embedding
from tsr.errors import InvalidM
from tsr.synthetic import planted_distances


@pytest.mark.parametrize("sizes", [(10, 10, 10), (5, 12, 8), (20, 7, 15, 9)])
def test_planted_partition_recovered(sizes):
    d, truth = planted_distances(sizes, gap=5.0, seed=1)
    m = spectral_cluster(d, len(sizes), seed=0)
    assert adjusted_rand_score(truth, m.assignment) == 1.0


def test_model_invariants():
    d, _ = planted_distances((9, 6, 11), seed=4)
    m = spectral_cluster(d, 3, seed=2)
    assert m.sizes.sum() == len(d)
    for k in range(3):
        members = m.members(k)
        assert m.medoids[k] in members
        # medoid minimizes summed in-cluster distance
        cost = d[np.ix_(members, members)].sum(axis=1)
        assert d[m.medoids[k], members].sum() == cost.min()
        train = m.training_idx[m.training_labels == k]
        assert len(train) == (len(members) + 1) // 2
        assert set(train) <= set(members)
        # training members are the closest to the medoid
        rest = np.setdiff1d(members, train)
        if len(rest):
            assert d[m.medoids[k], train].max() <= d[m.medoids[k], rest].min()
    # canonical numbering: cluster ids first appear in ascending order
    first = [int(np.flatnonzero(m.assignment == k)[0]) for k in range(3)]
    assert first == sorted(first)


def test_determinism_and_seed_independence_on_clear_data():
    d, _ = planted_distances((8, 8, 8), seed=0)
    assert spectral_cluster(d, 3, seed=5) == spectral_cluster(d, 3, seed=5)
    assert np.array_equal(spectral_cluster(d, 3, seed=1).assignment,
                          spectral_cluster(d, 3, seed=9).assignment)


def test_edge_M():
    d, _ = planted_distances((3, 3), seed=0)
    assert np.all(spectral_cluster(d, 1).assignment == 0)
    assert np.array_equal(spectral_cluster(d, 6).assignment, np.arange(6))
    for M in (0, 7):
        with pytest.raises(InvalidM):
            spectral_cluster(d, M)


def test_local_scale_handles_duplicates():
    d = np.array([[0, 0, 2.0], [0, 0, 3.0], [2, 3, 0.0]])
    assert np.all(local_scale(d, 1) > 0)


def test_embedding_rows_unit():
    d, _ = planted_distances((5, 5), seed=2)
    X = spectral_embedding(d, 2)
    assert np.allclose(np.linalg.norm(X, axis=1), 1.0)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(0, 5), min_size=1, max_size=30))
def test_canonical_labels_property(labels):
    c = canonical_labels(np.array(labels))
    # same partition, first occurrences numbered 0, 1, 2, ...
    assert adjusted_rand_score(labels, c) == pytest.approx(1.0) or len(set(labels)) == 1
    firsts = [c[labels.index(v)] for v in dict.fromkeys(labels)]
    assert firsts == list(range(len(firsts)))


def test_kmeans_separated_blobs():
    rng = np.random.default_rng(0)
    X = np.vstack([rng.normal(c, 0.05, (15, 2)) for c in ([0, 0], [3, 0], [0, 3])])
    lab = kmeans(X, 3, seed=0, restarts=5)
    assert adjusted_rand_score(np.repeat([0, 1, 2], 15), lab) == 1.0
