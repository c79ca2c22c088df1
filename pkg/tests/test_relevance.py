import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from tsr.errors import EmptyGallery
from tsr.relevance import (
    PROB_FLOOR,
    cost,
    default_k,
    fallback,
    nearest,
    predict_pknn,
    relevant_clusters,
    threshold,
)

probs = st.integers(2, 12).flatmap(
    lambda m: arrays(float, m, elements=st.floats(0, 1)).filter(lambda a: a.sum() > 0)
).map(lambda a: a / a.sum())


def test_default_k():
    assert default_k(1400, 112) == 19
    assert default_k(99, 15) == 10
    assert default_k(5, 10) == 1


def test_nearest_ties_by_index():
    assert nearest([3.0, 1.0, 1.0, 0.5], 3).tolist() == [3, 1, 2]


def test_pknn_is_mean_of_neighbour_rows():
    table = np.eye(3)[[0, 0, 1, 2, 2]]
    p = predict_pknn([0.1, 0.2, 0.3, 5, 6], table, 3)
    assert np.allclose(p, [2 / 3, 1 / 3, 0])
    with pytest.raises(EmptyGallery):
        predict_pknn([], np.zeros((0, 3)), 1)


@settings(max_examples=100, deadline=None)
@given(probs, st.data())
def test_cost_laws(p_rf, data):
    p_knn = data.draw(arrays(float, len(p_rf), elements=st.floats(0, 1)).filter(lambda a: a.sum() > 0))
    p_knn = p_knn / p_knn.sum()
    J = cost(p_rf, p_knn)
    assert np.all(J >= 0)
    assert np.all(J <= -2 * np.log(PROB_FLOOR) + 1e-12)
    assert np.array_equal(J == 0, (p_rf == 1) & (p_knn == 1))
    e1, e2 = sorted(data.draw(st.lists(st.floats(0, 30), min_size=2, max_size=2)))
    assert set(threshold(J, e1).clusters) <= set(threshold(J, e2).clusters)


def test_uniform_value():
    u = np.full(112, 1 / 112)
    assert cost(u, u)[0] == pytest.approx(2 * np.log(112), abs=1e-6)
    assert 2 * np.log(112) == pytest.approx(9.44, abs=0.005)


def test_fallback_picks_cheapest():
    rel = relevant_clusters([0.5, 0.5, 0], [0.2, 0.8, 0], epsilon=0.1)
    assert len(rel.clusters) == 0
    fb = fallback(rel)
    assert fb.fallback and fb.clusters.tolist() == [1]
    ok = relevant_clusters([1, 0], [1, 0])
    assert fallback(ok) is ok and 0 in ok and 1 not in ok
