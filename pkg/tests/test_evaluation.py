import numpy as np
import pytest

from tsr.errors import RankingTooShort
from tsr.evaluation import benchmark, bulls_eye, precision_recall, top_n_consistency

LABELS = ["a", "a", "b", "b"]


def test_perfect_rankings():
    r = [[0, 1, 2, 3], [1, 0, 3, 2], [2, 3, 0, 1], [3, 2, 1, 0]]
    assert bulls_eye(r, LABELS) == 100.0
    assert top_n_consistency(r, LABELS, 2).tolist() == [4, 0]
    rec, prec = precision_recall(r, LABELS)
    assert rec.tolist() == [0.5, 1.0] and prec.tolist() == [1.0, 1.0]


def test_hand_worked_example():
    r = [[0, 2, 1, 3]]
    assert bulls_eye(r, LABELS, queries=[0]) == 100.0  # top 2C = all four
    assert top_n_consistency(r, LABELS, 3, queries=[0]).tolist() == [0, 1, 0]
    rec, prec = precision_recall(r, LABELS, queries=[0])
    assert prec.tolist() == pytest.approx([1.0, 2 / 3])


def test_short_ranking_rejected():
    with pytest.raises(RankingTooShort):
        bulls_eye([[0, 1]], LABELS)


def test_benchmark_report(small_index, tmp_path):
    rep = benchmark(small_index, "tsr")
    assert rep.n_queries == small_index.N
    assert rep.topn_csv().splitlines()[0] == "N,count"
    assert len(rep.pr_csv().splitlines()) == 1 + 12
    assert "bulls_eye" in rep.summary() and rep.bullseye_csv().startswith("metric,value")
