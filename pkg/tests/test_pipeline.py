import numpy as np
import pytest
from sklearn.metrics import adjusted_rand_score

from tsr import synthetic as syn
from tsr.errors import IncompatibleIndex
from tsr.evaluation import bulls_eye, top_n_consistency
from tsr.forest import predict_prf
from tsr.index import BuildConfig, RetrievalIndex, default_M
from tsr.pipeline import MODES, assemble, query, query_gallery, rank
from tsr.relevance import cost
from tsr.shapeio import BinaryShape, load_index, save_index


def test_build_recovers_classes(small_index):
    assert adjusted_rand_score(small_index.labels, small_index.clusters.assignment) > 0.9
    assert small_index.config.K == round(1.5 * 48 / 4)
    assert np.allclose(small_index.prf.sum(axis=1), 1.0)


@pytest.mark.parametrize("mode", MODES)
def test_every_mode_retrieves_classmates(small_index, mode):
    rankings = [query_gallery(small_index, q, mode).ranking for q in range(small_index.N)]
    for r in rankings:
        assert sorted(r.tolist()) == list(range(small_index.N))
    assert bulls_eye(rankings, small_index.labels) >= 90.0
    assert top_n_consistency(rankings, small_index.labels, 5)[0] >= 44


def test_ranking_layout(small_index):
    res = query_gallery(small_index, 0, "tsr")
    inc = res.included()
    assert np.all(np.isin(small_index.clusters.assignment[inc], res.relevant.clusters))
    exc = res.ranking[res.n_included:]
    assert np.all(np.diff(res.distances[exc]) >= 0)
    assert np.all(np.diff(res.scores[: res.n_included]) <= 0)
    assert res.method == "ICF+IDSC"


def test_external_query_matches_gallery_query(small_index, small_gallery):
    shape = small_gallery[5]
    ext = query(small_index, BinaryShape("ext", shape.grid), "tsr")
    own = query_gallery(small_index, 5, "tsr")
    assert np.allclose(ext.distances, own.distances)
    assert np.array_equal(ext.ranking, own.ranking)


def test_unknown_mode_and_bad_lengths(small_index):
    with pytest.raises(ValueError):
        query_gallery(small_index, 0, "nope")
    with pytest.raises(IncompatibleIndex):
        rank(small_index, small_index.prf[0], np.zeros(3), "tsr")


def test_index_roundtrip_is_exact(small_index, tmp_path):
    p = tmp_path / "a.idx"
    save_index(small_index, p)
    back = load_index(p)
    assert back == small_index
    save_index(back, tmp_path / "b.idx")
    assert p.read_bytes() == (tmp_path / "b.idx").read_bytes()
    for mode in MODES:
        assert np.array_equal(query_gallery(back, 3, mode).ranking,
                              query_gallery(small_index, 3, mode).ranking)


def test_incompatible_index_rejected(small_index):
    s = small_index.to_sections()
    s["dist"] = s["dist"][:-1]
    with pytest.raises(IncompatibleIndex):
        RetrievalIndex.from_sections(s)


def test_default_M():
    assert default_M(1400) == 112 and default_M(99) == 15 and default_M(1000) == 75
    assert default_M(50) == 4
    assert BuildConfig().resolved(99).K == 10


def test_confuser_cluster_is_filtered():
    """A locally close but globally different cluster stays out of the top C."""
    f = syn.confuser_fixture()
    idx = assemble(f["raw_features"], f["dist"], BuildConfig(M=4), labels=f["labels"])
    p_rf = predict_prf(idx.forest, idx.scaling.apply(f["query_feature"]))
    C = 10
    labels = np.array(idx.labels)
    local = rank(idx, p_rf, f["query_dists"], "local-only")
    tsr = rank(idx, p_rf, f["query_dists"], "tsr")
    conf_local = np.count_nonzero(labels[local.ranking[:C]] == "confuser")
    conf_tsr = np.count_nonzero(labels[tsr.ranking[:C]] == "confuser")
    assert conf_tsr < conf_local
    assert np.all(labels[tsr.ranking[:C]] == "true")
    assert np.all(cost(tsr.p_rf, tsr.p_knn) == tsr.relevant.J)


def test_determinism_of_full_build(small_gallery, tmp_path):
    from tsr.pipeline import build_index

    cfg = BuildConfig(M=4, n_trees=10)
    shapes = small_gallery[:24]
    a, b = build_index(shapes, cfg), build_index(shapes, cfg, workers=2)
    save_index(a, tmp_path / "a.idx")
    save_index(b, tmp_path / "b.idx")
    assert (tmp_path / "a.idx").read_bytes() == (tmp_path / "b.idx").read_bytes()


def test_lenient_build_skips_degenerate(small_gallery):
    from tsr.errors import DataError
    from tsr.pipeline import build_index

    tiny = np.zeros((4, 4), bool)
    tiny[1, 1] = True
    shapes = list(small_gallery[:12]) + [BinaryShape("tiny", tiny, "x")]
    with pytest.raises(DataError):
        build_index(shapes, BuildConfig(M=2, n_trees=5))
    idx = build_index(shapes, BuildConfig(M=2, n_trees=5), strict=False)
    assert idx.N == 12 and idx.failures[0][0] == "tiny"
