"""Offline index building and online two-stage querying.

Stage I (irrelevant cluster filtering) keeps the clusters whose joint
global/local cost is below epsilon; Stage II ranks the surviving gallery
shapes by IDSC distance, optionally after diffusion on the survivors.
"""

from __future__ import annotations

import logging
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import diffusion, relevance
from .cluster import spectral_cluster
from .errors import DataError, IncompatibleIndex
from .forest import predict_prf, train_forest
from .globalfeat import FeatureScaling, raw_global_feature
from .index import BuildConfig, RetrievalIndex
from .localfeat import distance_matrix, idsc_descriptor, query_distances
from .preprocess import normalize
from .shapeio import BinaryShape, Gallery

log = logging.getLogger(__name__)

MODES = ("tsr", "tsr+dp", "local-only", "local+dp")
METHOD_TAGS = {"tsr": "ICF+IDSC", "tsr+dp": "ICF+IDSC+DP1", "local-only": "IDSC",
               "local+dp": "IDSC+DP1"}


@dataclass
class ShapeFeatures:
    id: str
    raw_global: np.ndarray
    descriptor: np.ndarray


def extract(shape: BinaryShape, config: BuildConfig) -> ShapeFeatures:
    """Normalize one shape and compute its raw global feature and IDSC."""
    norm = normalize(shape, R=config.R, margin=config.margin, sigma=config.sigma)
    raw = raw_global_feature(norm, config.prune_frac, config.turn_angle_deg, config.sigma,
                             config.turn_arm)
    desc = idsc_descriptor(norm, config.n_points, config.n_dist_bins, config.n_angle_bins,
                           config.sigma)
    return ShapeFeatures(shape.id, raw, desc.histograms)


def _extract_safe(args):
    shape, config = args
    try:
        return extract(shape, config), None
    except DataError as e:
        return None, f"{type(e).__name__}: {e}"


def extract_all(shapes, config: BuildConfig, workers: int = 1):
    """Per-shape extraction in input order; returns (features, failures)."""
    jobs = [(s, config) for s in shapes]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_extract_safe, jobs, chunksize=4))
    else:
        results = []
        for k, job in enumerate(jobs):
            results.append(_extract_safe(job))
            if (k + 1) % 50 == 0:
                log.info("features: %d/%d shapes", k + 1, len(jobs))
    feats, failures = [], []
    for shape, (f, err) in zip(shapes, results):
        if f is None:
            failures.append((shape.id, err))
        else:
            feats.append(f)
    return feats, failures


def assemble(raw_features, dist, config: BuildConfig, ids=None, labels=None,
             descriptors=None, scaling: FeatureScaling | None = None,
             failures=()) -> RetrievalIndex:
    """Steps 1-3 of the offline stage from precomputed features and distances.

    Clusters the distance matrix, trains the forest on each cluster's core
    members and fills the relevance table for every gallery shape.
    """
    raw = np.asarray(raw_features, dtype=float)
    dist = np.asarray(dist, dtype=float)
    N = raw.shape[0]
    if N == 0:
        raise DataError("cannot build an index from an empty gallery")
    config = config.resolved(N)
    scaling = scaling or FeatureScaling.fit(raw)
    X = scaling.apply(raw)
    clusters = spectral_cluster(dist, config.M, config.seed, config.kernel_k,
                                config.kmeans_restarts)
    forest = train_forest(X[clusters.training_idx], clusters.training_labels, config.M,
                          n_trees=config.n_trees, max_depth=config.max_depth,
                          min_leaf=config.min_leaf, seed=config.seed)
    prf = predict_prf(forest, X)
    ids = list(ids) if ids is not None else [f"s{i}" for i in range(N)]
    labels = list(labels) if labels is not None else [None] * N
    return RetrievalIndex(config=config, ids=ids, labels=labels, raw_features=raw,
                          scaling=scaling, descriptors=descriptors, dist=dist,
                          clusters=clusters, forest=forest, prf=prf, failures=list(failures))


def build_index(gallery: Gallery | list, config: BuildConfig | None = None, strict: bool = True,
                workers: int = 1) -> RetrievalIndex:
    """preprocess -> features -> distances -> clusters -> forest -> relevance table."""
    config = config or BuildConfig()
    shapes = list(gallery.shapes if isinstance(gallery, Gallery) else gallery)
    if not shapes:
        raise DataError("gallery is empty")
    feats, failures = extract_all(shapes, config, workers)
    if failures and strict:
        first = ", ".join(f"{i} ({e})" for i, e in failures[:3])
        raise DataError(f"{len(failures)} shape(s) failed feature extraction: {first}")
    for sid, err in failures:
        log.warning("skipped %s: %s", sid, err)
    kept = {f.id for f in feats}
    labels = [s.label for s in shapes if s.id in kept]
    descs = np.stack([f.descriptor for f in feats])
    log.info("distances: %d shapes", len(feats))
    dist = distance_matrix(descs, config.tau, config.n_shifts)
    return assemble(np.stack([f.raw_global for f in feats]), dist, config,
                    ids=[f.id for f in feats], labels=labels, descriptors=descs,
                    failures=failures)


# --------------------------------------------------------------------------
# querying


@dataclass
class QueryResult:
    query_id: str
    mode: str
    relevant: relevance.RelevantClusterSet | None
    p_rf: np.ndarray | None
    p_knn: np.ndarray | None
    ranking: np.ndarray  # gallery positions, included first then excluded
    scores: np.ndarray  # similarity per ranked entry (larger = more similar)
    n_included: int
    distances: np.ndarray  # raw local distances to every gallery shape

    @property
    def method(self) -> str:
        return METHOD_TAGS[self.mode]

    @property
    def fallback(self) -> bool:
        return bool(self.relevant is not None and self.relevant.fallback)

    def included(self) -> np.ndarray:
        return self.ranking[: self.n_included]


def _order(scores: np.ndarray, idx: np.ndarray) -> np.ndarray:
    """Sort ``idx`` by descending score, ties by ascending gallery position."""
    return idx[np.lexsort((idx, -scores))]


def _gallery_affinity(index: RetrievalIndex) -> np.ndarray:
    if "A" not in index._cache:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            index._cache["A"] = diffusion.affinity_from_distance(index.dist, index.config.kernel_k)
    return index._cache["A"]


def _diffused_scores(index: RetrievalIndex, dists: np.ndarray, self_pos: int | None,
                     subset: np.ndarray) -> np.ndarray:
    """Diffused similarity from the query to each shape of ``subset``."""
    cfg = index.config
    if self_pos is not None:
        A = _gallery_affinity(index)
        nodes = np.union1d(subset, [self_pos])
        q = int(np.searchsorted(nodes, self_pos))
    else:
        # out-of-sample query: append it as node N
        N = index.N
        d = np.zeros((N + 1, N + 1))
        d[:N, :N] = index.dist
        d[N, :N] = d[:N, N] = dists
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            A = diffusion.affinity_from_distance(d, cfg.kernel_k)
        nodes = np.append(subset, N)
        q = len(nodes) - 1
    if self_pos is not None and len(nodes) == index.N:
        if "W" not in index._cache:
            index._cache["W"] = diffusion.lcdp(A, cfg.knn_w, cfg.iters)
        W = index._cache["W"]
    else:
        W = diffusion.constrained_lcdp(A, nodes, cfg.knn_w, cfg.iters, warn=False)
    row = W[q]
    pos = {int(n): k for k, n in enumerate(nodes)}
    return np.array([row[pos[int(s)]] for s in subset])


def rank(index: RetrievalIndex, p_rf: np.ndarray | None, dists: np.ndarray, mode: str = "tsr",
         self_pos: int | None = None, query_id: str = "query",
         epsilon: float | None = None, K: int | None = None) -> QueryResult:
    """Two-stage ranking from a query's P_rf and its local distances."""
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; choose from {', '.join(MODES)}")
    cfg = index.config
    dists = np.asarray(dists, dtype=float)
    if dists.shape != (index.N,):
        raise IncompatibleIndex(f"expected {index.N} distances, got {dists.shape}")
    epsilon = cfg.epsilon if epsilon is None else epsilon
    K = cfg.K if K is None else K
    everyone = np.arange(index.N)
    rel = p_knn = None
    if mode.startswith("tsr"):
        p_knn = relevance.predict_pknn(dists, index.prf, K)
        rel = relevance.fallback(relevance.relevant_clusters(p_rf, p_knn, epsilon, cfg.prob_floor))
        keep = np.isin(index.clusters.assignment, rel.clusters)
        subset = everyone[keep]
    else:
        subset = everyone
    if mode.endswith("dp"):
        sim = _diffused_scores(index, dists, self_pos, subset)
    else:
        sim = -dists[subset]
    inc = _order(sim, subset)
    inc_scores = dict(zip(subset.tolist(), sim.tolist()))
    excluded = np.setdiff1d(everyone, subset)
    exc = _order(-dists[excluded], excluded)
    ranking = np.concatenate([inc, exc]).astype(np.int64)
    scores = np.concatenate([[inc_scores[int(i)] for i in inc], -dists[exc]])
    return QueryResult(query_id, mode, rel, p_rf, p_knn, ranking, scores, len(inc), dists)


def query_gallery(index: RetrievalIndex, pos: int, mode: str = "tsr", **kw) -> QueryResult:
    """Query with gallery shape ``pos`` itself (its stored features and row)."""
    return rank(index, index.prf[pos], index.dist[pos], mode, self_pos=pos,
                query_id=index.ids[pos], **kw)


def query(index: RetrievalIndex, shape: BinaryShape, mode: str = "tsr", **kw) -> QueryResult:
    """Query with an arbitrary shape (features extracted here)."""
    if index.descriptors is None:
        raise IncompatibleIndex("index has no stored descriptors; it cannot take image queries")
    cfg = index.config
    if index.descriptors.shape[1:] != (cfg.n_points, cfg.n_dist_bins * cfg.n_angle_bins):
        raise IncompatibleIndex("stored descriptors do not match the index configuration")
    f = extract(shape, cfg)
    x = index.scaling.apply(f.raw_global)
    p_rf = predict_prf(index.forest, x)
    dists = query_distances(f.descriptor, index.descriptors, cfg.tau, cfg.n_shifts)
    return rank(index, p_rf, dists, mode, query_id=shape.id, **kw)
