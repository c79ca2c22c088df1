"""Stage-I decision: indirect cluster assignment, joint cost, thresholding."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyGallery

PROB_FLOOR = 1e-6


def default_k(N: int, M: int) -> int:
    """1.5 times the average cluster size, at least 1 and at most N."""
    return int(min(N, max(1, round(1.5 * N / M))))


def nearest(dists, K: int) -> np.ndarray:
    """Indices of the K smallest distances, ties by index."""
    d = np.asarray(dists, dtype=float)
    return np.lexsort((np.arange(len(d)), d))[:K]


def predict_pknn(dists, prf_table, K: int) -> np.ndarray:
    """Average the P_rf rows of the query's K nearest gallery shapes.

    The sum over neighbours is divided by its own total, which equals K when
    every row is a distribution.
    """
    table = np.asarray(prf_table, dtype=float)
    if table.shape[0] == 0:
        raise EmptyGallery("no gallery shapes to take neighbours from")
    if K < 1:
        raise ValueError("K must be at least 1")
    nn = nearest(dists, min(K, table.shape[0]))
    s = table[nn].sum(axis=0)
    return s / s.sum()


def cost(p_rf, p_knn, floor: float = PROB_FLOOR) -> np.ndarray:
    """J = -ln max(P_knn, floor) - ln max(P_rf, floor), elementwise."""
    p_rf = np.maximum(np.asarray(p_rf, dtype=float), floor)
    p_knn = np.maximum(np.asarray(p_knn, dtype=float), floor)
    return -np.log(p_knn) - np.log(p_rf)


@dataclass
class RelevantClusterSet:
    clusters: np.ndarray  # accepted cluster ids, ascending
    J: np.ndarray  # cost of every cluster (length M)
    fallback: bool = False

    def __contains__(self, k):
        return int(k) in set(self.clusters.tolist())


def threshold(J, epsilon: float = 7.0) -> RelevantClusterSet:
    J = np.asarray(J, dtype=float)
    return RelevantClusterSet(np.flatnonzero(J < epsilon), J)


def fallback(rel: RelevantClusterSet) -> RelevantClusterSet:
    """Fail open to the single cheapest cluster when nothing passed."""
    if len(rel.clusters):
        return rel
    return RelevantClusterSet(np.array([int(np.argmin(rel.J))]), rel.J, fallback=True)


def relevant_clusters(p_rf, p_knn, epsilon: float = 7.0, floor: float = PROB_FLOOR) -> RelevantClusterSet:
    """Clusters whose joint cost is below ``epsilon`` (no fallback applied)."""
    return threshold(cost(p_rf, p_knn, floor), epsilon)
