"""Spectral clustering of the gallery in the local feature space.

Affinities use per-point local scaling, the embedding is the top-M
eigenvectors of D^-1/2 A D^-1/2 with unit-normalized rows, and the rows are
grouped by k-means++ (many restarts under one master seed). Each cluster's
medoid and its nearest half of members form the forest training set.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EigenFailure, InvalidM


@dataclass
class ClusterModel:
    M: int
    assignment: np.ndarray  # (N,) cluster id per shape
    medoids: np.ndarray  # (M,) shape index per cluster
    training_idx: np.ndarray  # shape indices of the core members
    training_labels: np.ndarray  # their cluster ids

    @property
    def sizes(self) -> np.ndarray:
        return np.bincount(self.assignment, minlength=self.M)

    def members(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.assignment == k)

    def __eq__(self, other):
        return isinstance(other, ClusterModel) and self.M == other.M and all(
            np.array_equal(getattr(self, f), getattr(other, f))
            for f in ("assignment", "medoids", "training_idx", "training_labels"))


def local_scale(dist: np.ndarray, k: int = 7) -> np.ndarray:
    """Distance from each point to its k-th nearest other point.

    Falls back to the farthest point when fewer than k others exist, and to
    the smallest positive distance when the k-th one is zero.
    """
    d = np.asarray(dist, dtype=float)
    N = d.shape[0]
    if N == 1:
        return np.ones(1)
    others = np.sort(d[~np.eye(N, dtype=bool)].reshape(N, N - 1), axis=1)
    sigma = others[:, min(k, N - 1) - 1].copy()
    for i in np.flatnonzero(sigma <= 0):
        pos = others[i][others[i] > 0]
        sigma[i] = pos[0] if len(pos) else 1.0
    return sigma


def spectral_embedding(dist: np.ndarray, M: int, k: int = 7) -> np.ndarray:
    d = np.asarray(dist, dtype=float)
    sigma = local_scale(d, k)
    A = np.exp(-(d**2) / np.outer(sigma, sigma))
    np.fill_diagonal(A, 0.0)
    deg = A.sum(axis=1)
    inv = 1.0 / np.sqrt(np.where(deg > 0, deg, 1.0))
    L = A * inv[:, None] * inv[None, :]
    try:
        vals, vecs = np.linalg.eigh(L)
    except np.linalg.LinAlgError as e:
        raise EigenFailure(str(e)) from e
    X = vecs[:, ::-1][:, :M]
    # fix each eigenvector's sign so the embedding is reproducible
    pivot = np.argmax(np.abs(X), axis=0)
    X = X * np.sign(X[pivot, np.arange(X.shape[1])])
    norms = np.linalg.norm(X, axis=1, keepdims=True)
    return X / np.where(norms > 0, norms, 1.0)


def _kmeans_pp_init(X, M, rng):
    N = len(X)
    centers = [int(rng.integers(N))]
    d2 = ((X - X[centers[0]]) ** 2).sum(axis=1)
    for _ in range(1, M):
        total = d2.sum()
        if total <= 0:
            c = int(rng.integers(N))
        else:
            c = int(np.searchsorted(np.cumsum(d2), rng.random() * total, side="right"))
            c = min(c, N - 1)
        centers.append(c)
        d2 = np.minimum(d2, ((X - X[c]) ** 2).sum(axis=1))
    return X[centers].copy()


def _lloyd(X, C, max_iter=300):
    M = len(C)
    labels = None
    for _ in range(max_iter):
        d2 = ((X[:, None, :] - C[None, :, :]) ** 2).sum(axis=2)
        new = np.argmin(d2, axis=1)
        # re-seed empty clusters with the point farthest from its center
        for k in range(M):
            if not np.any(new == k):
                far = int(np.argmax(d2[np.arange(len(X)), new]))
                new[far] = k
                d2[far] = 0.0
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        C = np.array([X[labels == k].mean(axis=0) for k in range(M)])
    inertia = float(((X - C[labels]) ** 2).sum())
    return labels, inertia


def kmeans(X: np.ndarray, M: int, seed: int = 0, restarts: int = 50) -> np.ndarray:
    """Best-of-``restarts`` k-means++ labels; ties go to the earliest restart."""
    best, best_inertia = None, np.inf
    for child in np.random.SeedSequence(seed).spawn(restarts):
        rng = np.random.default_rng(child)
        labels, inertia = _lloyd(X, _kmeans_pp_init(X, M, rng))
        if inertia < best_inertia - 1e-12:
            best, best_inertia = labels, inertia
    return best


def canonical_labels(labels: np.ndarray) -> np.ndarray:
    """Renumber clusters by their lowest member index."""
    order = {}
    for lab in labels:
        order.setdefault(int(lab), len(order))
    return np.array([order[int(lab)] for lab in labels], dtype=np.int64)


def medoids(dist: np.ndarray, assignment: np.ndarray, M: int) -> np.ndarray:
    out = np.empty(M, dtype=np.int64)
    for k in range(M):
        idx = np.flatnonzero(assignment == k)
        cost = dist[np.ix_(idx, idx)].sum(axis=1)
        out[k] = idx[int(np.argmin(cost))]
    return out


def select_training(model: ClusterModel, dist: np.ndarray):
    """The ceil(|c|/2) members nearest each medoid, ties by shape index."""
    idx_out, lab_out = [], []
    for k in range(model.M):
        idx = model.members(k)
        d = dist[model.medoids[k], idx]
        order = np.lexsort((idx, d))
        keep = idx[order[: (len(idx) + 1) // 2]]
        idx_out.append(np.sort(keep))
        lab_out.append(np.full(len(keep), k, dtype=np.int64))
    return np.concatenate(idx_out), np.concatenate(lab_out)


def spectral_cluster(dist: np.ndarray, M: int, seed: int = 0, k: int = 7,
                     restarts: int = 50) -> ClusterModel:
    d = np.asarray(dist, dtype=float)
    N = d.shape[0]
    if not (1 <= M <= N):
        raise InvalidM(f"M={M} must lie in [1, {N}]")
    if M == 1:
        assignment = np.zeros(N, dtype=np.int64)
    elif M == N:
        assignment = np.arange(N, dtype=np.int64)
    else:
        X = spectral_embedding(d, M, k)
        assignment = canonical_labels(kmeans(X, M, seed, restarts))
    model = ClusterModel(M=M, assignment=assignment, medoids=medoids(d, assignment, M),
                         training_idx=np.empty(0, np.int64), training_labels=np.empty(0, np.int64))
    model.training_idx, model.training_labels = select_training(model, d)
    return model
