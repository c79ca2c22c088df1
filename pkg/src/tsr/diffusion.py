"""Locally constrained diffusion of affinities on the gallery graph."""

from __future__ import annotations

import warnings

import numpy as np

from .errors import SubsetTooSmall, ZeroBandwidth


def affinity_from_distance(dist, kernel_k: int = 7) -> np.ndarray:
    """A_ij = exp(-d_ij^2 / (sigma_i sigma_j)), sigma_i the k-th neighbour distance."""
    d = np.asarray(dist, dtype=float)
    N = d.shape[0]
    if N == 1:
        return np.ones((1, 1))
    others = np.sort(d[~np.eye(N, dtype=bool)].reshape(N, N - 1), axis=1)
    sigma = others[:, min(kernel_k, N - 1) - 1].copy()
    zero = np.flatnonzero(sigma <= 0)
    if len(zero):
        warnings.warn(f"{len(zero)} shape(s) have {kernel_k} zero-distance neighbours; "
                      "using their smallest positive distance", ZeroBandwidth, stacklevel=2)
        for i in zero:
            pos = others[i][others[i] > 0]
            sigma[i] = pos[0] if len(pos) else 1.0
    A = np.exp(-(d**2) / np.outer(sigma, sigma))
    np.fill_diagonal(A, 1.0)
    return A


def knn_mask(A: np.ndarray, knn_w: int) -> np.ndarray:
    """Each row keeps its ``knn_w`` largest affinities (self included; ties by index)."""
    N = A.shape[0]
    k = max(1, min(knn_w, N))
    mask = np.zeros_like(A, dtype=bool)
    idx = np.arange(N)
    for i in range(N):
        row = A[i].copy()
        row[i] = np.inf  # self always kept
        order = np.lexsort((idx, -row))[:k]
        mask[i, order] = True
    return mask


def transition(A: np.ndarray, knn_w: int = 10) -> np.ndarray:
    P = np.where(knn_mask(A, knn_w), A, 0.0)
    s = P.sum(axis=1, keepdims=True)
    return P / np.where(s > 0, s, 1.0)


def lcdp(A, knn_w: int = 10, iters: int = 20) -> np.ndarray:
    """Iterate W <- P W P^T from W = A with a kNN-masked row-stochastic P.

    Each iterate is re-symmetrized as (W + W^T) / 2, which only removes
    floating point asymmetry. Graphs with at most ``knn_w`` nodes use a
    locality of N - 1.
    """
    A = np.asarray(A, dtype=float)
    W = A.copy()
    if iters <= 0:
        return W
    if A.shape[0] < knn_w + 1:
        knn_w = max(1, A.shape[0] - 1)
    P = transition(A, knn_w)
    for _ in range(iters):
        W = P @ W @ P.T
        W = 0.5 * (W + W.T)
    return W


def constrained_lcdp(A, subset, knn_w: int = 10, iters: int = 20, warn: bool = True) -> np.ndarray:
    """Diffuse on the submatrix of ``A`` indexed by ``subset`` (order kept)."""
    idx = np.asarray(subset, dtype=np.int64)
    sub = np.asarray(A, dtype=float)[np.ix_(idx, idx)]
    if len(idx) < knn_w + 1 and warn:
        warnings.warn(f"subset of {len(idx)} shapes; locality shrunk to {max(1, len(idx) - 1)}",
                      SubsetTooSmall, stacklevel=2)
    return lcdp(sub, knn_w, iters)
