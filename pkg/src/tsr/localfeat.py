"""Inner-distance shape context (IDSC) descriptors and their matching distance.

Contour samples are joined by a visibility graph (straight segments that stay
inside the silhouette); shortest paths on that graph give inner distances,
and the first hop of each path gives the inner angle relative to the contour
tangent. Each sample gets a log-distance x angle histogram.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np
from scipy import ndimage
from scipy.sparse.csgraph import shortest_path

from .errors import DimensionMismatch, DisconnectedInterior, TooFewContourPixels
from .preprocess import Contour


@dataclass
class ContourSamples:
    points: np.ndarray  # (n, 2) float (x, y) = (col, row), counter-clockwise

    def __len__(self):
        return len(self.points)


@dataclass
class LocalDescriptor:
    histograms: np.ndarray  # (n, n_d * n_a)
    n_d: int = 8
    n_a: int = 12

    @property
    def n(self) -> int:
        return self.histograms.shape[0]


def _start_index(points: np.ndarray) -> int:
    # topmost (smallest row), then leftmost
    return int(np.lexsort((points[:, 0], points[:, 1]))[0])


def sample_contour(contour: Contour | np.ndarray, n: int = 100) -> ContourSamples:
    """``n`` points equally spaced in arc length, starting top-left."""
    pts = np.asarray(getattr(contour, "points", contour), dtype=float)
    if len(pts) < n:
        raise TooFewContourPixels(f"contour has {len(pts)} points, need {n}")
    pts = np.roll(pts, -_start_index(pts), axis=0)
    if len(pts) == n:
        return ContourSamples(points=pts.copy())
    closed = np.vstack([pts, pts[:1]])
    seg = np.hypot(*np.diff(closed, axis=0).T)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    t = np.arange(n) * (cum[-1] / n)
    out = np.column_stack([np.interp(t, cum, closed[:, 0]), np.interp(t, cum, closed[:, 1])])
    return ContourSamples(points=out)


@numba.njit(cache=True)
def _visibility(xs, ys, mask, step, skip):
    """Pairwise segment visibility by sampling every ``step`` pixels.

    Samples within ``skip`` of either endpoint are not tested, since contour
    points themselves sit on the boundary.
    """
    n = len(xs)
    h, w = mask.shape
    vis = np.zeros((n, n), dtype=np.bool_)
    for i in range(n):
        vis[i, i] = True
        for j in range(i + 1, n):
            dx = xs[j] - xs[i]
            dy = ys[j] - ys[i]
            length = np.sqrt(dx * dx + dy * dy)
            ok = True
            m = int(length / step)
            for k in range(1, m + 1):
                t = k * step
                if t < skip or length - t < skip:
                    continue
                c = int(np.floor(xs[i] + dx * t / length + 0.5))
                r = int(np.floor(ys[i] + dy * t / length + 0.5))
                if r < 0 or r >= h or c < 0 or c >= w or not mask[r, c]:
                    ok = False
                    break
            vis[i, j] = ok
            vis[j, i] = ok
    return vis


def visibility_graph(grid: np.ndarray, pts: np.ndarray, step: float = 0.5,
                     skip: float = 1.0) -> np.ndarray:
    """Boolean n x n visibility; the mask is grown by one pixel to tolerate
    samples that smoothing pushed just outside the raster boundary."""
    mask = ndimage.binary_dilation(np.asarray(grid, dtype=bool),
                                   structure=np.ones((3, 3), dtype=bool))
    pts = np.asarray(pts, dtype=float)
    vis = _visibility(np.ascontiguousarray(pts[:, 0]), np.ascontiguousarray(pts[:, 1]),
                      mask, step, skip)
    # consecutive samples are always linked along the contour
    n = len(pts)
    idx = np.arange(n)
    vis[idx, (idx + 1) % n] = vis[(idx + 1) % n, idx] = True
    return vis


def _tangents(pts: np.ndarray) -> np.ndarray:
    t = np.roll(pts, -1, axis=0) - np.roll(pts, 1, axis=0)
    return np.arctan2(t[:, 1], t[:, 0])


def inner_distances(shape, pts: ContourSamples | np.ndarray, step: float = 0.5):
    """(distances, angles), both n x n.

    ``angles[p, q]`` is the direction of the first edge of the shortest path
    p -> q measured from the contour tangent at p, in [0, 2pi).
    """
    grid = shape.grid if hasattr(shape, "grid") else np.asarray(shape, dtype=bool)
    P = np.asarray(getattr(pts, "points", pts), dtype=float)
    n = len(P)
    vis = visibility_graph(grid, P, step)
    diff = P[:, None, :] - P[None, :, :]
    euclid = np.hypot(diff[..., 0], diff[..., 1])
    weights = np.where(vis, euclid, 0.0)
    dist, pred = shortest_path(weights, method="D", directed=False, return_predecessors=True)
    if not np.all(np.isfinite(dist)):
        raise DisconnectedInterior("visibility graph is disconnected")
    # first hop from p towards q is the predecessor of p on the path from q
    first = pred.T.copy()
    idx = np.arange(n)
    first[idx, idx] = idx
    hop = P[first] - P[:, None, :]
    direction = np.arctan2(hop[..., 1], hop[..., 0])
    angles = np.mod(direction - _tangents(P)[:, None], 2 * np.pi)
    angles[idx, idx] = 0.0
    return dist, angles


def euclidean_context(pts: ContourSamples | np.ndarray):
    """Plain shape-context geometry: Euclidean distances and tangent-relative angles."""
    P = np.asarray(getattr(pts, "points", pts), dtype=float)
    diff = P[None, :, :] - P[:, None, :]
    dist = np.hypot(diff[..., 0], diff[..., 1])
    angles = np.mod(np.arctan2(diff[..., 1], diff[..., 0]) - _tangents(P)[:, None], 2 * np.pi)
    np.fill_diagonal(angles, 0.0)
    return dist, angles


def histograms(dist: np.ndarray, angles: np.ndarray, n_d: int = 8, n_a: int = 12,
               r_inner: float = 0.125, r_outer: float = 2.0) -> np.ndarray:
    """Log-distance x angle histograms, one L1-normalized row per point.

    Distances are divided by their mean over all ordered pairs and binned on
    log-spaced edges between ``r_inner`` and ``r_outer``; values beyond the
    range fall into the end bins.
    """
    n = dist.shape[0]
    off = ~np.eye(n, dtype=bool)
    mean = dist[off].mean() if n > 1 else 1.0
    r = dist / (mean if mean > 0 else 1.0)
    edges = np.logspace(np.log10(r_inner), np.log10(r_outer), n_d + 1)
    db = np.clip(np.searchsorted(edges, r, side="right") - 1, 0, n_d - 1)
    ab = np.minimum((angles / (2 * np.pi) * n_a).astype(np.int64), n_a - 1)
    out = np.zeros((n, n_d * n_a))
    rows = np.broadcast_to(np.arange(n)[:, None], (n, n))
    np.add.at(out, (rows[off], (db * n_a + ab)[off]), 1.0)
    s = out.sum(axis=1, keepdims=True)
    return out / np.where(s > 0, s, 1.0)


def idsc_descriptor(shape, n: int = 100, n_d: int = 8, n_a: int = 12,
                    sigma: float = 2.0, inner: bool = True) -> LocalDescriptor:
    """IDSC of a normalized shape; ``inner=False`` gives the Euclidean shape context."""
    contour = shape.contour(sigma) if hasattr(shape, "contour") else None
    if contour is None:
        from .preprocess import extract_contour, smooth_contour

        contour = smooth_contour(extract_contour(shape), sigma)
    pts = sample_contour(contour, n)
    if inner:
        dist, ang = inner_distances(shape, pts)
    else:
        dist, ang = euclidean_context(pts)
    return LocalDescriptor(histograms(dist, ang, n_d, n_a), n_d, n_a)


# --------------------------------------------------------------------------
# matching


@numba.njit(cache=True)
def _chi2(a, b):
    n, k = a.shape
    m = b.shape[0]
    out = np.empty((n, m))
    for i in range(n):
        for j in range(m):
            s = 0.0
            for t in range(k):
                den = a[i, t] + b[j, t]
                if den > 0:
                    d = a[i, t] - b[j, t]
                    s += d * d / den
            out[i, j] = 0.5 * s
    return out


def chi2_costs(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise chi-squared histogram distances (each in [0, 1])."""
    return _chi2(np.ascontiguousarray(a, dtype=np.float64), np.ascontiguousarray(b, dtype=np.float64))


@numba.njit(cache=True)
def _dp_align(cost, shift, tau):
    """Order-preserving alignment of a (rows) to b cyclically shifted by ``shift``."""
    n, m = cost.shape
    D = np.empty((n + 1, m + 1))
    for i in range(n + 1):
        D[i, 0] = i * tau
    for j in range(m + 1):
        D[0, j] = j * tau
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            c = cost[i - 1, (j - 1 + shift) % m]
            best = D[i - 1, j - 1] + c
            if D[i - 1, j] + tau < best:
                best = D[i - 1, j] + tau
            if D[i, j - 1] + tau < best:
                best = D[i, j - 1] + tau
            D[i, j] = best
    return D[n, m]


@numba.njit(cache=True)
def _directed(cost, tau, n_shifts):
    m = cost.shape[1]
    best = np.inf
    for k in range(n_shifts):
        v = _dp_align(cost, (k * m) // n_shifts, tau)
        if v < best:
            best = v
    return best


def _hist(x):
    return x.histograms if isinstance(x, LocalDescriptor) else np.asarray(x, dtype=float)


def idsc_distance(a, b, tau: float = 0.3, n_shifts: int = 8) -> float:
    """Symmetrized DP matching cost between two descriptors."""
    ha, hb = _hist(a), _hist(b)
    if ha.shape != hb.shape:
        raise DimensionMismatch(f"descriptor shapes differ: {ha.shape} vs {hb.shape}")
    cost = chi2_costs(ha, hb)
    d_ab = _directed(cost, tau, n_shifts)
    d_ba = _directed(np.ascontiguousarray(cost.T), tau, n_shifts)
    return float(0.5 * (d_ab + d_ba))


def distance_matrix(descriptors, tau: float = 0.3, n_shifts: int = 8,
                    progress=None) -> np.ndarray:
    """Full symmetric N x N matrix of ``idsc_distance`` with a zero diagonal."""
    hs = [_hist(d) for d in descriptors]
    N = len(hs)
    out = np.zeros((N, N))
    for i in range(N):
        for j in range(i + 1, N):
            out[i, j] = out[j, i] = idsc_distance(hs[i], hs[j], tau, n_shifts)
        if progress is not None:
            progress(i + 1, N)
    return out


def query_distances(desc, gallery, tau: float = 0.3, n_shifts: int = 8) -> np.ndarray:
    """Distances from one descriptor to every gallery descriptor."""
    h = _hist(desc)
    return np.array([idsc_distance(h, _hist(g), tau, n_shifts) for g in gallery])
