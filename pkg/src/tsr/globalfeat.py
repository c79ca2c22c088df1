"""Global shape features: skeleton salient points, Haar-like responses, geometry.

The 13-D vector is laid out as::

    [0:4]   turning, end, T-junction, cross-junction counts
    [4:9]   five Haar-like responses
    [9:13]  aspect ratio, circularity, symmetry, solidity
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np
from skimage.morphology import skeletonize as thin_zhang
from scipy import ndimage
from scipy.spatial import ConvexHull

from .errors import DegenerateShape
from .preprocess import NormalizedShape, bbox_size, count_components, moore_trace

SKELETON_DIMS = slice(0, 4)
WAVELET_DIMS = slice(4, 9)
GEOMETRIC_DIMS = slice(9, 13)
FEATURE_NAMES = (
    "turning_pts", "end_pts", "t_junction_pts", "cross_junction_pts",
    "haar_lr", "haar_tb", "haar_3band_v", "haar_3band_h", "haar_checker",
    "aspect_ratio", "circularity", "symmetry", "solidity",
)

# neighbour offsets P2..P9: N, NE, E, SE, S, SW, W, NW
_DR = np.array([-1, -1, 0, 1, 1, 1, 0, -1])
_DC = np.array([0, 1, 1, 1, 0, -1, -1, -1])


@numba.njit(cache=True)
def _ring(g, r, c, out):
    for k in range(8):
        out[k] = g[r + _DR[k], c + _DC[k]]


@numba.njit(cache=True)
def _yokoi8(ring):
    # 8-connectivity number over the orthogonal positions N, E, S, W
    n = 0
    for k in range(0, 8, 2):
        x0 = 1 - ring[k]
        x1 = 1 - ring[(k + 1) % 8]
        x2 = 1 - ring[(k + 2) % 8]
        n += x0 - x0 * x1 * x2
    return n


@numba.njit(cache=True)
def _remove_redundant(g):
    """Delete simple non-end pixels (staircase corners) until stable."""
    h, w = g.shape
    ring = np.zeros(8, dtype=np.uint8)
    changed = True
    while changed:
        changed = False
        for r in range(1, h - 1):
            for c in range(1, w - 1):
                if not g[r, c]:
                    continue
                _ring(g, r, c, ring)
                b = 0
                for k in range(8):
                    b += ring[k]
                if b < 2:
                    continue
                orth_corner = False
                for k in range(0, 8, 2):
                    if ring[k] == 1 and ring[(k + 2) % 8] == 1:
                        orth_corner = True
                if orth_corner and _yokoi8(ring) == 1:
                    g[r, c] = 0
                    changed = True
    return g


@dataclass
class Skeleton:
    """One-pixel-wide skeleton stored as a boolean raster."""

    grid: np.ndarray

    @property
    def pixels(self) -> np.ndarray:
        return np.argwhere(self.grid)

    def __len__(self):
        return int(self.grid.sum())

    def __eq__(self, other):
        return isinstance(other, Skeleton) and np.array_equal(self.grid, other.grid)


def skeletonize(shape) -> Skeleton:
    """Zhang-Suen thinning followed by removal of staircase pixels."""
    grid = shape.grid if hasattr(shape, "grid") else np.asarray(shape, dtype=bool)
    if not grid.any():
        raise DegenerateShape("empty shape has no skeleton")
    g = np.pad(thin_zhang(grid, method="zhang"), 2).astype(np.uint8)
    _remove_redundant(g)
    out = g[2:-2, 2:-2].astype(bool)
    if not out.any():
        # Zhang-Suen erases 2x2 blocks entirely; keep the pixel nearest the centroid
        rc = np.argwhere(grid)
        k = int(np.argmin(((rc - rc.mean(axis=0)) ** 2).sum(axis=1)))
        out[tuple(rc[k])] = True
    return Skeleton(grid=out)


# --------------------------------------------------------------------------
# skeleton graph


class _Graph:
    """Reduced 8-adjacency over skeleton pixels.

    A diagonal link is dropped when the two pixels share an orthogonal
    neighbour in the skeleton, so staircase remnants do not fake junctions.
    """

    def __init__(self, grid: np.ndarray):
        self.grid = grid
        pix = np.argwhere(grid)
        self.pixels = [tuple(p) for p in pix]
        self.index = {p: i for i, p in enumerate(self.pixels)}
        h, w = grid.shape
        self.nbrs: list[list[int]] = []
        for r, c in self.pixels:
            out = []
            for dr, dc in zip(_DR, _DC):
                rr, cc = r + dr, c + dc
                if not (0 <= rr < h and 0 <= cc < w) or not grid[rr, cc]:
                    continue
                if dr != 0 and dc != 0 and (grid[r, cc] or grid[rr, c]):
                    continue
                out.append(self.index[(rr, cc)])
            self.nbrs.append(out)
        self.degree = np.array([len(n) for n in self.nbrs], dtype=np.int64)

    def walk(self, start: int, first: int) -> list[int]:
        """Follow degree-2 pixels from ``start`` through ``first`` to the next node."""
        path = [start, first]
        prev, cur = start, first
        while self.degree[cur] == 2:
            a, b = self.nbrs[cur]
            nxt = b if a == prev else a
            if nxt == start:
                path.append(nxt)
                break
            path.append(nxt)
            prev, cur = cur, nxt
        return path

    def branches(self) -> list[list[int]]:
        """Every maximal path whose interior pixels have degree 2."""
        nodes = [i for i in range(len(self.pixels)) if self.degree[i] != 2]
        seen = set()
        out = []
        for n in nodes:
            for m in self.nbrs[n]:
                if (n, m) in seen:
                    continue
                path = self.walk(n, m)
                seen.add((n, m))
                seen.add((path[-1], path[-2]))
                out.append(path)
        return out

    def path_length(self, path: list[int]) -> float:
        pts = np.array([self.pixels[i] for i in path], dtype=float)
        return float(np.hypot(*np.diff(pts, axis=0).T).sum())


def prune_skeleton(skel: Skeleton, min_branch_frac: float = 0.05, R: int | None = None) -> Skeleton:
    """Remove short terminal branches one at a time, shortest first.

    A terminal branch runs from an end point to its nearest junction; it is
    deleted (junction pixel kept) when shorter than ``min_branch_frac * R``.
    Removing one spur of a fork lets the other merge into the stem, so forks
    are never stripped bare. A skeleton that is a single path is kept.
    """
    R = R or skel.grid.shape[0]
    limit = min_branch_frac * R
    g = np.pad(skel.grid, 2).astype(np.uint8)
    while True:
        graph = _Graph(g.astype(bool))
        best = None
        for i in np.flatnonzero(graph.degree == 1):
            path = graph.walk(int(i), graph.nbrs[i][0])
            if graph.degree[path[-1]] < 3:
                continue  # end-to-end path: nothing to hang it on
            length = graph.path_length(path)
            if length < limit and (best is None or length < best[0]):
                best = (length, path)
        if best is None:
            break
        for i in best[1][:-1]:
            g[graph.pixels[i]] = 0
        _remove_redundant(g)
    return Skeleton(grid=g[2:-2, 2:-2].astype(bool))


@dataclass
class SkeletonFeature:
    turning_pts: int
    end_pts: int
    t_junction_pts: int
    cross_junction_pts: int

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.turning_pts, self.end_pts, self.t_junction_pts, self.cross_junction_pts)


def _junction_clusters(graph: _Graph, merge_len: float) -> list[tuple[set[int], int]]:
    """Group junction pixels; return (members, number of outgoing branches).

    Junction pixels that touch, or are linked by a branch shorter than
    ``merge_len``, form one junction (thinning splits a crossing into two
    nearby T's).
    """
    junction = [i for i in range(len(graph.pixels)) if graph.degree[i] >= 3]
    parent = {i: i for i in junction}

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in junction:
        for j in graph.nbrs[i]:
            if j in parent:
                parent[find(i)] = find(j)
    branches = graph.branches()
    for path in branches:
        a, b = path[0], path[-1]
        if a in parent and b in parent and len(path) > 2:
            if graph.path_length(path) <= merge_len and find(a) != find(b):
                parent[find(a)] = find(b)
    groups: dict[int, set[int]] = {}
    for i in junction:
        groups.setdefault(find(i), set()).add(i)
    out = []
    for members in groups.values():
        outgoing = 0
        for path in branches:
            a, b = path[0], path[-1]
            inner = path[1:-1]
            if any(p in members for p in inner):
                continue
            if a in members and b in members:
                continue  # internal link of a merged junction
            outgoing += (a in members) + (b in members)
        out.append((members, outgoing))
    return out


def _turning_count(graph: _Graph, path: list[int], arm: int, limit_deg: float,
                   dt: np.ndarray | None = None) -> int:
    """Bends sharper than ``limit_deg`` along one skeleton path.

    The direction on each side is taken over ``arm`` pixels, or over the
    local half-width from ``dt`` when that is longer: thinning leaves
    wiggles and end hooks inside the inscribed disk that are not bends.
    """
    if len(path) < 2 * arm + 1:
        return 0
    pts = np.array([graph.pixels[i] for i in path], dtype=float)
    n = len(pts)
    arms = np.full(n, arm, dtype=np.int64)
    if dt is not None:
        rc = pts.astype(np.int64)
        arms = np.maximum(arms, np.ceil(dt[rc[:, 0], rc[:, 1]]).astype(np.int64))
    i = np.arange(n)
    i = i[(i - arms >= 0) & (i + arms < n)]
    if len(i) == 0:
        return 0
    a = arms[i]
    v1 = pts[i - a] - pts[i]
    v2 = pts[i + a] - pts[i]
    cosang = (v1 * v2).sum(axis=1) / (np.linalg.norm(v1, axis=1) * np.linalg.norm(v2, axis=1))
    bend = 180.0 - np.degrees(np.arccos(np.clip(cosang, -1.0, 1.0)))
    hit = np.flatnonzero(bend > limit_deg)
    if len(hit) == 0:
        return 0
    # runs closer than one arm belong to the same bend
    pos = i[hit]
    return 1 + int(np.count_nonzero(np.diff(pos) > a[hit][1:]))


def salient_points(skel: Skeleton, turn_angle_deg: float = 45.0, arm: int = 10,
                   merge_len: float = 4.0, dt: np.ndarray | None = None) -> SkeletonFeature:
    """Count turning, end, T-junction and cross-junction points.

    ``dt`` (the shape's distance transform) widens the turning arms to the
    local half-width; see ``_turning_count``.
    """
    graph = _Graph(skel.grid)
    if not graph.pixels:
        return SkeletonFeature(0, 0, 0, 0)
    ends = int(np.count_nonzero(graph.degree == 1))
    t_pts = cross = 0
    for _, outgoing in _junction_clusters(graph, merge_len):
        if outgoing == 3:
            t_pts += 1
        elif outgoing >= 4:
            cross += 1
    turning = 0
    for path in graph.branches():
        turning += _turning_count(graph, path, arm, turn_angle_deg, dt)
    if ends == 0 and t_pts == 0 and cross == 0 and len(graph.pixels) > 2 * arm:
        # closed loop without nodes: walk it once from an arbitrary pixel
        start = 0
        if graph.nbrs[start]:
            turning += _turning_count(graph, graph.walk(start, graph.nbrs[start][0]),
                                      arm, turn_angle_deg, dt)
    return SkeletonFeature(turning, ends, t_pts, cross)


# --------------------------------------------------------------------------
# Haar-like and geometric features


def haar_masks(R: int) -> np.ndarray:
    """Five signed masks: left/right, top/bottom, outer column thirds,
    outer row thirds, 2x2 checkerboard."""
    idx = np.arange(R)
    half = np.where(idx < R / 2, 1, -1)
    k = R // 3  # equal outer bands keep every mask zero-sum
    third = np.where(idx < k, 1, np.where(idx >= R - k, -1, 0))
    ones = np.ones(R)
    return np.stack([
        np.outer(ones, half),
        np.outer(half, ones),
        np.outer(ones, third),
        np.outer(third, ones),
        np.outer(half, half),
    ]).astype(np.int64)


@dataclass
class WaveletFeature:
    responses: np.ndarray


def wavelet_features(shape) -> WaveletFeature:
    grid = shape.grid if hasattr(shape, "grid") else np.asarray(shape, dtype=bool)
    h, w = grid.shape
    if h != w:
        raise ValueError("wavelet features need a square raster")
    area = grid.sum()
    sums = (haar_masks(h) * grid[None]).sum(axis=(1, 2))
    return WaveletFeature(responses=np.abs(sums) / area)


@dataclass
class GeometricFeature:
    aspect_ratio: float
    circularity: float
    symmetry: float
    solidity: float

    def as_array(self) -> np.ndarray:
        return np.array([self.aspect_ratio, self.circularity, self.symmetry, self.solidity])


def convex_hull_area(grid: np.ndarray) -> float:
    """Area of the hull of boundary pixel squares (corners, not centers)."""
    rc = moore_trace(grid).astype(float)
    corners = (rc[:, None, :] + np.array([[-0.5, -0.5], [-0.5, 0.5], [0.5, -0.5], [0.5, 0.5]])).reshape(-1, 2)
    return float(ConvexHull(corners).volume)


def geometric_features(shape: NormalizedShape, sigma: float = 2.0) -> GeometricFeature:
    grid = shape.grid
    w, h = bbox_size(grid)
    area = float(grid.sum())
    perim = shape.contour(sigma).length
    return GeometricFeature(
        aspect_ratio=min(w, h) / max(w, h),
        circularity=4 * np.pi * area / perim**2,
        symmetry=float(shape.symmetry_score),
        solidity=area / convex_hull_area(grid),
    )


# --------------------------------------------------------------------------
# the 13-D vector


@dataclass
class FeatureScaling:
    """Per-dimension min/max; only the skeleton counts are rescaled."""

    lo: np.ndarray
    hi: np.ndarray

    @classmethod
    def fit(cls, raw: np.ndarray) -> "FeatureScaling":
        raw = np.atleast_2d(raw)
        lo = np.zeros(raw.shape[1])
        hi = np.ones(raw.shape[1])
        lo[SKELETON_DIMS] = raw[:, SKELETON_DIMS].min(axis=0)
        hi[SKELETON_DIMS] = raw[:, SKELETON_DIMS].max(axis=0)
        return cls(lo=lo, hi=hi)

    @classmethod
    def identity(cls, dim: int = 13) -> "FeatureScaling":
        return cls(lo=np.zeros(dim), hi=np.ones(dim))

    def apply(self, raw: np.ndarray) -> np.ndarray:
        span = self.hi - self.lo
        safe = np.where(span > 0, span, 1.0)
        out = (np.asarray(raw, dtype=float) - self.lo) / safe
        return np.where(span > 0, out, 0.0)


def raw_global_feature(shape: NormalizedShape, prune_frac: float = 0.05,
                       turn_angle_deg: float = 45.0, sigma: float = 2.0,
                       turn_arm: int = 10) -> np.ndarray:
    """Unscaled 13-D vector (skeleton counts as integers-valued floats)."""
    if count_components(shape.grid) != 1:
        raise DegenerateShape(f"{shape.source_id}: not a single component")
    dt = ndimage.distance_transform_edt(shape.grid)
    skel = prune_skeleton(skeletonize(shape), prune_frac, R=shape.R)
    fs = salient_points(skel, turn_angle_deg, arm=turn_arm, dt=dt)
    fw = wavelet_features(shape)
    fg = geometric_features(shape, sigma)
    return np.concatenate([np.array(fs.as_tuple(), dtype=float), fw.responses, fg.as_array()])


def global_feature(shape: NormalizedShape, scaling: FeatureScaling | None = None, **kw) -> np.ndarray:
    raw = raw_global_feature(shape, **kw)
    return raw if scaling is None else scaling.apply(raw)
