"""Shape normalization, hole filling and contour extraction.

Angles are in degrees, measured counter-clockwise in math orientation
(x = column to the right, y = up, i.e. ``-row``), so 90 is the vertical axis.
Contours store points as (x, y) = (column, row) image coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numba
import numpy as np
from scipy import ndimage

from .errors import DegenerateShape, EmptyShape
from .shapeio import BinaryShape

EIGHT = np.ones((3, 3), dtype=bool)

# Moore neighbourhood, clockwise on screen (rows grow downwards), from west.
_MOORE = [(0, -1), (-1, -1), (-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1)]


def _grid(shape) -> np.ndarray:
    return shape.grid if hasattr(shape, "grid") else np.asarray(shape, dtype=bool)


def largest_component(grid: np.ndarray) -> np.ndarray:
    """Largest 8-connected foreground component (lowest label on ties)."""
    labels, n = ndimage.label(grid, structure=EIGHT)
    if n <= 1:
        return grid.copy()
    sizes = np.bincount(labels.ravel())[1:]
    return labels == (int(np.argmax(sizes)) + 1)


def fill_grid(grid: np.ndarray) -> np.ndarray:
    grid = np.asarray(grid, dtype=bool)
    if not grid.any():
        raise EmptyShape("no foreground pixels")
    return _fill_background(largest_component(_fill_background(grid)))


def _fill_background(grid: np.ndarray) -> np.ndarray:
    """Flood the background from the frame; unreached background becomes foreground."""
    # background is 4-connected, the dual of 8-connected foreground
    labels, _ = ndimage.label(np.pad(~grid, 1, constant_values=True))
    return labels[1:-1, 1:-1] != labels[0, 0]


def fill_holes(shape: BinaryShape) -> BinaryShape:
    return BinaryShape(id=shape.id, grid=fill_grid(shape.grid), label=shape.label)


def count_holes(grid: np.ndarray) -> int:
    """Background 4-components that do not touch the frame."""
    padded = np.pad(~np.asarray(grid, dtype=bool), 1, constant_values=True)
    _, n = ndimage.label(padded)
    return n - 1


def count_components(grid: np.ndarray) -> int:
    return ndimage.label(grid, structure=EIGHT)[1]


# --------------------------------------------------------------------------
# contours


@dataclass
class Contour:
    points: np.ndarray  # (k, 2) float, (x, y) = (col, row), counter-clockwise

    @property
    def length(self) -> float:
        d = np.diff(np.vstack([self.points, self.points[:1]]), axis=0)
        return float(np.hypot(d[:, 0], d[:, 1]).sum())

    def __len__(self):
        return len(self.points)


def signed_area(points: np.ndarray) -> float:
    """Shoelace area in math orientation (positive = counter-clockwise)."""
    x, y = points[:, 0], -points[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def moore_trace(grid: np.ndarray) -> np.ndarray:
    """Outer boundary pixels of the component holding the first raster pixel.

    Returns (k, 2) integer (row, col) pairs in screen-clockwise order.
    """
    g = np.pad(np.asarray(grid, dtype=bool), 1)
    fg = np.argwhere(g)
    if len(fg) == 0:
        raise EmptyShape("no foreground pixels")
    start = (int(fg[0, 0]), int(fg[0, 1]))
    # first foreground pixel in raster order: its west neighbour is background
    path = [start]
    cur, back_dir = start, 0
    first_move = None
    while True:
        nxt = None
        for k in range(1, 9):
            d = (back_dir + k) % 8
            r, c = cur[0] + _MOORE[d][0], cur[1] + _MOORE[d][1]
            if g[r, c]:
                nxt, nd = (r, c), d
                break
        if nxt is None:  # isolated pixel
            break
        # backtrack: the neighbour examined just before nxt, seen from nxt
        prev = (cur[0] + _MOORE[(nd - 1) % 8][0], cur[1] + _MOORE[(nd - 1) % 8][1])
        back_dir = _MOORE.index((prev[0] - nxt[0], prev[1] - nxt[1]))
        if first_move is None:
            first_move = (cur, nxt)
        elif (cur, nxt) == first_move:
            break
        path.append(nxt)
        cur = nxt
    if len(path) > 1 and path[-1] == start:
        path.pop()
    return np.array(path, dtype=np.int64) - 1


def extract_contour(shape, min_points: int = 8) -> Contour:
    """Moore-traced outer boundary, counter-clockwise in math orientation."""
    rc = moore_trace(_grid(shape))
    if len({tuple(p) for p in rc}) < min_points:
        raise DegenerateShape(f"only {len(rc)} boundary pixels")
    pts = rc[:, ::-1].astype(float)
    if signed_area(pts) < 0:
        pts = np.vstack([pts[:1], pts[:0:-1]])
    return Contour(points=pts)


def smooth_contour(contour: Contour, sigma: float = 2.0) -> Contour:
    """Circular Gaussian smoothing of x(t) and y(t)."""
    if sigma <= 0:
        return Contour(points=contour.points.copy())
    pts = ndimage.gaussian_filter1d(contour.points, sigma, axis=0, mode="wrap")
    return Contour(points=pts)


def turning_angles(points: np.ndarray) -> np.ndarray:
    """Signed exterior angle at every vertex of a closed polyline (radians)."""
    d = np.diff(np.vstack([points, points[:1]]), axis=0)
    heading = np.arctan2(-d[:, 1], d[:, 0])
    turn = heading - np.roll(heading, 1)
    return (turn + np.pi) % (2 * np.pi) - np.pi


def max_curvature(points: np.ndarray) -> float:
    """Largest turning angle per unit arc length."""
    d = np.diff(np.vstack([points, points[:1]]), axis=0)
    seg = np.hypot(d[:, 0], d[:, 1])
    local = 0.5 * (seg + np.roll(seg, 1))
    return float(np.max(np.abs(turning_angles(points)) / np.maximum(local, 1e-9)))


# --------------------------------------------------------------------------
# symmetry and normalization

_SYM_MAX_POINTS = 12000


def symmetry_profile(shape, step_deg: float = 1.0, angles=None) -> tuple[np.ndarray, np.ndarray]:
    """Mirror-overlap score for every candidate axis through the centroid.

    score(theta) = |S & mirror(S)| / |S | mirror(S)|. For large shapes only a
    strided subset of pixels is reflected (against the full-resolution grid).
    ``angles`` overrides the default sweep over [0, 180).
    """
    g = _grid(shape)
    if not g.any():
        raise EmptyShape("no foreground pixels")
    rc = np.argwhere(g).astype(float)
    cy, cx = rc.mean(axis=0)
    stride = max(1, int(np.ceil(len(rc) / _SYM_MAX_POINTS)))
    rc = rc[::stride]
    x, y = rc[:, 1] - cx, -(rc[:, 0] - cy)
    h, w = g.shape
    if angles is None:
        angles = np.arange(0.0, 180.0, step_deg)
    angles = np.asarray(angles, dtype=float)
    scores = np.empty(len(angles))
    n = len(rc)
    for k, a in enumerate(np.deg2rad(angles)):
        ux, uy = np.cos(a), np.sin(a)
        dot = x * ux + y * uy
        col = np.rint(cx + 2 * dot * ux - x).astype(np.int64)
        row = np.rint(cy - (2 * dot * uy - y)).astype(np.int64)
        ok = (row >= 0) & (row < h) & (col >= 0) & (col < w)
        inter = int(np.count_nonzero(g[row[ok], col[ok]]))
        scores[k] = inter / (2 * n - inter)
    return angles, scores


def dominant_symmetry_axis(shape) -> tuple[float, float]:
    """(angle, score) of the best mirror axis; ties go to the smallest angle."""
    angles, scores = symmetry_profile(shape)
    k = int(np.argmax(scores))
    return float(angles[k]), float(scores[k])


def symmetry_margin(angles: np.ndarray, scores: np.ndarray, exclusion_deg: float = 15.0) -> float:
    """Best score minus the best score of any axis at least ``exclusion_deg`` away.

    Neighbouring angles of one axis always score alike, so the runner-up is
    taken outside a window around the winner.
    """
    k = int(np.argmax(scores))
    diff = np.abs(angles - angles[k]) % 180.0
    diff = np.minimum(diff, 180.0 - diff)
    far = diff >= exclusion_deg
    if not far.any():
        return float("inf")
    return float(scores[k] - scores[far].max())


@dataclass
class NormalizedShape:
    grid: np.ndarray
    source_id: str
    symmetry_axis_angle: float
    symmetry_score: float
    symmetry_margin: float = float("inf")
    _contours: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def R(self) -> int:
        return self.grid.shape[0]

    def contour(self, sigma: float = 2.0) -> Contour:
        if sigma not in self._contours:
            self._contours[sigma] = smooth_contour(extract_contour(self.grid), sigma)
        return self._contours[sigma]


def _rotation(deg: float) -> np.ndarray:
    t = np.deg2rad(deg)
    return np.array([[np.cos(t), -np.sin(t)], [np.sin(t), np.cos(t)]])


def bbox_size(grid: np.ndarray) -> tuple[int, int]:
    rows = np.flatnonzero(grid.any(axis=1))
    cols = np.flatnonzero(grid.any(axis=0))
    return int(cols[-1] - cols[0] + 1), int(rows[-1] - rows[0] + 1)


def _refine_peak(angles: np.ndarray, scores: np.ndarray, k: int) -> float:
    """Sub-step axis estimate from a parabola through the peak and its neighbours."""
    n = len(scores)
    s0, s1, s2 = scores[(k - 1) % n], scores[k], scores[(k + 1) % n]
    den = s0 - 2 * s1 + s2
    step = angles[1] - angles[0] if n > 1 else 0.0
    if den >= 0 or n < 3:
        return float(angles[k])
    return float(angles[k] + 0.5 * (s0 - s2) / den * step)


def _resample_closed(pts: np.ndarray, spacing: float = 1.0) -> np.ndarray:
    closed = np.vstack([pts, pts[:1]])
    seg = np.hypot(*np.diff(closed, axis=0).T)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    n = max(int(np.ceil(cum[-1] / spacing)), 8)
    t = np.arange(n) * (cum[-1] / n)
    return np.column_stack([np.interp(t, cum, closed[:, 0]), np.interp(t, cum, closed[:, 1])])


def normalize(shape, R: int = 256, margin: float = 0.9, sigma: float = 2.0) -> NormalizedShape:
    """Rotate the dominant mirror axis to vertical, center and rescale.

    The larger foreground mass ends up in the lower half. The longer bounding
    box side becomes ``round(margin * R)``; the centroid sits at the raster
    center unless that would clip the shape, in which case the shape is
    shifted just enough to fit. The outline is transformed geometrically,
    resampled at one-pixel spacing, Gaussian-smoothed (``sigma`` in output
    pixels) and scan-filled, so no resampling staircases survive.
    """
    g = fill_grid(_grid(shape))
    source_id = getattr(shape, "id", "")
    if g.sum() < 3:
        raise DegenerateShape(f"{source_id}: fewer than 3 foreground pixels")
    angles, scores = symmetry_profile(g)
    k = int(np.argmax(scores))
    axis, score = float(angles[k]), float(scores[k])
    gap = symmetry_margin(angles, scores)

    rc = np.argwhere(g).astype(float)
    cy, cx = rc.mean(axis=0)
    pts = np.column_stack([rc[:, 1] - cx, -(rc[:, 0] - cy)])
    phi = 90.0 - _refine_peak(angles, scores, k)
    rot = pts @ _rotation(phi).T
    if np.count_nonzero(rot[:, 1] > 1e-9) > np.count_nonzero(rot[:, 1] < -1e-9):
        phi += 180.0
    outline = moore_trace(g).astype(float)
    outline = np.column_stack([outline[:, 1] - cx, -(outline[:, 0] - cy)]) @ _rotation(phi).T
    target = int(round(margin * R))
    scale = target / float(np.max(np.ptp(outline, axis=0) + 1.0))

    out = None
    lo_s, hi_s = 0.0, np.inf  # bracket: too small / too large
    for _ in range(24):
        poly = _resample_closed(outline * scale)
        if sigma > 0:
            poly = ndimage.gaussian_filter1d(poly, sigma, axis=0, mode="wrap")
        lo, hi = poly.min(axis=0) - 0.5, poly.max(axis=0) + 0.5
        shift = np.zeros(2)
        for d in range(2):
            if hi[d] - lo[d] <= R:
                shift[d] = max(0.0, -R / 2 - lo[d]) - max(0.0, hi[d] - R / 2)
        xy = poly + shift
        # math (x, y) about the raster center -> pixel (col, row) centers
        pix = np.column_stack([xy[:, 0] + R / 2 - 0.5, R / 2 - 0.5 - xy[:, 1]])
        out = fill_polygon(pix, (R, R))
        if not out.any():
            raise DegenerateShape(f"{source_id}: shape vanished during resampling")
        out = fill_grid(out)
        size = max(bbox_size(out))
        if size == target:
            break
        # lattice phase makes the size jump; bisect once the target is bracketed
        if size < target:
            lo_s = scale
        else:
            hi_s = scale
        guess = scale * target / size
        scale = guess if lo_s < guess < hi_s else 0.5 * (lo_s + hi_s)
    # re-measured upright: a tilted raster loses overlap to aliasing
    score = max(score, upright_symmetry(out))
    return NormalizedShape(grid=out, source_id=source_id, symmetry_axis_angle=axis,
                           symmetry_score=float(score), symmetry_margin=gap)


def upright_symmetry(grid: np.ndarray) -> float:
    """Mirror overlap about the vertical line through the centroid.

    The reflected column 2*cx - c is tried with both integer roundings of
    2*cx, so a centroid half a pixel off the true axis costs nothing.
    """
    g = np.asarray(grid, dtype=bool)
    cx = np.argwhere(g)[:, 1].mean()
    area = np.count_nonzero(g)
    w = g.shape[1]
    best = 0.0
    for twice in {int(np.floor(2 * cx)), int(np.ceil(2 * cx))}:
        # mirrored[:, c] = g[:, twice - c]
        mirrored = np.zeros_like(g)
        c = np.arange(w)
        src = twice - c
        ok = (src >= 0) & (src < w)
        mirrored[:, c[ok]] = g[:, src[ok]]
        inter = np.count_nonzero(g & mirrored)
        best = max(best, inter / (2 * area - inter))
    return float(best)


@numba.njit(cache=True)
def _scanline_fill(xs, ys, out):
    """Even-odd fill of one closed polygon; pixel (r, c) has its center at (c, r)."""
    h, w = out.shape
    n = len(xs)
    cross = np.empty(n, dtype=np.float64)
    y_lo = max(0, int(np.ceil(ys.min())))
    y_hi = min(h - 1, int(np.floor(ys.max())))
    for r in range(y_lo, y_hi + 1):
        m = 0
        for i in range(n):
            j = (i + 1) % n
            y0, y1 = ys[i], ys[j]
            if (y0 <= r < y1) or (y1 <= r < y0):
                cross[m] = xs[i] + (r - y0) * (xs[j] - xs[i]) / (y1 - y0)
                m += 1
        cs = np.sort(cross[:m])
        for k in range(0, m - 1, 2):
            c0 = max(0, int(np.ceil(cs[k])))
            c1 = min(w - 1, int(np.floor(cs[k + 1])))
            for c in range(c0, c1 + 1):
                out[r, c] = True
    return out


def fill_polygon(points: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    """Rasterize a closed (x, y) = (col, row) polygon onto a boolean grid."""
    pts = np.asarray(points, dtype=np.float64)
    out = np.zeros(shape, dtype=np.bool_)
    return _scanline_fill(np.ascontiguousarray(pts[:, 0]), np.ascontiguousarray(pts[:, 1]), out)


def smooth_raster(grid: np.ndarray, sigma: float = 2.0) -> np.ndarray:
    """Redraw a silhouette from its smoothed outer contour."""
    pts = smooth_contour(extract_contour(grid), sigma).points
    out = fill_polygon(pts, grid.shape)
    if not out.any():
        return grid
    return fill_grid(out)


def iou(a: np.ndarray, b: np.ndarray) -> float:
    a, b = np.asarray(a, bool), np.asarray(b, bool)
    union = np.count_nonzero(a | b)
    return np.count_nonzero(a & b) / union if union else 1.0
