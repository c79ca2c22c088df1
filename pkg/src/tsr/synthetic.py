"""Procedural silhouettes for tests, demos and planted-partition fixtures.

Outlines are built in math coordinates (x right, y up, angles counter-
clockwise in degrees) and rasterized by pixel-center inclusion, so a known
rigid transform can be applied exactly before rasterization.
"""

from __future__ import annotations

import numpy as np
from .preprocess import fill_polygon
from .shapeio import BinaryShape


def ellipse_outline(a: float, b: float, n: int = 720) -> np.ndarray:
    t = np.linspace(0.0, 2 * np.pi, n, endpoint=False)
    return np.column_stack([a * np.cos(t), b * np.sin(t)])


def egg_outline(a: float, b_top: float, b_bottom: float, n: int = 720) -> np.ndarray:
    pts = ellipse_outline(a, 1.0, n)
    pts[:, 1] *= np.where(pts[:, 1] > 0, b_top, b_bottom)
    return pts


def rect_outline(w: float, h: float) -> np.ndarray:
    return np.array([[-w / 2, -h / 2], [w / 2, -h / 2], [w / 2, h / 2], [-w / 2, h / 2]])


def star_outline(r_out: float, r_in: float, points: int = 5) -> np.ndarray:
    k = np.arange(2 * points)
    ang = np.pi / 2 + k * np.pi / points
    rad = np.where(k % 2 == 0, r_out, r_in)
    return np.column_stack([rad * np.cos(ang), rad * np.sin(ang)])


def plus_outline(length: float, width: float) -> np.ndarray:
    L, w = length / 2, width / 2
    return np.array(
        [[-w, L], [w, L], [w, w], [L, w], [L, -w], [w, -w], [w, -L], [-w, -L],
         [-w, -w], [-L, -w], [-L, w], [-w, w]]
    )


def t_outline(bar: float, stem: float, width: float) -> np.ndarray:
    """Upright T: horizontal bar on top of a vertical stem."""
    b, w = bar / 2, width / 2
    top = stem / 2
    return np.array(
        [[-b, top], [b, top], [b, top - width], [w, top - width], [w, -top],
         [-w, -top], [-w, top - width], [-b, top - width]]
    )


def l_outline(arm: float, width: float) -> np.ndarray:
    return np.array([[0, 0], [arm, 0], [arm, width], [width, width], [width, arm], [0, arm]])


def u_outline(width: float, height: float, thickness: float) -> np.ndarray:
    w, h, t = width / 2, height / 2, thickness
    return np.array(
        [[-w, h], [-w + t, h], [-w + t, -h + t], [w - t, -h + t], [w - t, h], [w, h],
         [w, -h], [-w, -h]]
    )


def triangle_outline(base: float, height: float) -> np.ndarray:
    return np.array([[-base / 2, -height / 3], [base / 2, -height / 3], [0, 2 * height / 3]])


def arrow_outline(length: float, shaft: float, head: float, head_len: float) -> np.ndarray:
    L, s, hw = length / 2, shaft / 2, head / 2
    x0 = L - head_len
    return np.array([[-L, -s], [x0, -s], [x0, -hw], [L, 0], [x0, hw], [x0, s], [-L, s]])


def transform(points: np.ndarray, angle_deg: float = 0.0, scale: float = 1.0,
              shift=(0.0, 0.0)) -> np.ndarray:
    th = np.deg2rad(angle_deg)
    rot = np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
    return scale * points @ rot.T + np.asarray(shift, dtype=float)


def rasterize(polys, size=None, pad: int = 4, holes=()) -> np.ndarray:
    """Rasterize outer outlines minus hole outlines onto a boolean grid.

    ``polys`` is one (k, 2) array or a list of them (union). The canvas is
    sized to the outline bounds plus ``pad`` unless ``size=(h, w)`` is given,
    in which case the math origin maps to the canvas center.
    """
    if isinstance(polys, np.ndarray):
        polys = [polys]
    allpts = np.vstack(list(polys))
    if size is None:
        lo, hi = allpts.min(axis=0), allpts.max(axis=0)
        w = int(np.ceil(hi[0] - lo[0])) + 2 * pad + 1
        h = int(np.ceil(hi[1] - lo[1])) + 2 * pad + 1
        x0, y_top = lo[0] - pad, hi[1] + pad
    else:
        h, w = size
        x0, y_top = -w / 2.0, h / 2.0
    grid = np.zeros((h, w), dtype=bool)

    def to_pixels(p):
        # pixel (r, c) has its center at math point (x0 + c + 0.5, y_top - r - 0.5)
        return np.column_stack([p[:, 0] - x0 - 0.5, y_top - p[:, 1] - 0.5])

    for p in polys:
        grid |= fill_polygon(to_pixels(p), (h, w))
    for p in holes:
        grid &= ~fill_polygon(to_pixels(p), (h, w))
    return grid


def disk(radius: float, size=None) -> np.ndarray:
    if size is None:
        size = (int(2 * radius) + 9,) * 2
    h, w = size
    yy, xx = np.mgrid[0:h, 0:w]
    return (xx - (w - 1) / 2) ** 2 + (yy - (h - 1) / 2) ** 2 <= radius**2


def annulus(r_out: float, r_in: float) -> np.ndarray:
    g = disk(r_out)
    h, w = g.shape
    yy, xx = np.mgrid[0:h, 0:w]
    return g & ((xx - (w - 1) / 2) ** 2 + (yy - (h - 1) / 2) ** 2 > r_in**2)


def fixture_outlines() -> dict[str, list[np.ndarray]]:
    """Twenty outlines with a single clear mirror axis and unequal halves.

    Used by the rigid-transform invariance checks; each value is a list of
    polygons whose union is the shape.
    """
    return {
        "tee": [t_outline(160, 200, 36)],
        "wide_tee": [t_outline(200, 150, 40)],
        "triangle": [triangle_outline(150, 200)],
        "flat_triangle": [triangle_outline(220, 130)],
        "arrow": [arrow_outline(220, 44, 110, 70)],
        "fat_arrow": [arrow_outline(200, 60, 150, 110)],
        "mushroom": [ellipse_outline(100, 55) + [0, 50], rect_outline(50, 140) + [0, -30]],
        "keyhole": [ellipse_outline(60, 60) + [0, 60], triangle_outline(120, 180) + [0, -40]],
        "egg": [egg_outline(75, 80, 120)],
        "cone": [np.array([[-90, -100], [90, -100], [20, 110], [-20, 110]])],
        "house": [np.array([[-80, -100], [80, -100], [80, 20], [0, 110], [-80, 20]])],
        "lamp": [triangle_outline(160, 120) + [0, 60], rect_outline(24, 150) + [0, -40],
                 rect_outline(120, 20) + [0, -115]],
        "anchor": [rect_outline(30, 200), rect_outline(160, 30) + [0, -85],
                   ellipse_outline(35, 35) + [0, 100]],
        "goblet": [ellipse_outline(80, 60) + [0, 60], rect_outline(24, 100) + [0, -20],
                   ellipse_outline(70, 15) + [0, -80]],
        "spade": [triangle_outline(180, 170) + [0, 40], rect_outline(30, 120) + [0, -70]],
        "hourglass": [triangle_outline(160, 120) + [0, 50], -triangle_outline(100, 80) + [0, -45]],
        "pin": [ellipse_outline(60, 60) + [0, 60], np.array([[-40, 40], [40, 40], [0, -130]])],
        "bottle": [rect_outline(110, 150) + [0, -40], rect_outline(40, 80) + [0, 70]],
        "kite": [np.array([[0, 140], [70, 40], [0, -110], [-70, 40]])],
        "rocket": [ellipse_outline(35, 110), triangle_outline(150, 70) + [0, -90]],
    }


def fixture_shape(name: str, angle_deg: float = 0.0, scale: float = 1.0,
                  shift=(0.0, 0.0)) -> np.ndarray:
    polys = [transform(p, angle_deg, scale, shift) for p in fixture_outlines()[name]]
    return rasterize(polys)


def synthetic_gallery(n_classes: int = 6, per_class: int = 8, seed: int = 0,
                      size: int = 160) -> list[BinaryShape]:
    """Labeled gallery of perturbed class prototypes (random pose and jitter).

    Shapes are named ``<class>-<k>`` so the dash label rule recovers classes.
    """
    rng = np.random.default_rng(seed)
    names = sorted(fixture_outlines())[:n_classes]
    shapes = []
    for name in names:
        for k in range(per_class):
            polys = []
            sx, sy = rng.uniform(0.85, 1.15, size=2)
            for p in fixture_outlines()[name]:
                q = p * [sx, sy]
                q = q + rng.normal(0, 2.0, size=q.shape)
                polys.append(q)
            ang, sc = rng.uniform(0, 360), rng.uniform(0.45, 0.75) * size / 200
            grid = rasterize([transform(p, ang, sc) for p in polys])
            shapes.append(BinaryShape(id=f"{name}-{k + 1}", grid=grid, label=name))
    return shapes


# --------------------------------------------------------------------------
# feature-space fixtures (no images involved)


def planted_distances(sizes, gap: float = 5.0, seed: int = 0):
    """Symmetric distances with tight planted blocks.

    In-block distances are uniform in [0.5, 1]; cross-block ones in
    [gap, 2 * gap], so the gap ratio is at least ``gap``.
    Returns (dist, labels).
    """
    rng = np.random.default_rng(seed)
    labels = np.repeat(np.arange(len(sizes)), sizes)
    N = len(labels)
    d = rng.uniform(0.5, 1.0, (N, N))
    cross = rng.uniform(gap, 2 * gap, (N, N))
    same = labels[:, None] == labels[None, :]
    d = np.where(same, d, cross)
    d = np.triu(d, 1)
    d = d + d.T
    return d, labels


def _global_vectors(center, n, rng, spread=0.03):
    x = np.tile(np.asarray(center, dtype=float), (n, 1))
    x[:, 4:] += rng.normal(0, spread, (n, 9))
    x[:, 4:] = np.clip(x[:, 4:], 0, 1)
    return x


def confuser_fixture(per_class: int = 10, seed: int = 0) -> dict:
    """Gallery where one cluster is near the query locally but far globally.

    Four planted classes in local-distance space:
      "true"     near the query in both spaces
      "confuser" even nearer locally, far globally
      "globalnb" far locally, near globally
      "far"      far in both
    The query is out-of-sample; its global feature sits at the "true" center.
    Returns raw 13-D features, distances, labels and the query's vectors.
    """
    rng = np.random.default_rng(seed)
    names = ["true", "confuser", "globalnb", "far"]
    centers = {
        "true": [1, 3, 1, 0, .1, .2, .1, .2, .1, .6, .4, .9, .8],
        "confuser": [3, 5, 2, 1, .6, .7, .5, .6, .5, .2, .1, .3, .3],
        "globalnb": [1, 3, 1, 0, .12, .22, .12, .18, .1, .62, .42, .88, .8],
        "far": [0, 2, 0, 0, .4, .5, .8, .1, .7, .9, .8, .5, .95],
    }
    labels = np.repeat(np.arange(4), per_class)
    N = len(labels)
    X = np.vstack([_global_vectors(centers[n], per_class, rng) for n in names])
    # local space: true and confuser blocks are close to each other
    block = np.array([[0, 3, 10, 10], [3, 0, 10, 10], [10, 10, 0, 10], [10, 10, 10, 0]], float)
    d = block[labels][:, labels] + rng.uniform(0.5, 1.0, (N, N))
    d = np.triu(d, 1)
    d = d + d.T
    q_dist = np.where(labels == 1, 0.8, np.where(labels == 0, 1.0, 10.0)) + rng.uniform(0, 0.1, N)
    q_feat = np.asarray(centers["true"], dtype=float)
    return {"raw_features": X, "dist": d, "labels": [names[k] for k in labels],
            "cluster_names": names, "query_feature": q_feat, "query_dists": q_dist}
