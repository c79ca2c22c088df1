import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tsr import synthetic as syn
from tsr.errors import DegenerateShape, EmptyShape
from tsr.preprocess import (
    bbox_size,
    count_holes,
    dominant_symmetry_axis,
    extract_contour,
    fill_grid,
    iou,
    moore_trace,
    normalize,
    signed_area,
    symmetry_margin,
    symmetry_profile,
    upright_symmetry,
)
from tsr.shapeio import BinaryShape


def test_fill_holes_and_largest_component():
    g = syn.annulus(20, 8)
    assert count_holes(g) == 1
    f = fill_grid(g)
    assert count_holes(f) == 0
    assert np.array_equal(f, syn.disk(20)) or f.sum() >= g.sum()
    two = np.zeros((10, 20), bool)
    two[1:4, 1:4] = True
    two[2:9, 10:18] = True
    assert fill_grid(two).sum() == 7 * 8
    with pytest.raises(EmptyShape):
        fill_grid(np.zeros((3, 3), bool))


def test_moore_trace_square():
    g = np.zeros((6, 6), bool)
    g[1:5, 1:5] = True
    rc = moore_trace(g)
    assert len(rc) == 12
    assert {tuple(p) for p in rc} == {(r, c) for r in range(1, 5) for c in range(1, 5)
                                      if r in (1, 4) or c in (1, 4)}


def test_contour_is_counter_clockwise(fixture_grids):
    for g in fixture_grids.values():
        assert signed_area(extract_contour(g).points) > 0


def test_degenerate_contour():
    g = np.zeros((5, 5), bool)
    g[2, 1:3] = True
    with pytest.raises(DegenerateShape):
        extract_contour(g)


@pytest.mark.parametrize("angle", [0, 30, 90, 135])
def test_symmetry_axis_of_rotated_rectangle(angle):
    g = syn.rasterize(syn.transform(syn.rect_outline(120, 40), angle))
    a, s = dominant_symmetry_axis(g)
    diff = min((a - angle) % 90, 90 - (a - angle) % 90)
    assert diff <= 1.0 and s > 0.95


def test_symmetry_margin_window():
    ang = np.arange(0.0, 180.0)
    sc = np.zeros(180)
    sc[40], sc[45], sc[100] = 1.0, 0.99, 0.7
    assert symmetry_margin(ang, sc) == pytest.approx(0.3)


def test_normalize_size_center_and_orientation(normalized_fixtures):
    for name, ns in normalized_fixtures.items():
        g = ns.grid
        assert g.shape == (256, 256)
        assert max(bbox_size(g)) == round(0.9 * 256), name
        rows = np.flatnonzero(g.any(axis=1))
        assert g[:128].sum() <= g[128:].sum(), name  # heavier half is down
        assert rows[0] >= 0 and rows[-1] < 256
        assert upright_symmetry(g) > 0.9, name


def test_normalize_rejects_tiny():
    g = np.zeros((5, 5), bool)
    g[2, 2] = True
    with pytest.raises(DegenerateShape):
        normalize(BinaryShape("t", g))


@settings(max_examples=15, deadline=None)
@given(st.floats(0, 360), st.floats(0.6, 1.4))
def test_normalize_invariance_property(angle, scale):
    base = normalize(BinaryShape("a", syn.fixture_shape("tee"))).grid
    g = normalize(BinaryShape("b", syn.fixture_shape("tee", angle, scale))).grid
    assert iou(base, g) >= 0.95


def test_symmetry_profile_score_bounds(fixture_grids):
    _, s = symmetry_profile(fixture_grids["egg"], step_deg=5)
    assert np.all((s >= 0) & (s <= 1))
