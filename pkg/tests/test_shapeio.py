import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from PIL import Image

from tsr.errors import (
    ChecksumFailure,
    CorruptFile,
    DatasetLoadError,
    EmptyDirectory,
    EmptyShape,
    UnsupportedFormat,
    VersionMismatch,
)
from tsr.shapeio import (
    convert_image,
    derive_label,
    load_dataset,
    load_sections,
    load_shape,
    save_sections,
    write_pbm,
    write_pgm,
    write_pgm_ascii,
)

grids = arrays(bool, st.tuples(st.integers(1, 20), st.integers(1, 20))).filter(lambda g: g.any())


@settings(max_examples=40, deadline=None)
@given(grids)
def test_pbm_roundtrip(tmp_path_factory, g):
    d = tmp_path_factory.mktemp("pbm")
    for plain in (False, True):
        p = d / f"s{int(plain)}.pbm"
        write_pbm(p, g, plain=plain)
        assert np.array_equal(load_shape(p).grid, g)


@settings(max_examples=40, deadline=None)
@given(grids)
def test_pgm_roundtrip(tmp_path_factory, g):
    d = tmp_path_factory.mktemp("pgm")
    write_pgm(d / "a.pgm", g)
    write_pgm_ascii(d / "b.pgm", g.astype(np.uint8) * 255)
    assert np.array_equal(load_shape(d / "a.pgm").grid, g)
    assert np.array_equal(load_shape(d / "b.pgm").grid, g)


def test_threshold_is_inclusive(tmp_path):
    write_pgm(tmp_path / "t.pgm", np.array([[127, 128, 200]], dtype=np.uint8))
    assert load_shape(tmp_path / "t.pgm").grid.tolist() == [[False, True, True]]
    assert load_shape(tmp_path / "t.pgm", threshold=200).grid.tolist() == [[False, False, True]]


def test_pgm_comments_and_16bit(tmp_path):
    p = tmp_path / "c.pgm"
    p.write_bytes(b"P2\n# comment\n2 1\n# another\n65535\n0 65535\n")
    assert load_shape(p).grid.tolist() == [[False, True]]


def test_png_grayscale_and_rgb(tmp_path):
    g = np.zeros((5, 6), np.uint8)
    g[1:4, 2:5] = 255
    Image.fromarray(g).save(tmp_path / "ok.png")
    assert np.array_equal(load_shape(tmp_path / "ok.png").grid, g > 0)
    Image.fromarray(np.dstack([g] * 3)).save(tmp_path / "rgb.png")
    with pytest.raises(UnsupportedFormat):
        load_shape(tmp_path / "rgb.png")


def test_decode_errors(tmp_path):
    (tmp_path / "x.gif").write_bytes(b"GIF89a....")
    with pytest.raises(UnsupportedFormat):
        load_shape(tmp_path / "x.gif")
    (tmp_path / "t.pgm").write_bytes(b"P5\n4 4\n255\n\x00\x01")
    with pytest.raises(CorruptFile):
        load_shape(tmp_path / "t.pgm")
    write_pgm(tmp_path / "e.pgm", np.zeros((3, 3), np.uint8))
    with pytest.raises(EmptyShape):
        load_shape(tmp_path / "e.pgm")


def test_convert_gif_auto_polarity(tmp_path):
    g = np.full((10, 10), 255, np.uint8)
    g[3:7, 3:7] = 0  # dark shape on a light page
    Image.fromarray(g).save(tmp_path / "s.gif")
    convert_image(tmp_path / "s.gif", tmp_path / "s.pgm")
    assert np.array_equal(load_shape(tmp_path / "s.pgm").grid, g == 0)


@pytest.mark.parametrize("name,rule,label", [
    ("apple-12.pgm", "prefix-before-last-dash", "apple"),
    ("car-door-3.pgm", "prefix-before-last-dash", "car-door"),
    ("bone07.pgm", "alpha-prefix", "bone"),
    ("cls/x.pgm", "parent-directory", "cls"),
])
def test_label_rules(tmp_path, name, rule, label):
    assert derive_label(tmp_path / name, rule) == label


def test_dataset_order_and_failures(tmp_path):
    for name in ["b-2", "a-1", "b-1"]:
        write_pgm(tmp_path / f"{name}.pgm", np.eye(4, dtype=bool))
    (tmp_path / "c-1.pgm").write_bytes(b"P5 broken")
    (tmp_path / "notes.txt").write_text("ignored")
    with pytest.raises(DatasetLoadError):
        load_dataset(tmp_path)
    g = load_dataset(tmp_path, strict=False)
    assert g.ids == ["a-1", "b-1", "b-2"]
    assert g.labels == ["a", "b", "b"]
    assert len(g.failures) == 1
    with pytest.raises(EmptyDirectory):
        load_dataset(tmp_path / "missing")


def test_sections_roundtrip_and_corruption(tmp_path):
    secs = {"a": np.arange(6.0).reshape(2, 3), "b": np.array([1, 2], np.int64),
            "m": np.array([[True, False]]), "meta": b'{"x":1}'}
    p = tmp_path / "i.idx"
    save_sections(p, secs)
    out = load_sections(p)
    assert out["meta"] == secs["meta"]
    assert np.array_equal(out["a"], secs["a"]) and np.array_equal(out["b"], secs["b"])
    with pytest.raises(VersionMismatch):
        load_sections(p, expected_version=99)
    data = bytearray(p.read_bytes())
    data[-3] ^= 0xFF
    p.write_bytes(bytes(data))
    with pytest.raises(ChecksumFailure):
        load_sections(p)
    p.write_bytes(bytes(data[:10]))
    with pytest.raises(ChecksumFailure):
        load_sections(p)
