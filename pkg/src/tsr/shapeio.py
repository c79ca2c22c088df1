"""Shape decoding, dataset ingestion and the index container format.

Decoders cover PBM (P1/P4), PGM (P2/P5) and 8-bit grayscale PNG. Other
formats (the MPEG-7 GIFs in particular) go through ``tsr convert`` first.

The index container is a small sectioned binary file::

    magic  b"TSRINDEX"
    u32    format version
    u32    section count
    u32    crc32 of the section table
    table  one entry per section (see ``_ENTRY``)
    data   section payloads, little-endian, in table order

Every payload carries its own crc32 so truncation and bit rot are detected
per section.
"""

from __future__ import annotations

import json
import logging
import os
import re
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    ChecksumFailure,
    CorruptFile,
    DataError,
    DatasetLoadError,
    EmptyDirectory,
    EmptyShape,
    UnsupportedFormat,
    VersionMismatch,
)

log = logging.getLogger(__name__)

IMAGE_SUFFIXES = (".pbm", ".pgm", ".png", ".pnm")
LABEL_RULES = ("prefix-before-last-dash", "parent-directory", "alpha-prefix")


@dataclass
class BinaryShape:
    """A labeled occupancy grid. ``grid[row, col]`` is True on foreground."""

    id: str
    grid: np.ndarray
    label: str | None = None

    def __post_init__(self):
        self.grid = np.ascontiguousarray(self.grid, dtype=bool)
        if self.grid.ndim != 2:
            raise ValueError("grid must be 2-D")

    @property
    def height(self) -> int:
        return self.grid.shape[0]

    @property
    def width(self) -> int:
        return self.grid.shape[1]

    @property
    def area(self) -> int:
        return int(self.grid.sum())


@dataclass
class Gallery:
    shapes: list[BinaryShape]
    source: str = ""
    labeling: str = "prefix-before-last-dash"
    failures: list[tuple[str, str]] = field(default_factory=list)

    def __len__(self):
        return len(self.shapes)

    @property
    def ids(self) -> list[str]:
        return [s.id for s in self.shapes]

    @property
    def labels(self) -> list[str | None]:
        return [s.label for s in self.shapes]


# --------------------------------------------------------------------------
# image decoding


def _netpbm_tokens(data: bytes, count: int, pos: int) -> tuple[list[bytes], int]:
    """Read ``count`` whitespace separated header tokens, skipping comments."""
    tokens = []
    n = len(data)
    while len(tokens) < count:
        while pos < n and data[pos : pos + 1].isspace():
            pos += 1
        if pos < n and data[pos : pos + 1] == b"#":
            while pos < n and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not data[pos : pos + 1].isspace() and data[pos : pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise CorruptFile("truncated netpbm header")
        tokens.append(data[start:pos])
    return tokens, pos


def _decode_netpbm(data: bytes) -> tuple[np.ndarray, bool]:
    """Return (array, is_bitmap). Bitmaps hold 1 for set bits, graymaps 0..255."""
    magic = data[:2]
    try:
        if magic in (b"P1", b"P4"):
            (w, h), pos = _netpbm_tokens(data, 2, 2)
            w, h = int(w), int(h)
        else:
            (w, h, maxval), pos = _netpbm_tokens(data, 3, 2)
            w, h, maxval = int(w), int(h), int(maxval)
            if not 0 < maxval < 65536:
                raise CorruptFile(f"bad maxval {maxval}")
    except ValueError as exc:
        raise CorruptFile(f"bad netpbm header: {exc}") from None
    if w <= 0 or h <= 0:
        raise CorruptFile("non-positive image size")

    if magic == b"P1":
        digits = re.sub(rb"#[^\n\r]*|\s", b"", data[pos:])
        if len(digits) < w * h:
            raise CorruptFile("truncated P1 raster")
        bits = np.frombuffer(digits[: w * h], dtype=np.uint8) - ord("0")
        if bits.max(initial=0) > 1:
            raise CorruptFile("P1 raster holds values other than 0/1")
        return bits.reshape(h, w), True
    if magic == b"P4":
        pos += 1  # single whitespace after the header
        stride = (w + 7) // 8
        raw = data[pos : pos + stride * h]
        if len(raw) < stride * h:
            raise CorruptFile("truncated P4 raster")
        packed = np.frombuffer(raw, dtype=np.uint8).reshape(h, stride)
        return np.unpackbits(packed, axis=1)[:, :w], True
    if magic == b"P2":
        try:
            values = np.array(data[pos:].split()[: w * h], dtype=np.int64)
        except ValueError:
            raise CorruptFile("non-numeric P2 raster") from None
        if values.size < w * h:
            raise CorruptFile("truncated P2 raster")
    else:  # P5
        pos += 1
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype(np.uint8)
        raw = data[pos : pos + w * h * dtype.itemsize]
        if len(raw) < w * h * dtype.itemsize:
            raise CorruptFile("truncated P5 raster")
        values = np.frombuffer(raw, dtype=dtype).astype(np.int64)
    if values.max(initial=0) > maxval:
        raise CorruptFile("sample exceeds maxval")
    if maxval != 255:
        values = np.rint(values * 255.0 / maxval).astype(np.int64)
    return values.reshape(h, w), False


def _decode_png(path: Path) -> np.ndarray:
    from PIL import Image

    try:
        with Image.open(path) as im:
            im.load()
            if im.mode == "1":
                return np.asarray(im, dtype=np.uint8) * 255
            if im.mode != "L":
                raise UnsupportedFormat(
                    f"{path.name}: PNG mode {im.mode!r} is not 8-bit grayscale; run `tsr convert` first"
                )
            return np.asarray(im, dtype=np.uint8)
    except UnsupportedFormat:
        raise
    except Exception as exc:  # Pillow raises a zoo of types on broken files
        raise CorruptFile(f"{path.name}: {exc}") from None


def load_shape(path, threshold: int = 128, label: str | None = None) -> BinaryShape:
    """Decode one silhouette image.

    A pixel is foreground iff its gray value is >= ``threshold``; for PBM a set
    bit (black) is foreground.
    """
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise CorruptFile(f"{path}: {exc}") from None
    if data[:2] in (b"P1", b"P2", b"P4", b"P5"):
        values, is_bitmap = _decode_netpbm(data)
        grid = values == 1 if is_bitmap else values >= threshold
    elif data[:8] == b"\x89PNG\r\n\x1a\n":
        grid = _decode_png(path) >= threshold
    else:
        raise UnsupportedFormat(f"{path.name}: not PBM/PGM/PNG")
    if not grid.any():
        raise EmptyShape(f"{path.name}: no foreground pixels")
    return BinaryShape(id=path.stem, grid=grid, label=label)


def derive_label(path: Path, rule: str) -> str:
    if rule == "prefix-before-last-dash":
        stem = path.stem
        return stem.rsplit("-", 1)[0] if "-" in stem else stem
    if rule == "parent-directory":
        return path.parent.name
    if rule == "alpha-prefix":
        m = re.match(r"[A-Za-z_]+", path.stem)
        return m.group(0).rstrip("_") if m else path.stem
    raise ValueError(f"unknown label rule {rule!r}; expected one of {LABEL_RULES}")


def load_dataset(
    directory,
    label_rule: str = "prefix-before-last-dash",
    threshold: int = 128,
    strict: bool = True,
) -> Gallery:
    """Load every decodable image below ``directory`` in filename order.

    With ``label_rule="parent-directory"`` class subfolders are scanned too.
    In lenient mode files that fail to decode are skipped and listed in
    ``Gallery.failures``; in strict mode any failure raises
    ``DatasetLoadError``.
    """
    if label_rule not in LABEL_RULES:
        raise ValueError(f"unknown label rule {label_rule!r}")
    root = Path(directory)
    if not root.is_dir():
        raise EmptyDirectory(f"{root}: not a directory")
    pattern = "**/*" if label_rule == "parent-directory" else "*"
    paths = sorted(
        (p for p in root.glob(pattern) if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES),
        key=lambda p: p.relative_to(root).as_posix(),
    )
    if not paths:
        raise EmptyDirectory(f"{root}: no PBM/PGM/PNG files")

    shapes, failures = [], []
    for p in paths:
        try:
            shapes.append(load_shape(p, threshold, label=derive_label(p, label_rule)))
        except DataError as exc:
            failures.append((str(p), str(exc)))
    if failures:
        if strict:
            raise DatasetLoadError(failures)
        for p, msg in failures:
            log.warning("skipped %s: %s", p, msg)
    if not shapes:
        raise EmptyDirectory(f"{root}: no file could be decoded")
    ids = [s.id for s in shapes]
    if len(set(ids)) != len(ids):
        dup = sorted({i for i in ids if ids.count(i) > 1})
        raise DataError(f"duplicate shape ids: {dup[:5]}")
    return Gallery(shapes=shapes, source=str(root), labeling=label_rule, failures=failures)


def write_pgm(path, gray: np.ndarray) -> None:
    """Write an 8-bit binary PGM (P5)."""
    gray = np.asarray(gray)
    if gray.dtype == bool:
        gray = gray.astype(np.uint8) * 255
    gray = gray.astype(np.uint8)
    h, w = gray.shape
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (w, h))
        fh.write(gray.tobytes())


def write_pbm(path, grid: np.ndarray, plain: bool = False) -> None:
    grid = np.asarray(grid, dtype=bool)
    h, w = grid.shape
    with open(path, "wb") as fh:
        if plain:
            fh.write(b"P1\n%d %d\n" % (w, h))
            for row in grid.astype(np.uint8):
                fh.write(b" ".join(b"%d" % v for v in row) + b"\n")
        else:
            fh.write(b"P4\n%d %d\n" % (w, h))
            fh.write(np.packbits(grid, axis=1).tobytes())


def write_pgm_ascii(path, gray: np.ndarray) -> None:
    gray = np.asarray(gray).astype(np.uint8)
    h, w = gray.shape
    with open(path, "wb") as fh:
        fh.write(b"P2\n%d %d\n255\n" % (w, h))
        for row in gray:
            fh.write(b" ".join(b"%d" % v for v in row) + b"\n")


def convert_image(src, dst, polarity: str = "auto") -> None:
    """Convert any Pillow-readable image (GIF, BMP, PPM, ...) into a PGM.

    ``polarity="auto"`` inverts the image when its border is mostly bright,
    so shapes drawn dark-on-light end up as bright foreground.
    """
    from PIL import Image

    try:
        with Image.open(src) as im:
            gray = np.asarray(im.convert("L"), dtype=np.uint8)
    except Exception as exc:
        raise CorruptFile(f"{src}: {exc}") from None
    if polarity == "invert":
        gray = 255 - gray
    elif polarity == "auto":
        border = np.concatenate([gray[0], gray[-1], gray[:, 0], gray[:, -1]])
        if np.mean(border >= 128) > 0.5:
            gray = 255 - gray
    elif polarity != "keep":
        raise ValueError(f"unknown polarity {polarity!r}")
    write_pgm(dst, gray)


# --------------------------------------------------------------------------
# sectioned container

MAGIC = b"TSRINDEX"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<8sIII")
# name, dtype code, ndim, shape[4], offset, nbytes, crc32
_ENTRY = struct.Struct("<32s8sI4QQQI")
_MAX_NDIM = 4


def _dtype_code(dtype: np.dtype) -> bytes:
    dtype = np.dtype(dtype)
    if dtype == np.float64:
        return b"<f8"
    if dtype == np.int64:
        return b"<i8"
    if dtype == np.uint8 or dtype == bool:
        return b"|u1"
    raise TypeError(f"unsupported section dtype {dtype}")


def save_sections(path, sections: dict[str, object], version: int = FORMAT_VERSION) -> None:
    """Write ``name -> ndarray | bytes`` sections. Order of the dict is kept."""
    table, payloads, offset = [], [], 0
    for name, value in sections.items():
        if isinstance(value, (bytes, bytearray)):
            arr = np.frombuffer(bytes(value), dtype=np.uint8)
            code = b"bytes"
        else:
            arr = np.asarray(value)
            code = _dtype_code(arr.dtype)
            arr = arr.astype(np.dtype(code.decode()), copy=False)
        if arr.ndim > _MAX_NDIM:
            raise ValueError(f"section {name!r}: ndim > {_MAX_NDIM}")
        blob = np.ascontiguousarray(arr).tobytes()
        shape = list(arr.shape) + [0] * (_MAX_NDIM - arr.ndim)
        table.append(
            _ENTRY.pack(name.encode(), code, arr.ndim, *shape, offset, len(blob), zlib.crc32(blob))
        )
        payloads.append(blob)
        offset += len(blob)
    table_bytes = b"".join(table)
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, version, len(table), zlib.crc32(table_bytes)))
        fh.write(table_bytes)
        for blob in payloads:
            fh.write(blob)
    os.replace(tmp, path)


def load_sections(path, expected_version: int = FORMAT_VERSION) -> dict[str, object]:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise ChecksumFailure(f"{path}: file too short for a header")
    magic, version, count, table_crc = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise CorruptFile(f"{path}: not a TSR index file")
    if version != expected_version:
        raise VersionMismatch(f"{path}: index version {version}, loader expects {expected_version}")
    table_end = _HEADER.size + count * _ENTRY.size
    table_bytes = data[_HEADER.size : table_end]
    if len(table_bytes) != count * _ENTRY.size or zlib.crc32(table_bytes) != table_crc:
        raise ChecksumFailure(f"{path}: section table checksum mismatch")
    out: dict[str, object] = {}
    for k in range(count):
        name, code, ndim, *rest = _ENTRY.unpack_from(table_bytes, k * _ENTRY.size)
        shape, (offset, nbytes, crc) = rest[:_MAX_NDIM][:ndim], rest[_MAX_NDIM:]
        name = name.rstrip(b"\0").decode()
        code = code.rstrip(b"\0")
        blob = data[table_end + offset : table_end + offset + nbytes]
        if len(blob) != nbytes or zlib.crc32(blob) != crc:
            raise ChecksumFailure(f"{path}: section {name!r} checksum mismatch")
        if code == b"bytes":
            out[name] = bytes(blob)
        else:
            out[name] = np.frombuffer(blob, dtype=np.dtype(code.decode())).reshape(shape).copy()
    return out


def save_index(index, path) -> None:
    """Persist a ``RetrievalIndex``; see the module docstring for the layout."""
    save_sections(path, index.to_sections())


def load_index(path, expected_version: int = FORMAT_VERSION):
    from .index import RetrievalIndex

    return RetrievalIndex.from_sections(load_sections(path, expected_version))


def dumps_json(obj) -> bytes:
    """Canonical JSON so persisted metadata is byte-stable."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()
