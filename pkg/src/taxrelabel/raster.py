"""Label and confidence rasters: data model, crop/paste, histograms,
connected components, and bit-exact file I/O.

Label rasters hold 8-bit class IDs with 255 reserved as the ignore value.
Confidence rasters hold per-pixel weights in [0, 1], stored as float32 so
that file round-trips are bitwise identities.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

IGNORE_ID = 255

LABEL_MAGIC = b"CSIL"
CONFIDENCE_MAGIC = b"CSIF"
FORMAT_VERSION = 1

# magic (4 ASCII bytes), version byte, width u32 LE, height u32 LE
_HEADER = struct.Struct("<4sBII")

# 4-connectivity for component labeling
_CROSS = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)


class RasterFormatError(ValueError):
    """Raised when raster bytes fail magic, version, or length checks."""


@dataclass(frozen=True, order=True)
class BBox:
    """Axis-aligned pixel box; origin top-left, max coordinates exclusive."""

    x_min: int
    y_min: int
    x_max: int
    y_max: int

    def __post_init__(self) -> None:
        if not (0 <= self.x_min < self.x_max and 0 <= self.y_min < self.y_max):
            raise ValueError(f"degenerate box ({self.x_min},{self.y_min},{self.x_max},{self.y_max})")

    @property
    def width(self) -> int:
        return self.x_max - self.x_min

    @property
    def height(self) -> int:
        return self.y_max - self.y_min

    @property
    def area(self) -> int:
        return self.width * self.height

    def clip(self, width: int, height: int) -> "BBox | None":
        """Intersect with a raster extent; None if nothing remains."""
        x0 = max(self.x_min, 0)
        y0 = max(self.y_min, 0)
        x1 = min(self.x_max, width)
        y1 = min(self.y_max, height)
        if x0 >= x1 or y0 >= y1:
            return None
        return BBox(x0, y0, x1, y1)

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.x_min, self.y_min, self.x_max, self.y_max)


@dataclass(frozen=True, eq=False)
class LabelRaster:
    """2-D class-ID image; ``data`` is (height, width) uint8, 255 = ignore."""

    data: np.ndarray

    def __post_init__(self) -> None:
        arr = np.ascontiguousarray(np.asarray(self.data, dtype=np.uint8))
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"label raster must be 2-D and non-empty, got shape {arr.shape}")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, LabelRaster):
            return NotImplemented
        return np.array_equal(self.data, other.data)


@dataclass(frozen=True, eq=False)
class ConfidenceRaster:
    """Per-pixel confidence weights in [0, 1]; float32 so file I/O is exact."""

    data: np.ndarray

    def __post_init__(self) -> None:
        arr = np.ascontiguousarray(np.asarray(self.data, dtype=np.float32))
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"confidence raster must be 2-D and non-empty, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)) or arr.min() < 0.0 or arr.max() > 1.0:
            raise ValueError("confidence values must be finite and within [0, 1]")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ConfidenceRaster):
            return NotImplemented
        return np.array_equal(self.data, other.data)


def constant_confidence(width: int, height: int, value: float = 1.0) -> ConfidenceRaster:
    """Confidence raster filled with a single value."""
    return ConfidenceRaster(np.full((height, width), np.float32(value), dtype=np.float32))


# ---------------------------------------------------------------------------
# file format


def write_raster(raster: LabelRaster) -> bytes:
    """Serialize a label raster (magic CSIL, version, u32 LE dims, row-major bytes)."""
    header = _HEADER.pack(LABEL_MAGIC, FORMAT_VERSION, raster.width, raster.height)
    return header + raster.data.tobytes()


def read_raster(blob: bytes) -> LabelRaster:
    """Parse bytes produced by :func:`write_raster`; strict about length."""
    width, height = _read_header(blob, LABEL_MAGIC)
    expected = _HEADER.size + width * height
    if len(blob) != expected:
        raise RasterFormatError(f"payload length {len(blob) - _HEADER.size} != {width * height}")
    data = np.frombuffer(blob, dtype=np.uint8, count=width * height, offset=_HEADER.size)
    return LabelRaster(data.reshape(height, width).copy())


def write_confidence(raster: ConfidenceRaster) -> bytes:
    """Serialize a confidence raster (magic CSIF, float32 LE payload)."""
    header = _HEADER.pack(CONFIDENCE_MAGIC, FORMAT_VERSION, raster.width, raster.height)
    return header + raster.data.astype("<f4").tobytes()


def read_confidence(blob: bytes) -> ConfidenceRaster:
    """Parse bytes produced by :func:`write_confidence`."""
    width, height = _read_header(blob, CONFIDENCE_MAGIC)
    expected = _HEADER.size + 4 * width * height
    if len(blob) != expected:
        raise RasterFormatError(f"payload length {len(blob) - _HEADER.size} != {4 * width * height}")
    data = np.frombuffer(blob, dtype="<f4", count=width * height, offset=_HEADER.size)
    try:
        return ConfidenceRaster(data.reshape(height, width).copy())
    except ValueError as exc:
        raise RasterFormatError(str(exc)) from exc


def _read_header(blob: bytes, magic: bytes) -> tuple[int, int]:
    if len(blob) < _HEADER.size:
        raise RasterFormatError(f"file too short for header ({len(blob)} bytes)")
    got_magic, version, width, height = _HEADER.unpack_from(blob)
    if got_magic != magic:
        raise RasterFormatError(f"bad magic {got_magic!r}, expected {magic!r}")
    if version != FORMAT_VERSION:
        raise RasterFormatError(f"unsupported version {version}")
    if width < 1 or height < 1:
        raise RasterFormatError(f"invalid dimensions {width}x{height}")
    return width, height


# ---------------------------------------------------------------------------
# spatial operations


def crop(raster: LabelRaster, box: BBox) -> LabelRaster:
    """Copy the sub-raster covered by ``box``; the box must be in bounds."""
    _check_bounds(raster, box)
    return LabelRaster(raster.data[box.y_min:box.y_max, box.x_min:box.x_max].copy())


def crop_confidence(raster: ConfidenceRaster, box: BBox) -> ConfidenceRaster:
    _check_bounds(raster, box)
    return ConfidenceRaster(raster.data[box.y_min:box.y_max, box.x_min:box.x_max].copy())


def paste(dst: LabelRaster, src: LabelRaster, origin: tuple[int, int]) -> LabelRaster:
    """Return a copy of ``dst`` with ``src`` written at ``origin`` = (x, y)."""
    x, y = origin
    if x < 0 or y < 0 or x + src.width > dst.width or y + src.height > dst.height:
        raise ValueError(
            f"paste of {src.width}x{src.height} at ({x},{y}) overflows {dst.width}x{dst.height}"
        )
    out = dst.data.copy()
    out[y:y + src.height, x:x + src.width] = src.data
    return LabelRaster(out)


def class_histogram(raster: LabelRaster) -> dict[int, int]:
    """Pixel counts per class ID over non-ignore pixels."""
    counts = np.bincount(raster.data.ravel(), minlength=256)
    return {cid: int(n) for cid, n in enumerate(counts) if n > 0 and cid != IGNORE_ID}


def connected_components(raster: LabelRaster, class_id: int) -> list[BBox]:
    """Tight bounding boxes of the 4-connected components of ``class_id``.

    Boxes are ordered by scanline discovery (first pixel in row-major order).
    """
    mask = raster.data == class_id
    labels, count = ndimage.label(mask, structure=_CROSS)
    if count == 0:
        return []
    slices = ndimage.find_objects(labels)
    flat = labels.ravel()
    first_seen = np.full(count + 1, flat.size, dtype=np.int64)
    nonzero = np.flatnonzero(flat)
    np.minimum.at(first_seen, flat[nonzero], nonzero)
    order = np.argsort(first_seen[1:], kind="stable")
    boxes = []
    for label_index in order:
        rows, cols = slices[label_index]
        boxes.append(BBox(cols.start, rows.start, cols.stop, rows.stop))
    return boxes


def _check_bounds(raster: LabelRaster | ConfidenceRaster, box: BBox) -> None:
    if box.x_max > raster.width or box.y_max > raster.height:
        raise ValueError(
            f"box {box.as_tuple()} exceeds raster extent {raster.width}x{raster.height}"
        )
