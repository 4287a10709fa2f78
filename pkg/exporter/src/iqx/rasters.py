"""Raster loading and conversion toward network inputs.

CT slices arrive either as binary ``IQAI`` rasters (magic ``IQAI``,
u32 width, u32 height, u8 domain tag, then width*height little-endian
float32 values in row-major order) or as plain CSV grids of numbers.
Domain tag 0 marks raw Hounsfield units; tag 1 marks display-windowed
values already mapped onto [-1, 1].  CSV rasters carry no tag and are
treated as display-normalized.

Networks ingest intensities in [0, 1]: Hounsfield rasters are first
mapped onto [-1, 1] with a display window (values outside the window
saturate at the endpoints), then every raster is shifted from [-1, 1]
to [0, 1].  Channel replication and per-network standardization happen
later, in :mod:`iqx.networks`.
"""
from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import RasterError

IQAI_MAGIC = b"IQAI"
HU = "hu"
NORMALIZED = "normalized"

_HEADER = struct.Struct("<4sIIB")
_DOMAINS = {0: HU, 1: NORMALIZED}
_RANGE_TOL = 1e-6


@dataclass(frozen=True)
class Raster:
    """A 2-D float32 intensity grid plus the domain its values live in."""

    values: np.ndarray
    domain: str

    def __post_init__(self):
        arr = np.ascontiguousarray(self.values, dtype=np.float32)
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


def load_raster(path: str | Path) -> Raster:
    """Read a binary or CSV raster from disk.

    Files starting with the ``IQAI`` magic are parsed as binary
    rasters; anything else is parsed as CSV.  Values must be finite,
    and display-normalized rasters must lie in [-1, 1] (a tolerance of
    1e-6 absorbs serialization round-off before clamping).

    Raises:
        RasterError: missing file, malformed content, non-finite or
            out-of-range values.
    """
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise RasterError(f"cannot read raster {path}: {exc}") from None
    if data[:4] == IQAI_MAGIC:
        raster = _parse_binary(data, path)
    else:
        raster = _parse_csv(data, path)
    _validate(raster, path)
    return raster


def _parse_binary(data: bytes, path: Path) -> Raster:
    if len(data) < _HEADER.size:
        raise RasterError(f"{path}: truncated header")
    _, width, height, tag = _HEADER.unpack_from(data)
    if tag not in _DOMAINS:
        raise RasterError(f"{path}: unknown domain tag {tag}")
    if width < 1 or height < 1:
        raise RasterError(f"{path}: empty raster {width}x{height}")
    expected = _HEADER.size + 4 * width * height
    if len(data) != expected:
        raise RasterError(
            f"{path}: payload length {len(data)} does not match header "
            f"({expected})"
        )
    values = np.frombuffer(data, dtype="<f4", offset=_HEADER.size)
    return Raster(values.reshape(height, width), _DOMAINS[tag])


def _parse_csv(data: bytes, path: Path) -> Raster:
    rows: list[list[float]] = []
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError:
        raise RasterError(f"{path}: neither a binary raster nor text") from None
    for lineno, row in enumerate(csv.reader(text.splitlines()), start=1):
        cells = [c.strip() for c in row if c.strip() != ""]
        if not cells:
            continue
        try:
            rows.append([float(c) for c in cells])
        except ValueError as exc:
            raise RasterError(f"{path}:{lineno}: {exc}") from None
    if not rows:
        raise RasterError(f"{path}: no numeric rows")
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise RasterError(f"{path}: ragged rows (widths {sorted(widths)})")
    return Raster(np.array(rows, dtype=np.float32), NORMALIZED)


def _validate(raster: Raster, path: Path) -> None:
    if not np.all(np.isfinite(raster.values)):
        raise RasterError(f"{path}: raster contains non-finite values")
    if raster.domain == NORMALIZED:
        lo = float(raster.values.min())
        hi = float(raster.values.max())
        if lo < -1.0 - _RANGE_TOL or hi > 1.0 + _RANGE_TOL:
            raise RasterError(
                f"{path}: display-normalized values must lie in [-1, 1], "
                f"got [{lo}, {hi}]"
            )


def to_unit_interval(
    raster: Raster, window_center: float, window_width: float
) -> np.ndarray:
    """Map a raster into [0, 1] for network ingestion.

    Hounsfield rasters are windowed first: the interval
    [center - width/2, center + width/2] maps linearly onto [-1, 1]
    and values outside it saturate.  Display-normalized rasters are
    clamped to [-1, 1] (they are validated to be within round-off of
    that range at load time).  The [-1, 1] values are then shifted to
    [0, 1].  Returns a float32 array of the raster's shape.
    """
    vals = raster.values.astype(np.float64)
    if raster.domain == HU:
        vals = (vals - window_center) / (window_width / 2.0)
    vals = np.clip(vals, -1.0, 1.0)
    return ((vals + 1.0) / 2.0).astype(np.float32)
