"""Image container, CT preprocessing chain, patch extraction, and raster I/O.

Images are single-channel 2-D rasters stored as float32, tagged with the
intensity domain they live in: raw Hounsfield units (``Domain.HU``) or
display-windowed values mapped onto [-1, 1] (``Domain.NORMALIZED``).
Arithmetic is carried out in float64 and results are stored back as
float32.  Pixel buffers are frozen (non-writeable) so grids can be shared
across threads without copies.
"""
from __future__ import annotations

import csv
import enum
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DomainError, FileFormatError, ShapeError

IQAI_MAGIC = b"IQAI"

_HEADER = struct.Struct("<4sIIB")


class Domain(enum.Enum):
    """Intensity domain of a raster."""

    HU = 0
    NORMALIZED = 1


def _freeze(arr: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(arr, dtype=np.float32)
    if out is arr and arr.flags.writeable:
        out = arr.copy()
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class ImageGrid:
    """A 2-D float32 raster plus its intensity-domain tag.

    ``pixels`` has shape (height, width), row-major.  Values must be
    finite; normalized images must additionally lie in [-1, 1].
    """

    pixels: np.ndarray
    domain: Domain = Domain.NORMALIZED

    def __post_init__(self):
        arr = np.asarray(self.pixels)
        if arr.ndim != 2:
            raise ShapeError(f"image must be 2-D, got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ShapeError(f"image must be at least 1x1, got shape {arr.shape}")
        arr = _freeze(arr)
        if not np.all(np.isfinite(arr)):
            raise DomainError("image contains non-finite values")
        if self.domain is Domain.NORMALIZED:
            lo = float(arr.min())
            hi = float(arr.max())
            if lo < -1.0 or hi > 1.0:
                raise DomainError(
                    f"normalized image values must lie in [-1, 1], got [{lo}, {hi}]"
                )
        object.__setattr__(self, "pixels", arr)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.pixels.shape

    def values64(self) -> np.ndarray:
        """Pixels as a float64 working copy."""
        return self.pixels.astype(np.float64)


@dataclass(frozen=True)
class WindowSpec:
    """A CT display window given by its center and full width, in HU."""

    center: float
    width: float

    def __post_init__(self):
        if not (self.width > 0):
            raise DomainError(f"window width must be positive, got {self.width}")

    @property
    def low(self) -> float:
        return self.center - self.width / 2.0

    @property
    def high(self) -> float:
        return self.center + self.width / 2.0


@dataclass(frozen=True)
class PatchSet:
    """Patches cut from one image on a regular grid, in row-major order."""

    patch_size: int
    stride: int
    n_rows: int
    n_cols: int
    patches: tuple[ImageGrid, ...] = field(repr=False)

    def __len__(self) -> int:
        return len(self.patches)


def window_normalize(img: ImageGrid, window: WindowSpec) -> ImageGrid:
    """Map a display window onto [-1, 1], clamping values outside it.

    The interval [center - width/2, center + width/2] maps linearly onto
    [-1, 1]; anything below or above saturates at -1 or +1.

    Args:
        img: Hounsfield-unit image.
        window: display window to apply.

    Returns:
        A normalized image of the same size.

    Raises:
        DomainError: if ``img`` is not in the HU domain.
    """
    if img.domain is not Domain.HU:
        raise DomainError("window_normalize expects a Hounsfield-unit image")
    half = window.width / 2.0
    scaled = (img.values64() - window.center) / half
    out = np.clip(scaled.astype(np.float32), -1.0, 1.0)
    return ImageGrid(out, Domain.NORMALIZED)


def _sample_coords(n_in: int, n_out: int) -> np.ndarray:
    """Corner-aligned source coordinates for resampling one axis."""
    if n_out == 1 or n_in == 1:
        return np.zeros(n_out, dtype=np.float64)
    return np.arange(n_out, dtype=np.float64) * ((n_in - 1) / (n_out - 1))


def resize_bilinear(img: ImageGrid, width: int, height: int) -> ImageGrid:
    """Resample to ``width`` x ``height`` with corner-aligned bilinear weights.

    The four corner pixels of the output reproduce the input corners
    exactly.  A same-size call returns a copy unchanged.
    """
    if width < 1 or height < 1:
        raise ShapeError(f"target size must be at least 1x1, got {width}x{height}")
    if (width, height) == (img.width, img.height):
        return ImageGrid(img.pixels.copy(), img.domain)
    src = img.values64()
    xs = _sample_coords(img.width, width)
    ys = _sample_coords(img.height, height)
    x0 = np.floor(xs).astype(np.intp)
    y0 = np.floor(ys).astype(np.intp)
    x1 = np.minimum(x0 + 1, img.width - 1)
    y1 = np.minimum(y0 + 1, img.height - 1)
    fx = xs - x0
    fy = ys - y0
    top = src[np.ix_(y0, x0)] * (1.0 - fx) + src[np.ix_(y0, x1)] * fx
    bot = src[np.ix_(y1, x0)] * (1.0 - fx) + src[np.ix_(y1, x1)] * fx
    out = top * (1.0 - fy)[:, None] + bot * fy[:, None]
    out32 = out.astype(np.float32)
    if img.domain is Domain.NORMALIZED:
        out32 = np.clip(out32, -1.0, 1.0)
    return ImageGrid(out32, img.domain)


def preprocess(
    img: ImageGrid,
    window: WindowSpec | None = None,
    size: tuple[int, int] | None = None,
    resize_first: bool = False,
) -> ImageGrid:
    """Run the standard preparation chain: windowing and resizing.

    Windowing applies only to HU images; a normalized input passes
    through it untouched.  By default the window is applied before the
    resize; ``resize_first`` swaps the order.
    """
    steps = ["resize", "window"] if resize_first else ["window", "resize"]
    out = img
    for step in steps:
        if step == "window" and window is not None and out.domain is Domain.HU:
            out = window_normalize(out, window)
        elif step == "resize" and size is not None:
            out = resize_bilinear(out, size[0], size[1])
    return out


def extract_patches(img: ImageGrid, size: int, stride: int) -> PatchSet:
    """Cut square patches on a regular grid, top-left anchored.

    Patch origins run over ``0, stride, 2*stride, ...`` along each axis
    for as long as the full patch fits; partial patches at the borders
    are dropped.  Patches appear in row-major order of their origins.

    Raises:
        ShapeError: if ``size`` exceeds either image dimension, or
            ``size``/``stride`` is not positive.
    """
    if size < 1:
        raise ShapeError(f"patch size must be positive, got {size}")
    if stride < 1:
        raise ShapeError(f"patch stride must be positive, got {stride}")
    if size > img.height or size > img.width:
        raise ShapeError(
            f"patch size {size} exceeds image dimensions {img.width}x{img.height}"
        )
    n_rows = (img.height - size) // stride + 1
    n_cols = (img.width - size) // stride + 1
    patches = []
    for r in range(n_rows):
        y = r * stride
        for c in range(n_cols):
            x = c * stride
            patches.append(
                ImageGrid(img.pixels[y : y + size, x : x + size].copy(), img.domain)
            )
    return PatchSet(size, stride, n_rows, n_cols, tuple(patches))


def save_image(img: ImageGrid, path: str | Path) -> None:
    """Write an image to the binary raster format (IQAI).

    Layout: magic ``IQAI``, u32 width, u32 height, u8 domain tag
    (0 = HU, 1 = normalized), then width*height little-endian float32
    values in row-major order.
    """
    payload = img.pixels.astype("<f4", copy=False).tobytes()
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(IQAI_MAGIC, img.width, img.height, img.domain.value))
        fh.write(payload)


def load_image(path: str | Path) -> ImageGrid:
    """Read an image from the binary raster format (IQAI).

    Raises:
        FileFormatError: on a bad magic number, an unknown domain tag,
            or a payload whose length disagrees with the header.
    """
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise FileFormatError(f"{path}: truncated header")
    magic, width, height, tag = _HEADER.unpack_from(data)
    if magic != IQAI_MAGIC:
        raise FileFormatError(f"{path}: bad magic {magic!r}")
    try:
        domain = Domain(tag)
    except ValueError:
        raise FileFormatError(f"{path}: unknown domain tag {tag}") from None
    expected = _HEADER.size + 4 * width * height
    if len(data) != expected:
        raise FileFormatError(
            f"{path}: payload length {len(data)} does not match header ({expected})"
        )
    values = np.frombuffer(data, dtype="<f4", offset=_HEADER.size)
    return ImageGrid(values.reshape(height, width), domain)


def load_csv_image(path: str | Path, domain: Domain = Domain.NORMALIZED) -> ImageGrid:
    """Import a raster from a CSV file of numeric rows.

    Every row must hold the same number of values.  The intensity
    domain is not recorded in the file, so the caller supplies it.
    """
    rows: list[list[float]] = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            cells = [c.strip() for c in row if c.strip() != ""]
            if not cells:
                continue
            try:
                rows.append([float(c) for c in cells])
            except ValueError as exc:
                raise FileFormatError(f"{path}:{lineno}: {exc}") from None
    if not rows:
        raise FileFormatError(f"{path}: no numeric rows")
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise FileFormatError(f"{path}: ragged rows (widths {sorted(widths)})")
    return ImageGrid(np.array(rows, dtype=np.float32), domain)


def image_from_values(
    values: Sequence[float] | np.ndarray,
    width: int,
    height: int,
    domain: Domain = Domain.NORMALIZED,
) -> ImageGrid:
    """Build a grid from a flat row-major value sequence."""
    arr = np.asarray(values, dtype=np.float32)
    if arr.size != width * height:
        raise ShapeError(
            f"expected {width * height} values for {width}x{height}, got {arr.size}"
        )
    return ImageGrid(arr.reshape(height, width), domain)
