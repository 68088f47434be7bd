"""
Smoothed Scalar Fields

Gaussian-smoothed, max-normalized versions of segment masks (I') and the
debug raster format used to export them.
"""

import logging
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Tuple, Union

import numpy as np
from scipy import ndimage

from config import DEFAULT_SIGMA_PX, KERNEL_TRUNCATE
from errors import FieldError
from shapes.mask import SegmentMask

logger = logging.getLogger(__name__)

SFLD_MAGIC = b"SFLD"
_SFLD_HEADER = struct.Struct("<4sIIf")


@dataclass(frozen=True, eq=False)
class ScalarField:
    """
    Real-valued grid indexed [y, x].

    values are normalized to [0, 1]; raw_max is the pre-normalization peak, so
    values * raw_max recovers the absolute Gaussian-convolved scale.
    """

    values: np.ndarray
    sigma: float
    raw_max: float = 1.0
    segment_id: str = ""
    scale_mm_per_px: float = 1.0
    origin_mm: Tuple[float, float] = (0.0, 0.0)
    offset_px: Tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise FieldError(f"field must be 2D, got shape {values.shape}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def height(self) -> int:
        return int(self.values.shape[0])

    @property
    def width(self) -> int:
        return int(self.values.shape[1])

    @property
    def shape(self) -> Tuple[int, int]:
        return self.values.shape

    def raw(self) -> np.ndarray:
        return self.values * self.raw_max

    def sample(self, xs, ys) -> np.ndarray:
        """
        Bilinear field values at continuous (x, y); zero outside the grid.
        Integer coordinates return the stored pixel value.
        """
        xs = np.atleast_1d(np.asarray(xs, dtype=np.float64))
        ys = np.atleast_1d(np.asarray(ys, dtype=np.float64))
        return ndimage.map_coordinates(
            self.values, np.vstack([ys, xs]), order=1, mode="constant", cval=0.0
        )

    def measurable_bbox(self, tau: float) -> Tuple[int, int, int, int]:
        """
        (x_min, y_min, x_max, y_max) of the super-level set {values >= tau};
        the whole frame when that set is empty.
        """
        ys, xs = np.nonzero(self.values >= tau)
        if xs.size == 0:
            return 0, 0, self.width - 1, self.height - 1
        return int(xs.min()), int(ys.min()), int(xs.max()), int(ys.max())


def gaussian_blur(grid: np.ndarray, sigma: float) -> np.ndarray:
    """
    Convolve with the normalized 2D Gaussian, support truncated at +/-4 sigma
    and renormalized; zero padding at the borders.
    """
    if not sigma > 0:
        raise FieldError(f"sigma must be > 0, got {sigma}")
    return ndimage.gaussian_filter(
        np.asarray(grid, dtype=np.float64),
        sigma=sigma,
        mode="constant",
        cval=0.0,
        truncate=KERNEL_TRUNCATE,
    )


def smooth(mask: SegmentMask, sigma: float = DEFAULT_SIGMA_PX) -> ScalarField:
    """
    Produce the differentiable field I' of a segment.

    Args:
        mask: binary segment
        sigma: Gaussian std-dev in pixels

    Returns:
        ScalarField max-normalized to [0, 1] (raw peak kept in raw_max)

    Raises:
        FieldError: sigma <= 0
    """
    raw = gaussian_blur(mask.data, sigma)
    peak = float(raw.max())
    values = raw / peak if peak > 0 else raw
    return ScalarField(
        values=values,
        sigma=float(sigma),
        raw_max=peak,
        segment_id=mask.id,
        scale_mm_per_px=mask.scale_mm_per_px,
        origin_mm=mask.origin_mm,
        offset_px=mask.offset_px,
    )


def smooth_grid(grid: np.ndarray, sigma: float, segment_id: str = "") -> ScalarField:
    """smooth() for a bare grid, including the all-zero grid (returns zeros)."""
    raw = gaussian_blur(grid, sigma)
    peak = float(raw.max())
    values = raw / peak if peak > 0 else raw
    return ScalarField(values=values, sigma=float(sigma), raw_max=peak, segment_id=segment_id)


# ============================================================================
# SFLD RASTER I/O
# ============================================================================


def write_sfld(field: ScalarField, path: Union[str, Path]) -> Path:
    """
    Write a field as SFLD: 16-byte little-endian header
    (magic "SFLD", u32 width, u32 height, f32 sigma) then float32 rows.
    """
    return write_sfld_grid(field.values, field.sigma, path)


def write_sfld_grid(grid: np.ndarray, sigma: float, path: Union[str, Path]) -> Path:
    """SFLD writer for any 2D grid; NaN cells are stored as-is."""
    grid = np.asarray(grid)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = _SFLD_HEADER.pack(SFLD_MAGIC, grid.shape[1], grid.shape[0], float(sigma))
    body = np.ascontiguousarray(grid, dtype="<f4").tobytes()
    path.write_bytes(header + body)
    return path


def read_sfld_grid(path: Union[str, Path]) -> Tuple[np.ndarray, float]:
    """Return (grid, sigma) from an SFLD file without field validation."""
    blob = Path(path).read_bytes()
    if len(blob) < _SFLD_HEADER.size:
        raise FieldError(f"truncated SFLD file: {path}")
    magic, width, height, sigma = _SFLD_HEADER.unpack_from(blob)
    if magic != SFLD_MAGIC:
        raise FieldError(f"bad SFLD magic in {path}: {magic!r}")
    expected = _SFLD_HEADER.size + 4 * width * height
    if len(blob) != expected:
        raise FieldError(f"SFLD size mismatch in {path}: {len(blob)} != {expected}")
    values = np.frombuffer(blob, dtype="<f4", offset=_SFLD_HEADER.size).reshape(height, width)
    return values.astype(np.float64), float(sigma)


def read_sfld(path: Union[str, Path]) -> ScalarField:
    values, sigma = read_sfld_grid(path)
    return ScalarField(values=values, sigma=sigma)
