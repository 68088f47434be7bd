"""
Segment Masks

Binary film segments ingested from 8-bit grayscale rasters (PGM or PNG).
Segmentation itself happens upstream; this module only reads, validates and
writes masks together with their physical placement metadata.
"""

import csv
import io
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Sequence, Tuple, Union

import numpy as np
from PIL import Image, UnidentifiedImageError

from config import DEFAULT_SCALE_MM_PER_PX
from errors import MaskError

logger = logging.getLogger(__name__)

# PIL modes accepted: 8-bit grayscale and bilevel
_GRAYSCALE_MODES = {"L", "1"}


@dataclass(frozen=True, eq=False)
class SegmentMask:
    """
    One film segment.

    data is a (height, width) uint8 grid with 1 = film, 0 = background.
    origin_mm is the robot-plane position of pixel (0, 0); offset_px places
    the crop inside the full camera frame (used when a calibration is applied).
    """

    data: np.ndarray
    id: str
    scale_mm_per_px: float = DEFAULT_SCALE_MM_PER_PX
    origin_mm: Tuple[float, float] = (0.0, 0.0)
    offset_px: Tuple[float, float] = (0.0, 0.0)
    source: str = field(default="", compare=False)

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 2:
            raise MaskError(f"mask {self.id}: expected a 2D grid, got shape {data.shape}")
        binary = (data != 0).astype(np.uint8)
        if not binary.any():
            raise MaskError(f"empty mask: {self.id}")
        if not self.scale_mm_per_px > 0:
            raise MaskError(f"mask {self.id}: scale_mm_per_px must be > 0")
        binary.setflags(write=False)
        object.__setattr__(self, "data", binary)

    @property
    def height(self) -> int:
        return int(self.data.shape[0])

    @property
    def width(self) -> int:
        return int(self.data.shape[1])

    @property
    def area_px(self) -> int:
        return int(self.data.sum())

    def bounding_box(self) -> Tuple[int, int, int, int]:
        """(x_min, y_min, x_max, y_max) of the set pixels, inclusive."""
        ys, xs = np.nonzero(self.data)
        return int(xs.min()), int(ys.min()), int(xs.max()), int(ys.max())

    def centroid(self) -> Tuple[float, float]:
        ys, xs = np.nonzero(self.data)
        return float(xs.mean()), float(ys.mean())


def _decode(source, label: str) -> np.ndarray:
    try:
        with Image.open(source) as img:
            img.load()
            mode = img.mode
            if mode not in _GRAYSCALE_MODES:
                raise MaskError(f"non-grayscale or non-8-bit input ({mode}): {label}")
            return np.array(img)
    except (OSError, UnidentifiedImageError) as e:
        raise MaskError(f"unreadable file {label}: {e}") from e


def load_mask(
    path: Union[str, Path],
    scale_mm_per_px: float = DEFAULT_SCALE_MM_PER_PX,
    segment_id: str = None,
    origin_mm: Tuple[float, float] = (0.0, 0.0),
    offset_px: Tuple[float, float] = (0.0, 0.0),
) -> SegmentMask:
    """
    Read a grayscale raster and return its binary mask.

    Args:
        path: PGM (P5) or PNG file; nonzero pixels belong to the segment
        scale_mm_per_px: physical pixel pitch
        segment_id: defaults to the file stem

    Raises:
        MaskError: unreadable file, non-grayscale input or empty mask
    """
    path = Path(path)
    mask = SegmentMask(
        data=_decode(path, str(path)),
        id=segment_id or path.stem,
        scale_mm_per_px=scale_mm_per_px,
        origin_mm=tuple(origin_mm),
        offset_px=tuple(offset_px),
        source=str(path),
    )
    logger.debug("Loaded mask %s (%dx%d, %d px set)", mask.id, mask.width, mask.height, mask.area_px)
    return mask


def mask_from_bytes(content: bytes, segment_id: str, scale_mm_per_px: float = DEFAULT_SCALE_MM_PER_PX) -> SegmentMask:
    """load_mask() for an in-memory raster (uploads)."""
    data = _decode(io.BytesIO(content), segment_id)
    return SegmentMask(data=data, id=segment_id, scale_mm_per_px=scale_mm_per_px, source="upload")


def write_mask(mask: SegmentMask, path: Union[str, Path]) -> Path:
    """Write a mask as an 8-bit raster (255 = film); format follows the suffix."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray((mask.data * 255).astype(np.uint8), mode="L").save(path)
    return path


# ============================================================================
# PLACEMENTS
# ============================================================================

PLACEMENT_FIELDS = ["segment_id", "scale_mm_per_px", "origin_x_mm", "origin_y_mm", "offset_x_px", "offset_y_px"]


def write_placements(masks: Sequence[SegmentMask], path: Union[str, Path]) -> Path:
    """Placement metadata that a raster alone cannot carry, one row per mask."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=PLACEMENT_FIELDS, lineterminator="\n")
        writer.writeheader()
        for m in masks:
            writer.writerow(
                {
                    "segment_id": m.id,
                    "scale_mm_per_px": repr(m.scale_mm_per_px),
                    "origin_x_mm": repr(float(m.origin_mm[0])),
                    "origin_y_mm": repr(float(m.origin_mm[1])),
                    "offset_x_px": repr(float(m.offset_px[0])),
                    "offset_y_px": repr(float(m.offset_px[1])),
                }
            )
    return path


def read_placements(path: Union[str, Path]) -> Dict[str, dict]:
    """segment_id -> load_mask() keyword arguments."""
    path = Path(path)
    placements = {}
    try:
        with open(path, "r", newline="") as f:
            for row in csv.DictReader(f):
                placements[row["segment_id"]] = {
                    "scale_mm_per_px": float(row["scale_mm_per_px"]),
                    "origin_mm": (float(row["origin_x_mm"]), float(row["origin_y_mm"])),
                    "offset_px": (float(row["offset_x_px"]), float(row["offset_y_px"])),
                }
    except (OSError, KeyError, ValueError) as e:
        raise MaskError(f"cannot read placements {path}: {e}") from e
    return placements
