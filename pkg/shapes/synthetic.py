"""
Synthetic Film Arrays

Convex test segments and drop-cast style film arrays for desk-scale runs:
disks, ellipses, a 35-film array on a jittered grid in a 100 x 150 mm plane,
and clustered point sets for planner benchmarks.
"""

import math
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np

from shapes.mask import SegmentMask, write_mask


def disk_grid(size: int, radius: float, center: Optional[Tuple[float, float]] = None) -> np.ndarray:
    """Rasterized disk: pixel centres within radius of center (default: frame centre)."""
    return ellipse_grid(size, size, radius, radius, 0.0, center)


def ellipse_grid(
    width: int,
    height: int,
    a: float,
    b: float,
    angle: float = 0.0,
    center: Optional[Tuple[float, float]] = None,
) -> np.ndarray:
    cx, cy = center if center is not None else ((width - 1) / 2.0, (height - 1) / 2.0)
    ys, xs = np.mgrid[0:height, 0:width].astype(np.float64)
    dx, dy = xs - cx, ys - cy
    c, s = math.cos(angle), math.sin(angle)
    u = c * dx + s * dy
    v = -s * dx + c * dy
    return ((u / a) ** 2 + (v / b) ** 2 <= 1.0).astype(np.uint8)


def disk_mask(size: int = 64, radius: float = 20.0, segment_id: str = "disk", **meta) -> SegmentMask:
    return SegmentMask(data=disk_grid(size, radius), id=segment_id, **meta)


def convex_segments(
    count: int,
    seed: int = 0,
    size: int = 72,
    axis_range: Tuple[float, float] = (18.0, 26.0),
) -> List[SegmentMask]:
    """Random ellipses, each centred in its own size x size crop."""
    rng = np.random.default_rng(seed)
    masks = []
    for i in range(count):
        a, b = rng.uniform(*axis_range, size=2)
        angle = rng.uniform(0.0, math.pi)
        masks.append(
            SegmentMask(data=ellipse_grid(size, size, a, b, angle), id=f"seg{i:03d}")
        )
    return masks


def film_array(
    count: int = 35,
    seed: int = 0,
    crop_px: int = 72,
    scale_mm_per_px: float = 0.1,
    plane_mm: Tuple[float, float] = (100.0, 150.0),
    columns: int = 5,
    margin_mm: float = 8.0,
) -> List[SegmentMask]:
    """
    Drop-cast array: count convex films on a jittered grid.

    Each mask is a crop of crop_px pixels; origin_mm is the robot-plane
    position of the crop's pixel (0, 0) and offset_px its position in a
    virtual camera frame with the same pitch.
    """
    rng = np.random.default_rng(seed)
    rows = int(math.ceil(count / columns))
    width_mm, height_mm = plane_mm
    crop_mm = crop_px * scale_mm_per_px
    pitch_x = (width_mm - 2 * margin_mm) / columns
    pitch_y = (height_mm - 2 * margin_mm) / rows
    jitter = 0.15 * min(pitch_x, pitch_y)

    masks = []
    for i in range(count):
        r, c = divmod(i, columns)
        cx = margin_mm + (c + 0.5) * pitch_x + rng.uniform(-jitter, jitter)
        cy = margin_mm + (r + 0.5) * pitch_y + rng.uniform(-jitter, jitter)
        a, b = rng.uniform(0.25 * crop_px, 0.36 * crop_px, size=2)
        angle = rng.uniform(0.0, math.pi)
        origin = (cx - crop_mm / 2.0, cy - crop_mm / 2.0)
        masks.append(
            SegmentMask(
                data=ellipse_grid(crop_px, crop_px, a, b, angle),
                id=f"film{i:02d}",
                scale_mm_per_px=scale_mm_per_px,
                origin_mm=origin,
                offset_px=(origin[0] / scale_mm_per_px, origin[1] / scale_mm_per_px),
            )
        )
    return masks


def write_film_array(masks: List[SegmentMask], directory, suffix: str = ".pgm") -> List[Path]:
    directory = Path(directory)
    return [write_mask(m, directory / f"{m.id}{suffix}") for m in masks]


def film_centres(
    rng: np.random.Generator,
    clusters: int = 35,
    plane_mm: Tuple[float, float] = (100.0, 150.0),
    columns: int = 5,
) -> np.ndarray:
    """Film centres of an array: a grid over plane_mm with jitter. (clusters, 2) mm."""
    rows = int(math.ceil(clusters / columns))
    width_mm, height_mm = plane_mm
    pitch_x, pitch_y = width_mm / columns, height_mm / rows
    jitter = 0.2 * min(pitch_x, pitch_y)
    centres = []
    for i in range(clusters):
        r, c = divmod(i, columns)
        centres.append(
            ((c + 0.5) * pitch_x + rng.uniform(-jitter, jitter), (r + 0.5) * pitch_y + rng.uniform(-jitter, jitter))
        )
    return np.asarray(centres)


def clustered_points(
    rng: np.random.Generator,
    clusters: int = 35,
    per_cluster: int = 3,
    plane_mm: Tuple[float, float] = (100.0, 150.0),
    cluster_radius_mm: float = 2.5,
    columns: int = 5,
    centres: Optional[np.ndarray] = None,
) -> np.ndarray:
    """
    Contact points of a film array: a few points scattered inside each film.
    centres fixes the array layout; when omitted it is drawn from rng first.
    Returns (clusters * per_cluster, 2) mm.
    """
    if centres is None:
        centres = film_centres(rng, clusters, plane_mm, columns)
    points = []
    for cx, cy in centres:
        for _ in range(per_cluster):
            rad = cluster_radius_mm * math.sqrt(rng.uniform())
            ang = rng.uniform(0.0, 2 * math.pi)
            points.append((cx + rad * math.cos(ang), cy + rad * math.sin(ang)))
    return np.asarray(points)

