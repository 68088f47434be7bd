"""
Gaussian-interpolated property maps over a segment.

Nadaraya-Watson regression: grid(p) = sum_i w_i(p) G_i / sum_i w_i(p) with
w_i(p) = exp(-|p - p_i|^2 / (2 bw^2)), evaluated at pixel centres of the
mask's bounding box and masked to the segment (NaN outside).
"""

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import softmax

from errors import MeasurementError
from shapes.field import write_sfld_grid
from shapes.mask import SegmentMask

logger = logging.getLogger(__name__)

Sample = Tuple[float, float, float]


@dataclass(frozen=True, eq=False)
class SpatialMap:
    grid: np.ndarray
    bandwidth: float
    mask: SegmentMask
    origin_px: Tuple[int, int]
    samples: List[Sample]

    def value_range(self) -> Tuple[float, float]:
        return float(np.nanmin(self.grid)), float(np.nanmax(self.grid))


def _as_samples(samples) -> np.ndarray:
    """Accept (x, y, G) triples or (pose, G) pairs with pose.x / pose.y."""
    rows = []
    for s in samples:
        if len(s) == 2:
            pose, g = s
            rows.append((float(pose.x), float(pose.y), float(g)))
        else:
            x, y, g = s
            rows.append((float(x), float(y), float(g)))
    return np.asarray(rows, dtype=np.float64).reshape(-1, 3)


def default_bandwidth(points: np.ndarray) -> float:
    """Mean pairwise distance between sample locations (1 px if undefined)."""
    if len(points) < 2:
        return 1.0
    diff = points[:, None, :] - points[None, :, :]
    dist = np.sqrt((diff * diff).sum(axis=-1))
    mean = float(dist[np.triu_indices(len(points), 1)].mean())
    return mean if mean > 0 else 1.0


def nadaraya_watson(xs, ys, samples: np.ndarray, bandwidth: float) -> np.ndarray:
    """Kernel-weighted mean of sample values at (xs, ys), log-sum-exp stabilized."""
    q = np.column_stack([np.ravel(xs), np.ravel(ys)])
    d2 = ((q[:, None, :] - samples[None, :, :2]) ** 2).sum(axis=-1)
    weights = softmax(-d2 / (2.0 * bandwidth * bandwidth), axis=1)
    return weights @ samples[:, 2]


def spatial_map(samples: Sequence, mask: SegmentMask, bandwidth: Optional[float] = None) -> SpatialMap:
    data = _as_samples(samples)
    if len(data) == 0:
        raise MeasurementError("spatial_map needs at least one sample")
    bw = default_bandwidth(data[:, :2]) if bandwidth is None else float(bandwidth)
    if not bw > 0:
        raise MeasurementError(f"bandwidth must be > 0, got {bw}")

    x0, y0, x1, y1 = mask.bounding_box()
    ys, xs = np.mgrid[y0 : y1 + 1, x0 : x1 + 1].astype(np.float64)
    values = nadaraya_watson(xs, ys, data, bw).reshape(xs.shape)
    inside = mask.data[y0 : y1 + 1, x0 : x1 + 1] > 0
    grid = np.where(inside, values, np.nan)
    logger.debug("Map for %s: %d samples, bandwidth %.3f px", mask.id, len(data), bw)
    return SpatialMap(grid, bw, mask, (x0, y0), [tuple(map(float, r)) for r in data])


def write_map(smap: SpatialMap, path: Union[str, Path]) -> Path:
    """SFLD raster (sigma slot = bandwidth) plus a JSON sidecar next to it."""
    path = Path(path)
    write_sfld_grid(smap.grid, smap.bandwidth, path)
    sidecar = {
        "segment_id": smap.mask.id,
        "bandwidth_px": smap.bandwidth,
        "origin_px": list(smap.origin_px),
        "shape": list(smap.grid.shape),
        "samples": [{"x_px": x, "y_px": y, "G_ph": g} for x, y, g in smap.samples],
    }
    with open(path.with_suffix(".json"), "w") as f:
        json.dump(sidecar, f, indent=2)
        f.write("\n")
    return path
