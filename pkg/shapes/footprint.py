"""
Probe Poses and Footprints

A contact pose (x, y, theta) places a four-point-probe contact line on the
image. Its footprint is rendered as one isotropic Gaussian per tip, passed
through a rescaled sigmoid soft threshold. The same routines return the
analytic partials the pose loss needs.
"""

import math
from dataclasses import dataclass, replace
from typing import List, NamedTuple, Optional, Tuple

import numpy as np

from config import (
    DEFAULT_STEEPNESS,
    DEFAULT_TIP_COUNT,
    DEFAULT_TIP_RADIUS_PX,
    DEFAULT_TIP_SPACING_PX,
    WINDOW_SIGMAS,
)
from errors import FieldError
from shapes.field import ScalarField


@dataclass(frozen=True)
class ProbeFootprint:
    tip_count: int = DEFAULT_TIP_COUNT
    tip_spacing_px: float = DEFAULT_TIP_SPACING_PX
    tip_radius_px: float = DEFAULT_TIP_RADIUS_PX

    def __post_init__(self):
        if self.tip_count < 1:
            raise FieldError("tip_count must be >= 1")
        if self.tip_spacing_px < 0:
            raise FieldError("tip_spacing_px must be >= 0")
        if not self.tip_radius_px > 0:
            raise FieldError("tip_radius_px must be > 0")

    def offsets(self) -> np.ndarray:
        """Signed tip offsets along the contact line, centred on the pose."""
        idx = np.arange(self.tip_count, dtype=np.float64)
        return (idx - (self.tip_count - 1) / 2.0) * self.tip_spacing_px

    @property
    def half_span_px(self) -> float:
        return (self.tip_count - 1) * self.tip_spacing_px / 2.0


def normalize_angle(theta: float) -> float:
    """Map an angle to [0, pi); a contact line is symmetric under 180 degrees."""
    wrapped = math.fmod(theta, math.pi)
    if wrapped < 0:
        wrapped += math.pi
    if wrapped >= math.pi:
        wrapped = 0.0
    return wrapped


@dataclass(frozen=True)
class Pose:
    x: float
    y: float
    theta: float
    footprint: ProbeFootprint = ProbeFootprint()

    def __post_init__(self):
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "theta", normalize_angle(float(self.theta)))

    def clamped(self, width: int, height: int) -> "Pose":
        """Keep the centre inside [0, width) x [0, height)."""
        x = min(max(self.x, 0.0), math.nextafter(width, 0.0))
        y = min(max(self.y, 0.0), math.nextafter(height, 0.0))
        return replace(self, x=x, y=y)

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.theta])


def tip_positions(pose: Pose) -> List[Tuple[float, float]]:
    """Tip coordinates: the canonical layout rotated by theta about (x, y)."""
    offsets = pose.footprint.offsets()
    c, s = math.cos(pose.theta), math.sin(pose.theta)
    return [(pose.x + o * c, pose.y + o * s) for o in offsets]


# ============================================================================
# SOFT THRESHOLD
# ============================================================================


def _sigmoid(u):
    return 0.5 * (1.0 + np.tanh(0.5 * u))


def soft_threshold(z, steepness: float = DEFAULT_STEEPNESS):
    """
    Sigmoid centred at 1/2 and rescaled so that 0 maps to 0 and the output
    stays below 1 for every z >= 0.
    """
    s0 = _sigmoid(-0.5 * steepness)
    return (_sigmoid(steepness * (np.asarray(z) - 0.5)) - s0) / (1.0 - s0)


def soft_threshold_grad(z, steepness: float = DEFAULT_STEEPNESS):
    s0 = _sigmoid(-0.5 * steepness)
    s = _sigmoid(steepness * (np.asarray(z) - 0.5))
    return steepness * s * (1.0 - s) / (1.0 - s0)


# ============================================================================
# TIP GAUSSIANS
# ============================================================================


class TipField(NamedTuple):
    z: np.ndarray
    dz_dx: np.ndarray
    dz_dy: np.ndarray
    dz_dtheta: np.ndarray


def footprint_window(pose: Pose, dims: Tuple[int, int], sigma: float) -> Tuple[slice, slice]:
    """
    (rows, cols) slices of the (height, width) grid holding every pixel within
    WINDOW_SIGMAS * sigma of a tip along both axes; empty when the pose is far
    off the grid.
    """
    height, width = dims
    reach = pose.footprint.half_span_px + WINDOW_SIGMAS * sigma
    x0 = min(width, max(0, math.floor(pose.x - reach)))
    x1 = max(x0, min(width, math.ceil(pose.x + reach) + 1))
    y0 = min(height, max(0, math.floor(pose.y - reach)))
    y1 = max(y0, min(height, math.ceil(pose.y + reach) + 1))
    return slice(y0, y1), slice(x0, x1)


def tip_field(
    pose: Pose,
    dims: Tuple[int, int],
    sigma: float,
    with_grad: bool = True,
    window: Optional[Tuple[slice, slice]] = None,
) -> TipField:
    """
    Sum of tip Gaussians exp(-|p - c_t|^2 / (2 sigma^2)) over the grid, with
    partials in the pose parameters when with_grad is set.

    dims is (height, width). With a window only that part of the grid is
    evaluated and every returned array has the window's shape. Each Gaussian
    factors into a row profile times a column profile, so the sums over tips
    are (tips x rows)^T @ (tips x cols) products.
    """
    height, width = dims
    rows, cols = window if window is not None else (slice(0, height), slice(0, width))
    xs = np.arange(width, dtype=np.float64)[cols]
    ys = np.arange(height, dtype=np.float64)[rows]
    offsets = pose.footprint.offsets()
    c, s = math.cos(pose.theta), math.sin(pose.theta)
    inv_var = 1.0 / (sigma * sigma)

    dx = xs[None, :] - (pose.x + offsets * c)[:, None]
    dy = ys[None, :] - (pose.y + offsets * s)[:, None]
    gx = np.exp(-0.5 * dx * dx * inv_var)
    gy = np.exp(-0.5 * dy * dy * inv_var)
    z = gy.T @ gx
    if not with_grad:
        return TipField(z, None, None, None)

    hx = gx * dx * inv_var
    hy = gy * dy * inv_var
    lever = offsets[:, None]
    dz_dx = gy.T @ hx
    dz_dy = hy.T @ gx
    dz_dtheta = c * ((hy * lever).T @ gx) - s * (gy.T @ (hx * lever))
    return TipField(z, dz_dx, dz_dy, dz_dtheta)


def render_footprint(
    pose: Pose,
    field_dims: Tuple[int, int],
    sigma: float,
    steepness: float = DEFAULT_STEEPNESS,
) -> ScalarField:
    """
    Render a pose footprint on a (height, width) grid.

    Each tip contributes an isotropic Gaussian of std sigma; the sum goes
    through the soft threshold, so values stay in [0, 1]. With one tip this is
    exactly the single-Gaussian composition. Tips outside the grid are still
    rendered (validity is judged separately).
    """
    if not sigma > 0:
        raise FieldError(f"sigma must be > 0, got {sigma}")
    tips = tip_field(pose, field_dims, sigma, with_grad=False)
    return ScalarField(values=soft_threshold(tips.z, steepness), sigma=float(sigma))
