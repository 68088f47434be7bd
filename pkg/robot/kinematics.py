"""
Single-pivot end-effector kinematics.

The probe sits at the end of an arm of length R0 that rotates about a pivot on
the gantry head. The commanded XY (the effector target) is the point the
contact would occupy at theta = 0; rotating by theta swings the contact on a
circle of radius R0 about the pivot, so the target has to be shifted back.

Angles cross this boundary in degrees and are converted to radians inside.
"""

import math
from dataclasses import dataclass
from typing import Tuple

from config import DEFAULT_R0_MM
from errors import CalibrationError, MeasurementError


@dataclass(frozen=True)
class EffectorGeometry:
    R0: float = DEFAULT_R0_MM

    def __post_init__(self):
        if not self.R0 > 0:
            raise CalibrationError(f"R0 must be > 0, got {self.R0}")


def effector_target(x0: float, y0: float, theta0_deg: float, geom: EffectorGeometry) -> Tuple[float, float, float]:
    """
    Gantry target that lands the contact on (x0, y0) at angle theta0.

        x_t = x0 - R0 * cos(90 - theta0) = x0 - R0 * sin(theta0)
        y_t = y0 - R0 + R0 * sin(90 - theta0) = y0 - R0 * (1 - cos(theta0))

    The second form keeps theta0 = 0 exact in floating point.
    """
    theta = math.radians(theta0_deg)
    x_t = x0 - geom.R0 * math.sin(theta)
    y_t = y0 - geom.R0 * (1.0 - math.cos(theta))
    return x_t, y_t, theta0_deg


def pivot_point(x_t: float, y_t: float, geom: EffectorGeometry) -> Tuple[float, float]:
    return x_t, y_t + geom.R0


def contact_point(x_t: float, y_t: float, theta_deg: float, geom: EffectorGeometry) -> Tuple[float, float]:
    """Forward model: rotate the arm (0, -R0) about the pivot by theta."""
    px, py = pivot_point(x_t, y_t, geom)
    theta = math.radians(theta_deg)
    return px + geom.R0 * math.sin(theta), py - geom.R0 * math.cos(theta)


def led_spacing(d1: float, D: float) -> float:
    """
    Distance of the two side LEDs from the centre point so their intensity
    at the film matches the centre LED's: d2 = d3 = sqrt(d1^2 - D^2).
    """
    if D < 0:
        raise MeasurementError(f"D must be >= 0, got {D}")
    if d1 <= D:
        raise MeasurementError(f"d1 must exceed D (d1={d1}, D={D})")
    return math.sqrt(d1 * d1 - D * D)
