"""
Photoconductance from paired light/dark IV sweeps.

G_ph is the least-squares slope of I_ph = I_light - I_dark against V. The
intercept is fitted and discarded by default (it absorbs instrument offsets);
fit_intercept=False forces the line through the origin.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy import stats

from config import SWEEP_POINTS, SWEEP_V_MAX, SWEEP_V_MIN
from errors import MeasurementError

logger = logging.getLogger(__name__)


def default_voltages() -> np.ndarray:
    return np.linspace(SWEEP_V_MIN, SWEEP_V_MAX, SWEEP_POINTS)


@dataclass(frozen=True, eq=False)
class IVRecord:
    voltages: np.ndarray
    current_light: np.ndarray
    current_dark: np.ndarray
    segment_id: str = ""
    pose_index: Optional[int] = None

    def __post_init__(self):
        arrays = []
        for name in ("voltages", "current_light", "current_dark"):
            arr = np.asarray(getattr(self, name), dtype=np.float64).ravel()
            if not np.all(np.isfinite(arr)):
                raise MeasurementError(f"{name} contains non-finite values")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
            arrays.append(arr)
        v, light, dark = arrays
        if not len(v) == len(light) == len(dark):
            raise MeasurementError(
                f"array lengths differ (V={len(v)}, light={len(light)}, dark={len(dark)})"
            )
        if len(v) < 2:
            raise MeasurementError(f"need at least 2 points, got {len(v)}")
        step = np.diff(v)
        if np.all(step == 0):
            raise MeasurementError("zero voltage span")
        if not (np.all(step > 0) or np.all(step < 0)):
            raise MeasurementError("voltages must be strictly monotonic")

    @property
    def photocurrent(self) -> np.ndarray:
        return self.current_light - self.current_dark


@dataclass
class MeasurementRecord:
    segment_id: str
    pose_index: Optional[int]
    G_ph: float
    fit_r2: float
    composition_x: Optional[float] = None
    x_px: Optional[float] = None
    y_px: Optional[float] = None


def photoconductance(rec: IVRecord, fit_intercept: bool = True) -> Tuple[float, float]:
    """
    (G_ph in siemens, r^2 of the fit). r^2 is 0 when I_ph is constant.
    """
    v = rec.voltages
    i_ph = rec.photocurrent
    if np.ptp(v) == 0:
        raise MeasurementError("zero voltage span")

    if fit_intercept:
        fit = stats.linregress(v, i_ph)
        slope = float(fit.slope)
        r2 = float(fit.rvalue) ** 2 if np.ptp(i_ph) > 0 else 0.0
    else:
        slope = float(np.dot(v, i_ph) / np.dot(v, v))
        ss_tot = float(np.dot(i_ph, i_ph))
        resid = i_ph - slope * v
        r2 = 1.0 - float(np.dot(resid, resid)) / ss_tot if ss_tot > 0 else 0.0
    return slope, float(np.clip(r2, 0.0, 1.0))


def measure(
    rec: IVRecord,
    composition_x: Optional[float] = None,
    fit_intercept: bool = True,
    x_px: Optional[float] = None,
    y_px: Optional[float] = None,
) -> MeasurementRecord:
    g_ph, r2 = photoconductance(rec, fit_intercept)
    return MeasurementRecord(rec.segment_id, rec.pose_index, g_ph, r2, composition_x, x_px, y_px)
