"""
Campaign-level statistics over many photoconductance measurements.
"""

import logging
from pathlib import Path
from typing import Sequence, Union

import numpy as np
import pandas as pd
from scipy import stats

from analysis.photoconductance import MeasurementRecord
from config import INHOMOGENEITY_FRACTION
from errors import MeasurementError

logger = logging.getLogger(__name__)

MEASUREMENT_COLUMNS = ["segment_id", "pose_index", "composition_x", "G_ph", "fit_r2", "x_px", "y_px"]


def records_table(records: Sequence[MeasurementRecord]) -> pd.DataFrame:
    rows = [
        {
            "segment_id": r.segment_id,
            "pose_index": r.pose_index,
            "composition_x": r.composition_x,
            "G_ph": r.G_ph,
            "fit_r2": r.fit_r2,
            "x_px": r.x_px,
            "y_px": r.y_px,
        }
        for r in records
    ]
    return pd.DataFrame(rows, columns=MEASUREMENT_COLUMNS)


def _describe(groups, fraction: float) -> pd.DataFrame:
    g = groups["G_ph"]
    table = pd.DataFrame(
        {
            "count": g.count(),
            "median_G_ph": g.median(),
            "q25_G_ph": g.quantile(0.25),
            "q75_G_ph": g.quantile(0.75),
            "min_G_ph": g.min(),
            "max_G_ph": g.max(),
            "cv": (g.std(ddof=0) / g.mean()).fillna(0.0),
        }
    )
    table["inhomogeneous"] = table["min_G_ph"] < fraction * table["median_G_ph"]
    return table


def campaign_summary(
    records: Sequence[MeasurementRecord],
    inhomogeneity_fraction: float = INHOMOGENEITY_FRACTION,
) -> pd.DataFrame:
    """
    One row per composition: count, median, quartile spread, range,
    coefficient of variation and the inhomogeneity flag
    (min G_ph < inhomogeneity_fraction * median G_ph).
    """
    table = records_table(records)
    summary = _describe(table.groupby("composition_x", sort=True, dropna=False), inhomogeneity_fraction)
    return summary.reset_index()


def film_summary(
    records: Sequence[MeasurementRecord],
    inhomogeneity_fraction: float = INHOMOGENEITY_FRACTION,
) -> pd.DataFrame:
    """campaign_summary() per film (segment) instead of per composition."""
    table = records_table(records)
    groups = table.groupby("segment_id", sort=True)
    summary = _describe(groups, inhomogeneity_fraction)
    summary.insert(0, "composition_x", groups["composition_x"].first())
    flagged = int(summary["inhomogeneous"].sum())
    if flagged:
        logger.info("%d film(s) flagged inhomogeneous", flagged)
    return summary.reset_index()


def composition_trend(summary: pd.DataFrame) -> float:
    """Spearman rank correlation between composition and median G_ph."""
    data = summary.dropna(subset=["composition_x", "median_G_ph"])
    if len(data) < 2:
        raise MeasurementError("trend needs at least two compositions")
    rho = stats.spearmanr(data["composition_x"], data["median_G_ph"])[0]
    return float(rho) if np.isfinite(rho) else 0.0


def write_table(table: pd.DataFrame, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    table.to_csv(path, index=False, float_format="%.9g", lineterminator="\n")
    return path
