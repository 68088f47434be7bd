"""
Synthetic light/dark IV sweeps with a known conductance model.

    G(x)     = SYNTH_G_MIN_S * (SYNTH_G_MAX_S / SYNTH_G_MIN_S) ** x   (1e-9 * 10**x S by default)
    I_dark   = SYNTH_DARK_G_S * V
    I_light  = I_dark + quality * G(x) * V + noise

noise ~ N(0, (noise * max |quality * G(x) * V|)^2), drawn per point on the
light sweep only, so quality = 0 yields I_light == I_dark exactly.
"""

import logging
from typing import Dict, List, Optional, Sequence

import numpy as np

from analysis.photoconductance import IVRecord, default_voltages
from config import SYNTH_DARK_G_S, SYNTH_G_MAX_S, SYNTH_G_MIN_S, SYNTH_NOISE
from errors import MeasurementError

logger = logging.getLogger(__name__)


def conductance_model(composition_x: float) -> float:
    """True photoconductance (S) of a defect-free film at composition x."""
    return SYNTH_G_MIN_S * (SYNTH_G_MAX_S / SYNTH_G_MIN_S) ** composition_x


def synth_iv(
    composition_x: float,
    pose_quality: float = 1.0,
    seed: int = 0,
    noise: float = SYNTH_NOISE,
    voltages: Optional[np.ndarray] = None,
    segment_id: str = "",
    pose_index: Optional[int] = None,
) -> IVRecord:
    if not 0.0 <= composition_x <= 1.0:
        raise MeasurementError(f"composition_x must lie in [0, 1], got {composition_x}")
    if not 0.0 <= pose_quality <= 1.0:
        raise MeasurementError(f"pose_quality must lie in [0, 1], got {pose_quality}")
    if noise < 0:
        raise MeasurementError(f"noise must be >= 0, got {noise}")

    v = default_voltages() if voltages is None else np.asarray(voltages, dtype=np.float64)
    rng = np.random.default_rng(seed)
    i_dark = SYNTH_DARK_G_S * v
    i_ph = pose_quality * conductance_model(composition_x) * v
    sigma = noise * float(np.max(np.abs(i_ph)))
    i_light = i_dark + i_ph + sigma * rng.standard_normal(len(v))
    return IVRecord(v, i_light, i_dark, segment_id, pose_index)


def synth_campaign(
    segments: Sequence[str],
    poses_per_segment: Dict[str, Sequence[int]],
    compositions: Dict[str, float],
    seed: int = 0,
    noise: float = SYNTH_NOISE,
    quality_range=(0.85, 1.0),
) -> List[IVRecord]:
    """
    One record per (segment, pose). Pose quality is drawn from quality_range
    to mimic local defects; streams are seeded per (seed, segment, pose).
    """
    records = []
    for s_idx, segment in enumerate(segments):
        for pose_index in poses_per_segment.get(segment, ()):
            rng = np.random.default_rng([seed, s_idx, pose_index])
            quality = float(rng.uniform(*quality_range))
            records.append(
                synth_iv(
                    compositions[segment],
                    quality,
                    seed=int(rng.integers(2**63)),
                    noise=noise,
                    segment_id=segment,
                    pose_index=pose_index,
                )
            )
    logger.info("Synthesized %d IV record(s) over %d segment(s)", len(records), len(segments))
    return records
