"""
PoseSet serialization: flat CSV for downstream tools and a JSON document that
round-trips everything the planner needs (poses, validity, placement).
"""

import csv
import json
import logging
from pathlib import Path
from typing import List, Sequence, Union

from errors import OptimizerError
from poses.optimizer import PoseSet
from shapes.footprint import Pose, ProbeFootprint

logger = logging.getLogger(__name__)

POSE_CSV_FIELDS = ["segment_id", "pose_index", "x_px", "y_px", "theta_rad", "valid"]


def pose_rows(pose_sets: Sequence[PoseSet]) -> List[dict]:
    rows = []
    for ps in pose_sets:
        for i, pose in enumerate(ps.poses):
            rows.append(
                {
                    "segment_id": ps.segment_id,
                    "pose_index": i,
                    "x_px": repr(pose.x),
                    "y_px": repr(pose.y),
                    "theta_rad": repr(pose.theta),
                    "valid": int(bool(ps.pose_valid[i])) if ps.pose_valid else 0,
                }
            )
    return rows


def write_poses_csv(pose_sets: Sequence[PoseSet], path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=POSE_CSV_FIELDS, lineterminator="\n")
        writer.writeheader()
        writer.writerows(pose_rows(pose_sets))
    return path


def write_poses_json(pose_sets: Sequence[PoseSet], path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        json.dump({"pose_sets": [ps.to_dict() for ps in pose_sets]}, f, indent=2, sort_keys=True)
        f.write("\n")
    return path


def pose_set_from_dict(data: dict) -> PoseSet:
    """Rebuild a PoseSet from its to_dict() form (the loss report is not restored)."""
    try:
        poses, flags = [], []
        for p in data["poses"]:
            footprint = ProbeFootprint(
                tip_count=int(p.get("tip_count", ProbeFootprint.tip_count)),
                tip_spacing_px=float(p.get("tip_spacing_px", ProbeFootprint.tip_spacing_px)),
                tip_radius_px=float(p.get("tip_radius_px", ProbeFootprint.tip_radius_px)),
            )
            poses.append(Pose(p["x_px"], p["y_px"], p["theta_rad"], footprint))
            flags.append(bool(p.get("valid", False)))
        return PoseSet(
            poses=poses,
            segment_id=str(data["segment_id"]),
            final_loss=None,
            valid=bool(data.get("valid", False)),
            pose_valid=flags,
            scale_mm_per_px=float(data.get("scale_mm_per_px", 1.0)),
            origin_mm=tuple(data.get("origin_mm", (0.0, 0.0))),
            offset_px=tuple(data.get("offset_px", (0.0, 0.0))),
            discarded_restarts=int(data.get("discarded_restarts", 0)),
            error=data.get("error"),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise OptimizerError(f"malformed pose set entry: {e}") from e


def read_poses_json(path: Union[str, Path]) -> List[PoseSet]:
    path = Path(path)
    try:
        with open(path, "r") as f:
            data = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise OptimizerError(f"cannot read pose file {path}: {e}") from e
    entries = data.get("pose_sets") if isinstance(data, dict) else None
    if entries is None:
        raise OptimizerError(f"{path}: missing 'pose_sets'")
    pose_sets = [pose_set_from_dict(entry) for entry in entries]
    logger.info("Loaded %d pose set(s) from %s", len(pose_sets), path)
    return pose_sets
