"""
IV sweep files.

Single sweep: CSV with columns voltage, current_light, current_dark.
Campaign directory:

    <root>/<segment_id>/<pose_index>.csv
    <root>/compositions.csv            (optional: segment_id, composition_x)
"""

import logging
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import pandas as pd

from analysis.photoconductance import IVRecord
from errors import MeasurementError

logger = logging.getLogger(__name__)

IV_COLUMNS = ["voltage", "current_light", "current_dark"]
COMPOSITIONS_FILE = "compositions.csv"


def read_iv_csv(path: Union[str, Path], segment_id: str = "", pose_index: Optional[int] = None) -> IVRecord:
    path = Path(path)
    try:
        frame = pd.read_csv(path)
    except (OSError, ValueError) as e:
        raise MeasurementError(f"cannot read IV file {path}: {e}") from e
    missing = [c for c in IV_COLUMNS if c not in frame.columns]
    if missing:
        raise MeasurementError(f"{path}: missing column(s) {', '.join(missing)}")
    return IVRecord(
        frame["voltage"].to_numpy(),
        frame["current_light"].to_numpy(),
        frame["current_dark"].to_numpy(),
        segment_id,
        pose_index,
    )


def write_iv_csv(rec: IVRecord, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame(
        {"voltage": rec.voltages, "current_light": rec.current_light, "current_dark": rec.current_dark}
    )
    frame.to_csv(path, index=False, float_format="%.17g", lineterminator="\n")
    return path


def read_compositions(root: Union[str, Path]) -> Dict[str, float]:
    path = Path(root) / COMPOSITIONS_FILE
    if not path.exists():
        return {}
    try:
        frame = pd.read_csv(path, dtype={"segment_id": str})
        return {str(s): float(x) for s, x in zip(frame["segment_id"], frame["composition_x"])}
    except (OSError, KeyError, ValueError) as e:
        raise MeasurementError(f"cannot read {path}: {e}") from e


def read_campaign(root: Union[str, Path]) -> Tuple[List[IVRecord], Dict[str, float]]:
    """
    All sweeps of a campaign directory, ordered by (segment_id, pose_index).
    Unreadable or malformed sweeps are skipped with a warning.
    """
    root = Path(root)
    if not root.is_dir():
        raise MeasurementError(f"campaign directory not found: {root}")
    records = []
    for seg_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        files = [f for f in seg_dir.glob("*.csv") if f.stem.isdigit()]
        for f in sorted(files, key=lambda p: int(p.stem)):
            try:
                records.append(read_iv_csv(f, seg_dir.name, int(f.stem)))
            except MeasurementError as e:
                logger.warning("Skipping IV file: %s", e)
    logger.info("Read %d IV sweep(s) from %s", len(records), root)
    return records, read_compositions(root)


def write_campaign(
    records: List[IVRecord],
    root: Union[str, Path],
    compositions: Optional[Dict[str, float]] = None,
) -> Path:
    root = Path(root)
    for rec in records:
        write_iv_csv(rec, root / rec.segment_id / f"{rec.pose_index}.csv")
    if compositions:
        frame = pd.DataFrame(
            {"segment_id": list(compositions), "composition_x": [compositions[s] for s in compositions]}
        )
        root.mkdir(parents=True, exist_ok=True)
        frame.to_csv(root / COMPOSITIONS_FILE, index=False, float_format="%.17g", lineterminator="\n")
    return root
