"""
Run configuration.

A run is described by one YAML file validated by the models below. Unset
values fall back to the defaults in config.py. Relative paths are resolved
against the directory holding the YAML file.

    config_version: 1
    seed: 0
    output_dir: out
    masks:
      glob: masks/*.pgm
      scale_mm_per_px: 0.1
      placements: masks/placements.csv
    field: {sigma: 3.0}
    loss: {w_coverage: 1.0, w_angle: 1.0, sigmoid_steepness: 10}
    optimizer: {k: 3, restarts: 8}
    planner: {algorithm: noisy_dijkstra, alpha: 0.02, generations: 1000}
    probe: {tip_count: 4, tip_spacing_px: 3.0, tip_radius_px: 2.0}
    effector: {R0: 30.0}
    gcode: {safe_z: 10.0, plunge_z: 0.0, dwell_ms: 2000}
    calibration: {path: calib.json}
    analysis: {iv_dir: iv}

The top-level seed overrides the optimizer and planner seeds.
"""

import glob as globlib
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Literal, Optional, Tuple, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from config import (
    CONFIG_VERSION,
    DEFAULT_HOME_MM,
    DEFAULT_OUTPUT_DIR,
    DEFAULT_R0_MM,
    DEFAULT_SCALE_MM_PER_PX,
    DEFAULT_SEED,
    DEFAULT_SIGMA_PX,
    DEFAULT_TIP_COUNT,
    DEFAULT_TIP_RADIUS_PX,
    DEFAULT_TIP_SPACING_PX,
    DEFAULT_WORKERS,
    INHOMOGENEITY_FRACTION,
)
from errors import ConfigError
from planning.greedy import PlannerConfig
from poses.loss import LossWeights
from poses.optimizer import OptimizerConfig
from robot.gcode import GcodeConfig
from robot.kinematics import EffectorGeometry
from shapes.footprint import ProbeFootprint

logger = logging.getLogger(__name__)

PLANNER_NAMES = ("greedy_dijkstra", "noisy_dijkstra", "christofides", "astar", "genetic")

_RANGE_ERRORS = {
    "greater_than",
    "greater_than_equal",
    "less_than",
    "less_than_equal",
    "too_short",
    "too_long",
}


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class MaskSettings(_Section):
    glob: str = "masks/*.pgm"
    scale_mm_per_px: float = Field(default=DEFAULT_SCALE_MM_PER_PX, gt=0)
    placements: Optional[str] = None


class FieldSettings(_Section):
    sigma: float = Field(default=DEFAULT_SIGMA_PX, gt=0)
    export: bool = False


class ProbeSettings(_Section):
    tip_count: int = Field(default=DEFAULT_TIP_COUNT, ge=1)
    tip_spacing_px: float = Field(default=DEFAULT_TIP_SPACING_PX, ge=0)
    tip_radius_px: float = Field(default=DEFAULT_TIP_RADIUS_PX, gt=0)

    def footprint(self) -> ProbeFootprint:
        return ProbeFootprint(self.tip_count, self.tip_spacing_px, self.tip_radius_px)


class EffectorSettings(_Section):
    R0: float = Field(default=DEFAULT_R0_MM, gt=0)

    def geometry(self) -> EffectorGeometry:
        return EffectorGeometry(self.R0)


class PlannerSettings(PlannerConfig):
    model_config = ConfigDict(extra="forbid")

    algorithm: Literal[PLANNER_NAMES] = "noisy_dijkstra"
    home_mm: Tuple[float, float] = DEFAULT_HOME_MM


class CalibrationSettings(_Section):
    path: Optional[str] = None


class AnalysisSettings(_Section):
    iv_dir: Optional[str] = None
    fit_intercept: bool = True
    bandwidth_px: Optional[float] = Field(default=None, gt=0)
    inhomogeneity_fraction: float = Field(default=INHOMOGENEITY_FRACTION, gt=0, le=1)
    maps: bool = True


class PipelineConfig(_Section):
    config_version: Literal[CONFIG_VERSION] = CONFIG_VERSION
    seed: int = Field(default=DEFAULT_SEED, ge=0, lt=2**64)
    output_dir: str = DEFAULT_OUTPUT_DIR
    workers: int = Field(default=DEFAULT_WORKERS, ge=1)
    masks: MaskSettings = Field(default_factory=MaskSettings)
    field: FieldSettings = Field(default_factory=FieldSettings)
    loss: LossWeights = Field(default_factory=LossWeights)
    optimizer: OptimizerConfig = Field(default_factory=OptimizerConfig)
    planner: PlannerSettings = Field(default_factory=PlannerSettings)
    probe: ProbeSettings = Field(default_factory=ProbeSettings)
    effector: EffectorSettings = Field(default_factory=EffectorSettings)
    gcode: GcodeConfig = Field(default_factory=GcodeConfig)
    calibration: CalibrationSettings = Field(default_factory=CalibrationSettings)
    analysis: AnalysisSettings = Field(default_factory=AnalysisSettings)

    # directory relative paths are resolved against; not part of the file
    base_dir: str = Field(default=".", exclude=True)

    def resolve(self, relative: Optional[str]) -> Optional[Path]:
        if relative is None:
            return None
        return _resolve(self.base_dir, relative)

    def optimizer_config(self) -> OptimizerConfig:
        return self.optimizer.model_copy(update={"seed": self.seed})

    def planner_config(self) -> PlannerSettings:
        return self.planner.model_copy(update={"seed": self.seed})

    def with_overrides(self, seed: Optional[int] = None, output_dir: Optional[str] = None) -> "PipelineConfig":
        update = {}
        if seed is not None:
            update["seed"] = seed
        if output_dir is not None:
            update["output_dir"] = str(Path(output_dir).resolve())
        return self.model_copy(update=update) if update else self


@dataclass(frozen=True)
class Diagnostic:
    path: str
    message: str

    def __str__(self) -> str:
        return self.message


def _diagnostic_from_error(err: dict) -> Diagnostic:
    dotted = ".".join(str(p) for p in err["loc"])
    if err["type"] in _RANGE_ERRORS:
        return Diagnostic(dotted, f"{dotted} out of range")
    if err["type"] == "extra_forbidden":
        return Diagnostic(dotted, f"{dotted} is not a known setting")
    return Diagnostic(dotted, f"{dotted}: {err['msg']}")


def _read_yaml(path: Path) -> dict:
    with open(path, "r") as f:
        data = yaml.safe_load(f)
    return {} if data is None else data


def _resolve(base_dir: Union[str, Path], relative: str) -> Path:
    path = Path(relative)
    return path if path.is_absolute() else Path(base_dir) / path


def _file_diagnostics(data: dict, base_dir: Union[str, Path], skip=frozenset()) -> List[Diagnostic]:
    """
    Missing files and empty globs named in the raw mapping. Works on the raw
    data so these checks still run when the schema check fails; references
    already reported under skip are left out.
    """

    def section(name: str) -> dict:
        value = data.get(name)
        return value if isinstance(value, dict) else {}

    diags = []
    for name, key in (("calibration", "path"), ("masks", "placements"), ("analysis", "iv_dir")):
        dotted, value = f"{name}.{key}", section(name).get(key)
        if isinstance(value, str) and dotted not in skip and not _resolve(base_dir, value).exists():
            diags.append(Diagnostic(dotted, f"{dotted} not found: {_resolve(base_dir, value)}"))
    pattern = section("masks").get("glob", MaskSettings.model_fields["glob"].default)
    if isinstance(pattern, str) and "masks.glob" not in skip:
        resolved = str(_resolve(base_dir, pattern))
        if not globlib.glob(resolved):
            diags.append(Diagnostic("masks.glob", f"masks.glob matches no files: {resolved}"))
    return diags


def parse_config(data: dict, base_dir: Union[str, Path] = ".") -> Tuple[Optional[PipelineConfig], List[Diagnostic]]:
    """
    Validate an already-loaded mapping; returns (config or None, diagnostics).
    Schema problems and missing file references are reported together.
    """
    if not isinstance(data, dict):
        return None, [Diagnostic("", "config must be a mapping of sections")]
    try:
        cfg = PipelineConfig.model_validate({**data, "base_dir": str(base_dir)})
    except ValidationError as e:
        diags = [_diagnostic_from_error(err) for err in e.errors()]
        return None, diags + _file_diagnostics(data, base_dir, {d.path for d in diags})
    return cfg, _file_diagnostics(data, base_dir)



def validate_config(path: Union[str, Path]) -> List[Diagnostic]:
    """
    Schema, range and file-reference checks for a YAML run config.
    Never raises; never touches anything but the files it reads.
    """
    path = Path(path)
    if not path.exists():
        return [Diagnostic("", f"config file not found: {path}")]
    try:
        data = _read_yaml(path)
    except (OSError, yaml.YAMLError) as e:
        return [Diagnostic("", f"unreadable YAML: {e}")]
    _, diags = parse_config(data, path.parent)
    return diags


def load_config(path: Union[str, Path]) -> PipelineConfig:
    """
    Raises:
        ConfigError: listing every diagnostic
    """
    path = Path(path)
    diags = validate_config(path)
    if diags:
        raise ConfigError("; ".join(d.message for d in diags))
    cfg, _ = parse_config(_read_yaml(path), path.parent)
    logger.info("Loaded run config %s (seed %d)", path, cfg.seed)
    return cfg


def dump_config(cfg: PipelineConfig) -> str:
    return yaml.safe_dump(cfg.model_dump(mode="json", exclude_none=True), sort_keys=False)
