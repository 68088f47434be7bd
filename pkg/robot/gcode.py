"""
G-code emission (Marlin-compatible subset) and a checker for emitted files.

Per contact cycle:

    G0 X.. Y.. F<travel>        rapid at safe Z to the effector target
    G0 A<theta> F<rotary>       rotary axis (A or E word)
    G1 X.. Y.. Z<plunge> F..    plunge at the same XY
    G4 P<settle>
    ;PROBE segment=<id> pose=<i> x=.. y=.. theta=..   (id JSON-quoted if needed)
    M400
    G4 P<dwell>                 measurement window
    G1 X.. Y.. Z<safe> F..      retract at the same XY

Coordinates are written with a fixed number of decimals so identical tours
give byte-identical programs.
"""

import json
import logging
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Literal, Optional, Sequence, Union

from pydantic import BaseModel, ConfigDict, Field, model_validator

from config import (
    DWELL_MS,
    PLUNGE_FEED_MM_MIN,
    PLUNGE_Z_MM,
    ROTARY_AXIS,
    ROTARY_FEED_DEG_MIN,
    SAFE_Z_MM,
    SETTLE_MS,
    TRAVEL_FEED_MM_MIN,
    WORK_ENVELOPE_MM,
)
from errors import GcodeError
from planning.graph import GraphNode
from robot.kinematics import EffectorGeometry, effector_target

logger = logging.getLogger(__name__)

_DECIMALS = 9
_WORD = re.compile(r"([A-Z])([-+]?\d*\.?\d+)")
_BARE_ID = re.compile(r"[^\s\"=;]+")
_PROBE_FIELD = re.compile(r"(\w+)=(\"(?:[^\"\\]|\\.)*\"|[^\s\"]+)")


class WorkEnvelope(BaseModel):
    model_config = ConfigDict(extra="forbid")

    x_min: float = WORK_ENVELOPE_MM["x_min"]
    x_max: float = WORK_ENVELOPE_MM["x_max"]
    y_min: float = WORK_ENVELOPE_MM["y_min"]
    y_max: float = WORK_ENVELOPE_MM["y_max"]

    @model_validator(mode="after")
    def _ordered(self):
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError("envelope minima must be below maxima")
        return self

    def contains(self, x: float, y: float) -> bool:
        return self.x_min <= x <= self.x_max and self.y_min <= y <= self.y_max


class GcodeConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    safe_z: float = SAFE_Z_MM
    plunge_z: float = PLUNGE_Z_MM
    travel_feed: float = Field(default=TRAVEL_FEED_MM_MIN, gt=0)
    plunge_feed: float = Field(default=PLUNGE_FEED_MM_MIN, gt=0)
    rotary_feed: float = Field(default=ROTARY_FEED_DEG_MIN, gt=0)
    dwell_ms: int = Field(default=DWELL_MS, ge=0)
    settle_ms: int = Field(default=SETTLE_MS, ge=0)
    rotary_axis: Literal["A", "E"] = ROTARY_AXIS
    envelope: WorkEnvelope = Field(default_factory=WorkEnvelope)

    @model_validator(mode="after")
    def _plunge_below_safe(self):
        if not self.plunge_z < self.safe_z:
            raise ValueError("plunge_z must be below safe_z")
        return self


@dataclass
class GcodeProgram:
    commands: List[str]
    safe_z: float
    feeds: Dict[str, float] = field(default_factory=dict)
    contact_cycles: int = 0

    def text(self) -> str:
        return "\n".join(self.commands) + "\n"

    def write(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="\n") as f:
            f.write(self.text())
        return path


def _fmt(value: float) -> str:
    text = f"{value:.{_DECIMALS}f}"
    return "0." + "0" * _DECIMALS if text == "-0." + "0" * _DECIMALS else text


def _feed(value: float) -> str:
    return f"{value:.1f}"


def _quote_id(segment_id: str) -> str:
    """Bare ids pass through; anything a whitespace split would break is JSON-quoted."""
    return segment_id if _BARE_ID.fullmatch(segment_id) else json.dumps(segment_id)


def emit_gcode(
    waypoints: Sequence[GraphNode],
    geom: EffectorGeometry,
    cfg: GcodeConfig = None,
) -> GcodeProgram:
    """
    Program for a tour given as waypoints in visiting order. Home nodes
    (no segment) are travelled to at safe Z without a contact cycle.

    Raises:
        GcodeError: empty tour or an effector target outside the work envelope
    """
    cfg = cfg or GcodeConfig()
    if not waypoints:
        raise GcodeError("tour is empty")

    travel, plunge = _feed(cfg.travel_feed), _feed(cfg.plunge_feed)
    cmds = [
        "; probemap contact program",
        "G21 ; millimeters",
        "G90 ; absolute coordinates",
        f"G0 Z{_fmt(cfg.safe_z)} F{plunge}",
    ]
    cycles = 0
    for step, node in enumerate(waypoints):
        if node.is_home:
            if not cfg.envelope.contains(node.x_mm, node.y_mm):
                raise GcodeError(f"home ({node.x_mm:.3f}, {node.y_mm:.3f}) outside work envelope")
            cmds.append(f"G0 X{_fmt(node.x_mm)} Y{_fmt(node.y_mm)} F{travel} ; home")
            continue

        x, y, theta = effector_target(node.contact_mm[0], node.contact_mm[1], node.theta_deg, geom)
        if not cfg.envelope.contains(x, y):
            raise GcodeError(
                f"waypoint {step} ({node.segment_id}/{node.pose_index}) target "
                f"({x:.3f}, {y:.3f}) outside work envelope"
            )
        X, Y = _fmt(x), _fmt(y)
        cmds.extend(
            [
                f"G0 X{X} Y{Y} F{travel}",
                f"G0 {cfg.rotary_axis}{_fmt(theta)} F{_feed(cfg.rotary_feed)}",
                f"G1 X{X} Y{Y} Z{_fmt(cfg.plunge_z)} F{plunge}",
                f"G4 P{cfg.settle_ms}",
                f";PROBE segment={_quote_id(node.segment_id)} pose={node.pose_index} "
                f"x={node.contact_mm[0]:.4f} y={node.contact_mm[1]:.4f} theta={node.theta_deg:.4f}",
                "M400",
                f"G4 P{cfg.dwell_ms}",
                f"G1 X{X} Y{Y} Z{_fmt(cfg.safe_z)} F{plunge}",
            ]
        )
        cycles += 1

    cmds.extend(["M400", "; end of program"])
    logger.info("Emitted G-code: %d contact cycle(s), %d lines", cycles, len(cmds))
    return GcodeProgram(
        commands=cmds,
        safe_z=cfg.safe_z,
        feeds={"travel": cfg.travel_feed, "plunge": cfg.plunge_feed, "rotary": cfg.rotary_feed},
        contact_cycles=cycles,
    )


# ============================================================================
# PROGRAM CHECKS
# ============================================================================


@dataclass
class GcodeCheck:
    xy_travel_mm: float = 0.0
    contact_cycles: int = 0
    probes: List[Dict[str, str]] = field(default_factory=list)
    violations: List[str] = field(default_factory=list)

    @property
    def safe(self) -> bool:
        return not self.violations


def _probe_fields(body: str, lineno: int) -> Dict[str, str]:
    """key=value pairs of a ;PROBE comment; quoted values are JSON strings."""
    fields: Dict[str, str] = {}
    pos = 0
    for match in _PROBE_FIELD.finditer(body):
        if body[pos : match.start()].strip():
            break
        key, value = match.groups()
        if value.startswith('"'):
            try:
                value = json.loads(value)
            except json.JSONDecodeError as e:
                raise GcodeError(f"line {lineno}: bad quoted value for {key}: {e}") from e
        fields[key] = value
        pos = match.end()
    if body[pos:].strip():
        raise GcodeError(f"line {lineno}: malformed probe comment near {body[pos:].strip()!r}")
    return fields


def check_gcode(text: str, safe_z: float) -> GcodeCheck:
    """
    Re-read a program: sum XY travel (from the first XY position on), count
    plunges and probe comments, and flag any XY motion while Z is below
    safe_z (before or after the move).
    """
    result = GcodeCheck()
    x: Optional[float] = None
    y: Optional[float] = None
    z: Optional[float] = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if line.startswith(";PROBE"):
            result.probes.append(_probe_fields(line[len(";PROBE") :], lineno))
            continue
        code = line.split(";", 1)[0].strip().upper()
        if not code or code.split()[0] not in ("G0", "G1"):
            continue
        words = dict(_WORD.findall(code))
        nx = float(words["X"]) if "X" in words else x
        ny = float(words["Y"]) if "Y" in words else y
        nz = float(words["Z"]) if "Z" in words else z

        moved_xy = x is not None and y is not None and (nx != x or ny != y)
        if moved_xy:
            low = (z is not None and z < safe_z) or (nz is not None and nz < safe_z)
            if low:
                result.violations.append(f"line {lineno}: XY motion below safe Z: {raw}")
            result.xy_travel_mm += math.hypot(nx - x, ny - y)
        if nz is not None and nz < safe_z and (z is None or z >= safe_z):
            result.contact_cycles += 1
        x, y, z = nx, ny, nz
    return result


def probe_order(text: str) -> List[tuple]:
    """(segment_id, pose_index) of every ;PROBE comment, in file order."""
    order = []
    for p in check_gcode(text, math.inf).probes:
        try:
            order.append((p.get("segment"), int(p.get("pose", -1))))
        except ValueError as e:
            raise GcodeError(f"bad pose index {p.get('pose')!r} for segment {p.get('segment')!r}") from e
    return order
