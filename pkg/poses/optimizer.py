"""
Pose Optimizer

Places k valid, coverage-maximizing, angularly diverse poses per segment by
multi-start gradient descent on the pose loss. Descent also carries a
feasibility barrier that pulls tips into the measurable area and footprints
apart; it vanishes on valid sets. The stochastic oracle (best of N random
pose sets) is both the baseline and the seed of the first restart.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from config import (
    BARRIER_OVERLAP_WEIGHT,
    BARRIER_TIP_WEIGHT,
    DEFAULT_ANGLE_STEP_RATIO,
    DEFAULT_MAX_ITERS,
    DEFAULT_POSE_COUNT,
    DEFAULT_RESTARTS,
    DEFAULT_SEED,
    DEFAULT_STEP_DECAY,
    DEFAULT_STEP_SIZE,
    DEFAULT_TAU,
    DEFAULT_TOLERANCE,
    MAX_BACKTRACKS,
    ORACLE_SAMPLES,
    RESTART_SAMPLES,
)
from errors import LossError, OptimizerError
from poses.loss import LossReport, LossWeights, evaluate, feasibility_penalty, loss_value, set_is_valid
from shapes.field import ScalarField
from shapes.footprint import Pose, ProbeFootprint

logger = logging.getLogger(__name__)

TraceCallback = Callable[[str, int, int, LossReport], None]


class OptimizerConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    k: int = Field(default=DEFAULT_POSE_COUNT, ge=1)
    restarts: int = Field(default=DEFAULT_RESTARTS, ge=1)
    max_iters: int = Field(default=DEFAULT_MAX_ITERS, ge=0)
    step_size: float = Field(default=DEFAULT_STEP_SIZE, gt=0)
    step_decay: float = Field(default=DEFAULT_STEP_DECAY, gt=0, le=1)
    angle_step_ratio: float = Field(default=DEFAULT_ANGLE_STEP_RATIO, gt=0)
    tolerance: float = Field(default=DEFAULT_TOLERANCE, ge=0)
    oracle_samples: int = Field(default=ORACLE_SAMPLES, ge=1)
    restart_samples: int = Field(default=RESTART_SAMPLES, ge=1)
    seed: int = Field(default=DEFAULT_SEED, ge=0, lt=2**64)
    tau: float = Field(default=DEFAULT_TAU, gt=0, lt=1)
    barrier_tip: float = Field(default=BARRIER_TIP_WEIGHT, ge=0)
    barrier_overlap: float = Field(default=BARRIER_OVERLAP_WEIGHT, ge=0)


@dataclass
class PoseSet:
    """
    The k poses chosen for one segment plus provenance for robot placement.
    A failed segment keeps its id, an empty pose list and the error text.
    """

    poses: List[Pose]
    segment_id: str
    final_loss: Optional[LossReport]
    valid: bool
    pose_valid: List[bool] = field(default_factory=list)
    scale_mm_per_px: float = 1.0
    origin_mm: Tuple[float, float] = (0.0, 0.0)
    offset_px: Tuple[float, float] = (0.0, 0.0)
    discarded_restarts: int = 0
    error: Optional[str] = None

    @property
    def failed(self) -> bool:
        return self.error is not None

    def valid_poses(self) -> List[Tuple[int, Pose]]:
        return [(i, p) for i, p in enumerate(self.poses) if self.pose_valid and self.pose_valid[i]]

    def to_dict(self) -> Dict:
        return {
            "segment_id": self.segment_id,
            "valid": self.valid,
            "error": self.error,
            "scale_mm_per_px": self.scale_mm_per_px,
            "origin_mm": list(self.origin_mm),
            "offset_px": list(self.offset_px),
            "discarded_restarts": self.discarded_restarts,
            "poses": [
                {
                    "x_px": p.x,
                    "y_px": p.y,
                    "theta_rad": p.theta,
                    "valid": bool(self.pose_valid[i]) if self.pose_valid else False,
                    "tip_count": p.footprint.tip_count,
                    "tip_spacing_px": p.footprint.tip_spacing_px,
                    "tip_radius_px": p.footprint.tip_radius_px,
                }
                for i, p in enumerate(self.poses)
            ],
            "loss": self.final_loss.to_dict() if self.final_loss else None,
        }


def _provenance(field_: ScalarField) -> Dict:
    return {
        "segment_id": field_.segment_id,
        "scale_mm_per_px": field_.scale_mm_per_px,
        "origin_mm": tuple(field_.origin_mm),
        "offset_px": tuple(field_.offset_px),
    }


def _finish(field_: ScalarField, poses: List[Pose], report: Optional[LossReport], tau: float, **extra) -> PoseSet:
    valid, per_pose = set_is_valid(field_, poses, tau)
    return PoseSet(poses=poses, final_loss=report, valid=valid, pose_valid=per_pose, **_provenance(field_), **extra)


def derive_seed(seed: int, *stream: int) -> int:
    """Independent 64-bit seed for a sub-stream (restart, segment, generation)."""
    state = np.random.SeedSequence([seed, *stream]).generate_state(2, dtype=np.uint32)
    return int(state[0]) << 32 | int(state[1])


# ============================================================================
# STOCHASTIC ORACLE
# ============================================================================


def _sample_pose_sets(field_: ScalarField, n: int, k: int, seed: int, footprint: ProbeFootprint, tau: float):
    rng = np.random.default_rng(seed)
    x0, y0, x1, y1 = field_.measurable_bbox(tau)
    for _ in range(n):
        xs = rng.uniform(x0, x1, size=k)
        ys = rng.uniform(y0, y1, size=k)
        thetas = rng.uniform(0.0, math.pi, size=k)
        yield [Pose(x, y, t, footprint) for x, y, t in zip(xs, ys, thetas)]


def stochastic_oracle(
    field_: ScalarField,
    N: int = ORACLE_SAMPLES,
    k: int = DEFAULT_POSE_COUNT,
    seed: int = DEFAULT_SEED,
    w: LossWeights = None,
    footprint: ProbeFootprint = None,
    tau: float = DEFAULT_TAU,
) -> PoseSet:
    """
    Best of N random pose sets under the loss.

    Candidates are drawn uniformly over the bounding box of the measurable
    area (theta uniform in [0, pi)); ties keep the earliest candidate.
    """
    if N < 1:
        raise OptimizerError("N must be >= 1")
    w = w or LossWeights()
    footprint = footprint or ProbeFootprint()
    best, best_loss = None, math.inf
    for candidate in _sample_pose_sets(field_, N, k, seed, footprint, tau):
        value = loss_value(field_, candidate, w)
        if best is None or value < best_loss:
            best, best_loss = candidate, value
    return _finish(field_, best, evaluate(field_, best, w), tau)


# ============================================================================
# GRADIENT DESCENT
# ============================================================================


def _step(poses: Sequence[Pose], grad: np.ndarray, step: float, angle_ratio: float, dims) -> List[Pose]:
    height, width = dims
    moved = []
    for pose, g in zip(poses, grad):
        candidate = Pose(
            pose.x - step * g[0],
            pose.y - step * g[1],
            pose.theta - step * angle_ratio * g[2],
            pose.footprint,
        )
        moved.append(candidate.clamped(width, height))
    return moved


def _objective(field_: ScalarField, poses: Sequence[Pose], cfg: OptimizerConfig, w: LossWeights):
    report = evaluate(field_, poses, w)
    penalty, penalty_grad = feasibility_penalty(field_, poses, cfg.tau, cfg.barrier_tip, cfg.barrier_overlap)
    report.penalty_term = penalty
    return report, report.grad + penalty_grad


def descend(
    field_: ScalarField,
    poses: List[Pose],
    cfg: OptimizerConfig,
    w: LossWeights,
    trace: Optional[TraceCallback] = None,
    restart: int = 0,
) -> Tuple[List[Pose], LossReport]:
    """
    Fixed-step descent with backtracking on the loss plus the feasibility
    barrier: a step that raises that objective is halved (up to MAX_BACKTRACKS
    times); accepted iterates never increase it. The barrier vanishes on
    strictly valid sets, where the objective is the plain loss.
    """
    report, grad = _objective(field_, poses, cfg, w)
    for it in range(cfg.max_iters):
        step = cfg.step_size * cfg.step_decay**it
        accepted = None
        for _ in range(MAX_BACKTRACKS + 1):
            candidate = _step(poses, grad, step, cfg.angle_step_ratio, field_.shape)
            cand_report, cand_grad = _objective(field_, candidate, cfg, w)
            if cand_report.objective <= report.objective:
                accepted = (candidate, cand_report, cand_grad)
                break
            step *= 0.5
        if accepted is None:
            break
        gain = report.objective - accepted[1].objective
        poses, report, grad = accepted
        if trace is not None:
            trace(field_.segment_id, restart, it, report)
        if gain <= cfg.tolerance * max(1.0, abs(report.objective)):
            break
    return poses, report


def _better(candidate: PoseSet, best: Optional[PoseSet]) -> bool:
    """Valid sets beat invalid ones; within the same kind the lower loss wins."""
    if best is None:
        return True
    if candidate.valid != best.valid:
        return candidate.valid
    return candidate.final_loss.total < best.final_loss.total


def optimize(
    field_: ScalarField,
    cfg: OptimizerConfig = None,
    w: LossWeights = None,
    footprint: ProbeFootprint = None,
    trace: Optional[TraceCallback] = None,
) -> PoseSet:
    """
    Best-of-restarts descent for one segment.

    Restart 0 starts from stochastic_oracle(N=cfg.oracle_samples, seed=cfg.seed);
    the others from small oracle draws on derived seeds. The winner is the
    valid restart with the lowest loss, or the lowest-loss restart when none
    is valid. Restarts that hit a non-finite loss are discarded and logged.

    Raises:
        OptimizerError: the field is empty or every restart was discarded
    """
    cfg = cfg or OptimizerConfig()
    w = w or LossWeights()
    footprint = footprint or ProbeFootprint()
    if not field_.values.max() > 0:
        raise OptimizerError(f"empty field for segment {field_.segment_id!r}")

    best: Optional[PoseSet] = None
    discarded = 0
    for r in range(cfg.restarts):
        n, seed = (cfg.oracle_samples, cfg.seed) if r == 0 else (cfg.restart_samples, derive_seed(cfg.seed, r))
        try:
            start = stochastic_oracle(field_, n, cfg.k, seed, w, footprint, cfg.tau)
            poses, report = descend(field_, start.poses, cfg, w, trace, restart=r)
        except LossError as e:
            discarded += 1
            logger.warning("Segment %s restart %d discarded: %s", field_.segment_id, r, e)
            continue
        candidate = _finish(field_, poses, report, cfg.tau)
        logger.debug(
            "Segment %s restart %d loss %.6f (%s)",
            field_.segment_id,
            r,
            report.total,
            "valid" if candidate.valid else "invalid",
        )
        if _better(candidate, best):
            best = candidate

    if best is None:
        raise OptimizerError(f"all {cfg.restarts} restarts discarded for segment {field_.segment_id!r}")

    best.discarded_restarts = discarded
    if not best.valid:
        logger.warning("Segment %s: no valid pose set (best loss %.6f)", field_.segment_id, best.final_loss.total)
    return best


def _optimize_flagged(args) -> PoseSet:
    field_, cfg, w, footprint, trace = args
    try:
        return optimize(field_, cfg, w, footprint, trace)
    except Exception as e:
        logger.warning("Segment %s failed: %s", field_.segment_id, e)
        return PoseSet(poses=[], final_loss=None, valid=False, error=str(e), **_provenance(field_))


def batch_optimize(
    fields: Sequence[ScalarField],
    cfg: OptimizerConfig = None,
    w: LossWeights = None,
    footprint: ProbeFootprint = None,
    workers: int = 1,
    trace: Optional[TraceCallback] = None,
) -> List[PoseSet]:
    """
    optimize() over many segments. Output order equals input order; segment i
    uses seed cfg.seed XOR i, so results do not depend on the thread schedule.
    Failures come back as flagged PoseSets instead of aborting the batch.
    """
    cfg = cfg or OptimizerConfig()
    jobs = [
        (f, cfg.model_copy(update={"seed": cfg.seed ^ i}), w, footprint, trace)
        for i, f in enumerate(fields)
    ]
    if workers <= 1 or len(jobs) <= 1:
        results = [_optimize_flagged(job) for job in jobs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_optimize_flagged, jobs))
    logger.info(
        "Optimized %d segment(s): %d valid, %d failed",
        len(results),
        sum(r.valid for r in results),
        sum(r.failed for r in results),
    )
    return results
