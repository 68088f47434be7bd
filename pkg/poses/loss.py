"""
Pose Loss

Spatially differentiable objective over a smoothed segment field and k poses:

    loss = -w_coverage * coverage - w_angle * Var(theta) + w_overlap * overlap

coverage sums, per pose, the field weighted by the pose footprint (normalized
by footprint mass); overlap is the smooth relaxation of the requirement that
footprints stay disjoint. All gradients are analytic.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from config import (
    BARRIER_OVERLAP_RATIO,
    BARRIER_OVERLAP_WEIGHT,
    BARRIER_TIP_MARGIN,
    BARRIER_TIP_WEIGHT,
    DEFAULT_STEEPNESS,
    DEFAULT_TAU,
    DEFAULT_W_ANGLE,
    DEFAULT_W_COVERAGE,
    OVERLAP_VALID_LIMIT,
)
from errors import LossError
from shapes.field import ScalarField
from shapes.footprint import (
    Pose,
    footprint_window,
    soft_threshold,
    soft_threshold_grad,
    tip_field,
    tip_positions,
)

logger = logging.getLogger(__name__)

_MIN_FOOTPRINT_MASS = 1e-12


class LossWeights(BaseModel):
    """Weights of the pose loss; w_overlap defaults to w_coverage."""

    model_config = ConfigDict(extra="forbid")

    w_coverage: float = Field(default=DEFAULT_W_COVERAGE, ge=0)
    w_angle: float = Field(default=DEFAULT_W_ANGLE, ge=0)
    w_overlap: Optional[float] = Field(default=None, ge=0)
    sigmoid_steepness: float = Field(default=DEFAULT_STEEPNESS, gt=0)

    @model_validator(mode="after")
    def _default_overlap_weight(self):
        if self.w_overlap is None:
            self.w_overlap = self.w_coverage
        return self


@dataclass
class LossReport:
    total: float
    coverage_term: float
    angle_term: float
    overlap_term: float
    grad: np.ndarray
    per_pose_coverage: List[float] = field(default_factory=list)
    penalty_term: float = 0.0

    @property
    def objective(self) -> float:
        """What descent minimizes: total plus the feasibility barrier."""
        return self.total + self.penalty_term

    def to_dict(self) -> Dict:
        return {
            "total": self.total,
            "coverage_term": self.coverage_term,
            "angle_term": self.angle_term,
            "overlap_term": self.overlap_term,
            "penalty_term": self.penalty_term,
            "per_pose_coverage": list(self.per_pose_coverage),
            "grad": np.asarray(self.grad).tolist(),
        }


# ============================================================================
# COVERAGE
# ============================================================================


def _pose_coverage(
    field_: ScalarField, pose: Pose, steepness: float, with_grad: bool
) -> Tuple[float, Optional[np.ndarray]]:
    sigma = pose.footprint.tip_radius_px
    window = footprint_window(pose, field_.shape, sigma)
    tips = tip_field(pose, field_.shape, sigma, with_grad=with_grad, window=window)
    fp = soft_threshold(tips.z, steepness)
    mass = float(fp.sum())
    if mass < _MIN_FOOTPRINT_MASS:
        return 0.0, (np.zeros(3) if with_grad else None)
    values = field_.values[window]
    cov = float((values * fp).sum()) / mass
    if not with_grad:
        return cov, None

    dfp = soft_threshold_grad(tips.z, steepness)
    weight = (values - cov) * dfp
    grad = np.array(
        [
            (weight * tips.dz_dx).sum(),
            (weight * tips.dz_dy).sum(),
            (weight * tips.dz_dtheta).sum() if pose.footprint.tip_count > 1 else 0.0,
        ]
    ) / mass
    return cov, grad


def coverage(field_: ScalarField, poses: Sequence[Pose], steepness: float = DEFAULT_STEEPNESS) -> float:
    """Sum of per-pose normalized coverages; each lies in [0, 1]."""
    return float(sum(_pose_coverage(field_, p, steepness, False)[0] for p in poses))


# ============================================================================
# ANGULAR VARIANCE
# ============================================================================


def angle_variance(poses: Sequence[Pose]) -> float:
    """Population variance of the [0, pi)-normalized angles; 0 for a single pose."""
    if len(poses) < 2:
        return 0.0
    thetas = np.array([p.theta for p in poses])
    return float(np.mean((thetas - thetas.mean()) ** 2))


def _angle_variance_grad(poses: Sequence[Pose]) -> np.ndarray:
    if len(poses) < 2:
        return np.zeros(len(poses))
    thetas = np.array([p.theta for p in poses])
    return 2.0 * (thetas - thetas.mean()) / len(poses)


# ============================================================================
# OVERLAP
# ============================================================================

# Inner products of tip-Gaussian sums are taken over the plane in closed form:
# <g_a, g_b> = 2 pi s_a^2 s_b^2 / (s_a^2 + s_b^2) * exp(-|a - b|^2 / (2 (s_a^2 + s_b^2)))


class _TipLayout(NamedTuple):
    tips: np.ndarray  # (n, 2) tip centres of every pose, concatenated
    var: np.ndarray  # (n,) tip variance
    lever: np.ndarray  # (n,) signed offset along the contact line
    cos: np.ndarray
    sin: np.ndarray
    members: np.ndarray  # (n, k) one-hot owner pose


class _Overlaps(NamedTuple):
    layout: _TipLayout
    gram: np.ndarray  # (n, n) tip-by-tip inner products
    diff: np.ndarray  # (n, n, 2) tip a minus tip b
    s2: np.ndarray  # (n, n) summed variances
    sums: np.ndarray  # (k, k) pose-by-pose inner products
    matrix: np.ndarray  # (k, k) normalized overlaps, 1 on the diagonal


def _layout(poses: Sequence[Pose]) -> _TipLayout:
    tips, var, lever, cos, sin, owner = [], [], [], [], [], []
    for i, pose in enumerate(poses):
        offsets = pose.footprint.offsets()
        n = len(offsets)
        tips.append(np.asarray(tip_positions(pose), dtype=np.float64).reshape(n, 2))
        var.append(np.full(n, pose.footprint.tip_radius_px ** 2))
        lever.append(offsets)
        cos.append(np.full(n, math.cos(pose.theta)))
        sin.append(np.full(n, math.sin(pose.theta)))
        owner.extend([i] * n)
    members = np.zeros((len(owner), len(poses)))
    members[np.arange(len(owner)), owner] = 1.0
    return _TipLayout(
        tips=np.concatenate(tips),
        var=np.concatenate(var),
        lever=np.concatenate(lever),
        cos=np.concatenate(cos),
        sin=np.concatenate(sin),
        members=members,
    )


def _pose_partials(layout: _TipLayout, d_tips: np.ndarray) -> np.ndarray:
    """Chain per-tip (x, y) partials through the rigid tip layouts into (k, 3)."""
    d_theta = layout.lever * (layout.cos * d_tips[:, 1] - layout.sin * d_tips[:, 0])
    return layout.members.T @ np.column_stack([d_tips[:, 0], d_tips[:, 1], d_theta])


def _overlaps(poses: Sequence[Pose]) -> _Overlaps:
    layout = _layout(poses)
    diff = layout.tips[:, None, :] - layout.tips[None, :, :]
    s2 = layout.var[:, None] + layout.var[None, :]
    gram = (2.0 * math.pi * np.outer(layout.var, layout.var) / s2) * np.exp(
        -(diff * diff).sum(axis=-1) / (2.0 * s2)
    )
    sums = layout.members.T @ gram @ layout.members
    norms = np.sqrt(np.diag(sums))
    matrix = sums / np.outer(norms, norms)
    np.fill_diagonal(matrix, 1.0)
    return _Overlaps(layout, gram, diff, s2, sums, matrix)


def _overlap_partials(state: _Overlaps, pair_weights: np.ndarray) -> np.ndarray:
    """
    (k, 3) gradient of sum_{i<j} f(S_ij) given pair_weights[i, j] = f'(S_ij),
    symmetric with a zero diagonal. <z_i, z_i> does not move with the pose.
    """
    members = state.layout.members
    coef = (members @ pair_weights @ members.T) * state.gram / state.s2
    d_tips = -(coef[..., None] * state.diff).sum(axis=1)
    return _pose_partials(state.layout, d_tips)


def pairwise_overlap(poses: Sequence[Pose]) -> np.ndarray:
    """
    Symmetric k x k matrix of normalized overlaps
    <z_i, z_j> / sqrt(<z_i, z_i> <z_j, z_j>) of the tip-Gaussian sums;
    1 on the diagonal.
    """
    if not poses:
        return np.eye(0)
    return _overlaps(poses).matrix


def overlap(poses: Sequence[Pose]) -> float:
    """Sum of normalized overlaps over pose pairs i < j; 0 for fewer than 2 poses."""
    if len(poses) < 2:
        return 0.0
    matrix = _overlaps(poses).matrix
    return float(matrix[np.triu_indices(len(poses), 1)].sum())


def _overlap_with_grad(poses: Sequence[Pose]) -> Tuple[float, np.ndarray]:
    k = len(poses)
    if k < 2:
        return 0.0, np.zeros((k, 3))
    state = _overlaps(poses)
    norms = np.sqrt(np.diag(state.sums))
    weights = 1.0 / np.outer(norms, norms)
    np.fill_diagonal(weights, 0.0)
    total = float(state.matrix[np.triu_indices(k, 1)].sum())
    return total, _overlap_partials(state, weights)


# ============================================================================
# FULL OBJECTIVE
# ============================================================================


def evaluate(field_: ScalarField, poses: Sequence[Pose], w: LossWeights = None) -> LossReport:
    """
    Evaluate the loss and its analytic gradient.

    Args:
        field_: smoothed segment field (poses share its pixel coordinates)
        poses: the k poses
        w: loss weights

    Returns:
        LossReport with total, the three terms and a (k, 3) gradient in
        (x, y, theta) per pose

    Raises:
        LossError: non-finite intermediate values
    """
    w = w or LossWeights()
    k = len(poses)
    if k > 1 and not w.w_overlap > 0:
        raise LossError("w_overlap must be > 0 when more than one pose is placed")

    grad = np.zeros((k, 3))
    per_pose = []
    for i, pose in enumerate(poses):
        cov_i, g_i = _pose_coverage(field_, pose, w.sigmoid_steepness, True)
        per_pose.append(cov_i)
        grad[i] -= w.w_coverage * g_i
    cov = float(sum(per_pose))

    var = angle_variance(poses)
    grad[:, 2] -= w.w_angle * _angle_variance_grad(poses)

    ov, ov_grad = _overlap_with_grad(poses)
    grad += w.w_overlap * ov_grad

    total = -w.w_coverage * cov - w.w_angle * var + w.w_overlap * ov
    if not (math.isfinite(total) and np.all(np.isfinite(grad))):
        raise LossError(
            f"non-finite loss (total={total}); check sigmoid_steepness={w.sigmoid_steepness}"
        )
    return LossReport(
        total=total,
        coverage_term=cov,
        angle_term=var,
        overlap_term=ov,
        grad=grad,
        per_pose_coverage=per_pose,
    )


def loss_value(field_: ScalarField, poses: Sequence[Pose], w: LossWeights = None) -> float:
    """Total loss without gradients (used by sampling-based search)."""
    w = w or LossWeights()
    cov = coverage(field_, poses, w.sigmoid_steepness)
    return -w.w_coverage * cov - w.w_angle * angle_variance(poses) + w.w_overlap * overlap(poses)


# ============================================================================
# VALIDITY
# ============================================================================


def is_valid(field_: ScalarField, pose: Pose, tau: float = DEFAULT_TAU) -> bool:
    """True iff the field is >= tau at every probe tip (the measurable area)."""
    if not 0 < tau < 1:
        raise LossError(f"tau must lie in (0, 1), got {tau}")
    tips = tip_positions(pose)
    values = field_.sample([t[0] for t in tips], [t[1] for t in tips])
    return bool(np.all(values >= tau))


def set_is_valid(field_: ScalarField, poses: Sequence[Pose], tau: float = DEFAULT_TAU) -> Tuple[bool, List[bool]]:
    """(set validity, per-pose validity): every pose valid and pairwise overlap below the limit."""
    per_pose = [is_valid(field_, p, tau) for p in poses]
    matrix = pairwise_overlap(poses)
    disjoint = bool(np.all(matrix[np.triu_indices(len(poses), 1)] < OVERLAP_VALID_LIMIT))
    return all(per_pose) and disjoint, per_pose


# ============================================================================
# FEASIBILITY BARRIER
# ============================================================================


def _bilinear_with_grad(values: np.ndarray, xs: np.ndarray, ys: np.ndarray):
    """
    Bilinear lookup with zero padding and its exact partials in x and y.
    Points more than one pixel off the grid read 0 with zero slope.
    """
    height, width = values.shape
    padded = np.pad(values, 1)
    x, y = xs + 1.0, ys + 1.0
    x0, y0 = np.floor(x).astype(int), np.floor(y).astype(int)
    inside = (x0 >= 0) & (x0 <= width) & (y0 >= 0) & (y0 <= height)
    x0, y0 = np.clip(x0, 0, width), np.clip(y0, 0, height)
    fx, fy = x - x0, y - y0
    v00, v01 = padded[y0, x0], padded[y0, x0 + 1]
    v10, v11 = padded[y0 + 1, x0], padded[y0 + 1, x0 + 1]
    value = (1 - fy) * ((1 - fx) * v00 + fx * v01) + fy * ((1 - fx) * v10 + fx * v11)
    d_x = (1 - fy) * (v01 - v00) + fy * (v11 - v10)
    d_y = (1 - fx) * (v10 - v00) + fx * (v11 - v01)
    return np.where(inside, value, 0.0), np.where(inside, d_x, 0.0), np.where(inside, d_y, 0.0)


def feasibility_penalty(
    field_: ScalarField,
    poses: Sequence[Pose],
    tau: float = DEFAULT_TAU,
    tip_weight: float = BARRIER_TIP_WEIGHT,
    overlap_weight: float = BARRIER_OVERLAP_WEIGHT,
) -> Tuple[float, np.ndarray]:
    """
    Quadratic barrier that is zero once every tip reads >= tau + margin and
    every pairwise overlap is <= OVERLAP_VALID_LIMIT * ratio, i.e. strictly
    inside the valid set:

        tip_weight * sum(max(0, tau + margin - I'(tip))^2)
        + overlap_weight * sum(max(0, log(O_ij / target))^2)

    Returns (value, (k, 3) gradient).
    """
    k = len(poses)
    grad = np.zeros((k, 3))
    if k == 0:
        return 0.0, grad
    value = 0.0

    if tip_weight > 0:
        layout = _layout(poses)
        v, d_x, d_y = _bilinear_with_grad(field_.values, layout.tips[:, 0], layout.tips[:, 1])
        deficit = np.maximum(0.0, tau + BARRIER_TIP_MARGIN - v)
        if deficit.any():
            value += tip_weight * float((deficit * deficit).sum())
            scale = -2.0 * tip_weight * deficit
            grad += _pose_partials(layout, np.column_stack([scale * d_x, scale * d_y]))

    if overlap_weight > 0 and k > 1:
        state = _overlaps(poses)
        target = OVERLAP_VALID_LIMIT * BARRIER_OVERLAP_RATIO
        above = np.triu(state.matrix > target, 1)
        if above.any():
            excess = np.zeros((k, k))
            excess[above] = np.log(state.matrix[above] / target)
            excess += excess.T
            value += overlap_weight * float((excess[above] ** 2).sum())
            weights = np.zeros((k, k))
            hit = excess > 0
            weights[hit] = 2.0 * overlap_weight * excess[hit] / state.sums[hit]
            grad += _overlap_partials(state, weights)
    return value, grad
