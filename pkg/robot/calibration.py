"""
Camera / image / robot frame calibration.

Pixel coordinates reach the robot frame through two planar homographies
(camera -> image, image -> robot mm) followed by a residual correction mesh
interpolated over a Delaunay triangulation of measured anchors.

Calibration files are JSON:

    {
      "calib_version": 1,
      "K_cam_img": [9 numbers, row-major],
      "K_img_robot": [9 numbers, row-major],
      "mesh": [{"image_xy": [x, y], "residual_mm": [dx, dy]}, ...]
    }
"""

import itertools
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field, ValidationError
from scipy.spatial import Delaunay, QhullError, cKDTree

from config import CALIB_VERSION
from errors import CalibrationError

logger = logging.getLogger(__name__)

_MIN_DET = 1e-9
_MIN_W = 1e-12
_COLLINEAR_TOL = 1e-9


# ============================================================================
# HOMOGRAPHY HELPERS
# ============================================================================


def _as_points(points) -> Tuple[np.ndarray, bool]:
    """(n, 2) float array plus whether the input was a single point."""
    arr = np.asarray(points, dtype=np.float64)
    single = arr.ndim == 1
    arr = np.atleast_2d(arr)
    if arr.shape[1] == 3:
        w = arr[:, 2:3]
        if np.any(np.abs(w) < _MIN_W):
            raise CalibrationError("homogeneous input point with w ~ 0")
        arr = arr[:, :2] / w
    elif arr.shape[1] != 2:
        raise CalibrationError(f"points must be (x, y) or (x, y, w), got shape {arr.shape}")
    return arr, single


def apply_homography(H: np.ndarray, points) -> np.ndarray:
    """Map points through H with homogeneous normalization."""
    pts, single = _as_points(points)
    homog = np.column_stack([pts, np.ones(len(pts))]) @ np.asarray(H, dtype=np.float64).T
    w = homog[:, 2]
    if np.any(np.abs(w) < _MIN_W):
        raise CalibrationError("point maps to infinity (w ~ 0) under the homography")
    out = homog[:, :2] / w[:, None]
    return out[0] if single else out


def _checked_matrix(name: str, values) -> np.ndarray:
    matrix = np.array(values, dtype=np.float64).reshape(3, 3)
    if not np.all(np.isfinite(matrix)):
        raise CalibrationError(f"{name} has non-finite entries")
    if abs(np.linalg.det(matrix)) <= _MIN_DET:
        raise CalibrationError(f"{name} is singular (|det| <= {_MIN_DET})")
    matrix.setflags(write=False)
    return matrix


def _hartley_normalization(pts: np.ndarray) -> np.ndarray:
    """Similarity moving the centroid to 0 and the mean distance to sqrt(2)."""
    centroid = pts.mean(axis=0)
    mean_dist = np.mean(np.linalg.norm(pts - centroid, axis=1))
    if mean_dist < _COLLINEAR_TOL:
        raise CalibrationError("correspondences coincide")
    s = np.sqrt(2.0) / mean_dist
    return np.array([[s, 0.0, -s * centroid[0]], [0.0, s, -s * centroid[1]], [0.0, 0.0, 1.0]])


def _collinear(a, b, c, scale: float) -> bool:
    area2 = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
    return abs(area2) <= _COLLINEAR_TOL * max(scale, 1.0) ** 2


def fit_homography(src, dst) -> np.ndarray:
    """
    Normalized DLT over all correspondences src -> dst.

    Exact for four points in general position, least squares (algebraic
    error in normalized coordinates) beyond. The result has H[2, 2] = 1.

    Raises:
        CalibrationError: fewer than 4 pairs or a degenerate configuration
    """
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    if src.shape != dst.shape or src.ndim != 2 or src.shape[1] != 2:
        raise CalibrationError("src and dst must both be (n, 2) arrays")
    n = len(src)
    if n < 4:
        raise CalibrationError(f"need at least 4 correspondences, got {n}")
    if n == 4:
        for pts in (src, dst):
            scale = float(np.ptp(pts))
            for a, b, c in itertools.combinations(pts, 3):
                if _collinear(a, b, c, scale):
                    raise CalibrationError("degenerate configuration: 3 collinear points")

    T_src = _hartley_normalization(src)
    T_dst = _hartley_normalization(dst)
    s = apply_homography(T_src, src)
    d = apply_homography(T_dst, dst)

    A = np.zeros((2 * n, 9))
    for i, ((x, y), (u, v)) in enumerate(zip(s, d)):
        A[2 * i] = [-x, -y, -1.0, 0.0, 0.0, 0.0, u * x, u * y, u]
        A[2 * i + 1] = [0.0, 0.0, 0.0, -x, -y, -1.0, v * x, v * y, v]
    _, sv, vt = np.linalg.svd(A)
    # a one-dimensional null space is needed for a unique solution
    if sv[7] <= 1e-10 * sv[0]:
        raise CalibrationError("degenerate configuration: homography not determined")
    H = np.linalg.inv(T_dst) @ vt[-1].reshape(3, 3) @ T_src
    if abs(H[2, 2]) < _MIN_W:
        raise CalibrationError("degenerate configuration: H[2, 2] ~ 0")
    return H / H[2, 2]


def reprojection_rms(H: np.ndarray, src, dst) -> float:
    err = apply_homography(H, src) - np.asarray(dst, dtype=np.float64)
    return float(np.sqrt(np.mean(np.sum(err * err, axis=1))))


# ============================================================================
# CORRECTION MESH
# ============================================================================


@dataclass(frozen=True, eq=False)
class CorrectionMesh:
    """
    Piecewise-linear residual field over image coordinates.

    Exact at anchors, barycentric inside the Delaunay triangulation, the
    nearest anchor's residual outside the convex hull; an empty mesh is zero.
    """

    anchors: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    residuals: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))

    def __post_init__(self):
        anchors = np.asarray(self.anchors, dtype=np.float64).reshape(-1, 2)
        residuals = np.asarray(self.residuals, dtype=np.float64).reshape(-1, 2)
        if len(anchors) != len(residuals):
            raise CalibrationError("mesh anchors and residuals differ in length")
        anchors.setflags(write=False)
        residuals.setflags(write=False)
        object.__setattr__(self, "anchors", anchors)
        object.__setattr__(self, "residuals", residuals)
        tri, tree = None, None
        if len(anchors):
            if len(anchors) < 3 or np.linalg.matrix_rank(anchors - anchors.mean(axis=0), tol=_COLLINEAR_TOL) < 2:
                raise CalibrationError("mesh anchors are collinear")
            try:
                tri = Delaunay(anchors)
            except QhullError as e:
                raise CalibrationError(f"mesh triangulation failed: {e}") from e
            tree = cKDTree(anchors)
        object.__setattr__(self, "_tri", tri)
        object.__setattr__(self, "_tree", tree)

    @property
    def empty(self) -> bool:
        return len(self.anchors) == 0

    def residual(self, points) -> np.ndarray:
        pts, single = _as_points(points)
        out = np.zeros_like(pts)
        if self.empty:
            return out[0] if single else out

        dist, nearest = self._tree.query(pts)
        simplex = self._tri.find_simplex(pts)
        inside = simplex >= 0
        if np.any(inside):
            s = simplex[inside]
            transform = self._tri.transform[s]
            b = np.einsum("nij,nj->ni", transform[:, :2], pts[inside] - transform[:, 2])
            bary = np.column_stack([b, 1.0 - b.sum(axis=1)])
            vertices = self._tri.simplices[s]
            out[inside] = np.einsum("ni,nij->nj", bary, self.residuals[vertices])
        outside = ~inside
        out[outside] = self.residuals[nearest[outside]]
        # queries on an anchor return its residual unchanged
        on_anchor = dist == 0.0
        out[on_anchor] = self.residuals[nearest[on_anchor]]
        return out[0] if single else out


def build_mesh(image_xy, residuals_mm) -> CorrectionMesh:
    """Correction mesh from >= 4 measured post-rectification residual anchors."""
    image_xy = np.asarray(image_xy, dtype=np.float64).reshape(-1, 2)
    if len(image_xy) < 4:
        raise CalibrationError(f"need at least 4 mesh anchors, got {len(image_xy)}")
    return CorrectionMesh(anchors=image_xy, residuals=residuals_mm)


# ============================================================================
# FRAME CALIBRATION
# ============================================================================


@dataclass(frozen=True, eq=False)
class FrameCalibration:
    K_cam_img: np.ndarray
    K_img_robot: np.ndarray
    mesh: CorrectionMesh = field(default_factory=CorrectionMesh)

    def __post_init__(self):
        object.__setattr__(self, "K_cam_img", _checked_matrix("K_cam_img", self.K_cam_img))
        object.__setattr__(self, "K_img_robot", _checked_matrix("K_img_robot", self.K_img_robot))

    @classmethod
    def identity(cls) -> "FrameCalibration":
        return cls(np.eye(3), np.eye(3))

    @classmethod
    def scaled(cls, scale_mm_per_px: float, origin_mm: Tuple[float, float] = (0.0, 0.0)) -> "FrameCalibration":
        """Pure scale-and-shift image -> robot map, identity camera -> image."""
        K = np.array(
            [[scale_mm_per_px, 0.0, origin_mm[0]], [0.0, scale_mm_per_px, origin_mm[1]], [0.0, 0.0, 1.0]]
        )
        return cls(np.eye(3), K)

    def to_image(self, p_cam) -> np.ndarray:
        """Camera pixel -> image pixel (first link of the chain)."""
        return apply_homography(self.K_cam_img, p_cam)


def rectify(p_cam, calib: FrameCalibration) -> np.ndarray:
    """
    Camera pixel -> robot mm: K_img_robot (K_cam_img p) with normalization
    after each product, then the mesh residual looked up at the image point.
    Accepts (x, y), (x, y, w) or arrays of either.
    """
    p_img = calib.to_image(p_cam)
    p_robot = apply_homography(calib.K_img_robot, p_img)
    return p_robot + calib.mesh.residual(p_img)


def unrectify(p_robot, calib: FrameCalibration) -> np.ndarray:
    """Inverse homography chain (robot mm -> camera pixel); the mesh is not inverted."""
    p_img = apply_homography(np.linalg.inv(calib.K_img_robot), p_robot)
    return apply_homography(np.linalg.inv(calib.K_cam_img), p_img)


def calibrate_from_pairs(image_xy, robot_mm, K_cam_img: Optional[np.ndarray] = None) -> FrameCalibration:
    """
    Fit K_img_robot to manually jogged image/robot pairs and absorb what the
    homography leaves over into the correction mesh.
    """
    image_xy = np.asarray(image_xy, dtype=np.float64)
    robot_mm = np.asarray(robot_mm, dtype=np.float64)
    H = fit_homography(image_xy, robot_mm)
    residuals = robot_mm - apply_homography(H, image_xy)
    mesh = build_mesh(image_xy, residuals) if len(image_xy) >= 4 else CorrectionMesh()
    logger.info(
        "Calibrated from %d pairs: homography RMS %.4f mm",
        len(image_xy),
        reprojection_rms(H, image_xy, robot_mm),
    )
    return FrameCalibration(np.eye(3) if K_cam_img is None else K_cam_img, H, mesh)


# ============================================================================
# CALIBRATION FILES
# ============================================================================


class MeshAnchor(BaseModel):
    image_xy: List[float] = Field(min_length=2, max_length=2)
    residual_mm: List[float] = Field(min_length=2, max_length=2)


class CalibrationFile(BaseModel):
    calib_version: int = CALIB_VERSION
    K_cam_img: List[float] = Field(min_length=9, max_length=9)
    K_img_robot: List[float] = Field(min_length=9, max_length=9)
    mesh: List[MeshAnchor] = Field(default_factory=list)


def calibration_to_dict(calib: FrameCalibration) -> dict:
    doc = CalibrationFile(
        K_cam_img=calib.K_cam_img.ravel().tolist(),
        K_img_robot=calib.K_img_robot.ravel().tolist(),
        mesh=[
            MeshAnchor(image_xy=a.tolist(), residual_mm=r.tolist())
            for a, r in zip(calib.mesh.anchors, calib.mesh.residuals)
        ],
    )
    return doc.model_dump()


def calibration_from_dict(data: dict) -> FrameCalibration:
    try:
        doc = CalibrationFile.model_validate(data)
    except ValidationError as e:
        raise CalibrationError(f"invalid calibration document: {e.errors()[0]['msg']}") from e
    if doc.calib_version != CALIB_VERSION:
        raise CalibrationError(f"unsupported calib_version {doc.calib_version} (expected {CALIB_VERSION})")
    mesh = CorrectionMesh()
    if doc.mesh:
        mesh = CorrectionMesh(
            anchors=[a.image_xy for a in doc.mesh],
            residuals=[a.residual_mm for a in doc.mesh],
        )
    return FrameCalibration(doc.K_cam_img, doc.K_img_robot, mesh)


def save_calibration(calib: FrameCalibration, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        json.dump(calibration_to_dict(calib), f, indent=2)
        f.write("\n")
    return path


def load_calibration(path: Union[str, Path]) -> FrameCalibration:
    path = Path(path)
    try:
        with open(path, "r") as f:
            data = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise CalibrationError(f"cannot read calibration file {path}: {e}") from e
    calib = calibration_from_dict(data)
    logger.info("Loaded calibration from %s (%d mesh anchors)", path, len(calib.mesh.anchors))
    return calib


def rectify_points(points: Sequence[Tuple[float, float]], calib: Optional[FrameCalibration]) -> np.ndarray:
    """rectify() that treats a missing calibration as identity."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    return pts.copy() if calib is None else rectify(pts, calib)
