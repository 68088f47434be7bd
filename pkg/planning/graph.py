"""
Tour graphs over predicted contact poses.

Every valid pose becomes a node in the robot frame; node 0 is the robot home.
With an EffectorGeometry the node coordinates are gantry (effector) targets,
so the XY travel of the emitted program equals the tour length.
"""

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from config import DEFAULT_HOME_MM
from errors import GraphError
from poses.optimizer import PoseSet
from robot.calibration import FrameCalibration, rectify
from robot.kinematics import EffectorGeometry, effector_target

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GraphNode:
    x_mm: float
    y_mm: float
    segment_id: Optional[str] = None
    pose_index: Optional[int] = None
    contact_mm: Tuple[float, float] = (0.0, 0.0)
    theta_deg: float = 0.0

    @property
    def is_home(self) -> bool:
        return self.segment_id is None


@dataclass(frozen=True, eq=False)
class TourGraph:
    nodes: List[GraphNode]
    dist: np.ndarray
    start: int = 0

    def __post_init__(self):
        dist = np.asarray(self.dist, dtype=np.float64)
        n = len(self.nodes)
        if dist.shape != (n, n):
            raise GraphError(f"distance matrix shape {dist.shape} does not match {n} nodes")
        if not 0 <= self.start < n:
            raise GraphError(f"start {self.start} outside 0..{n - 1}")
        dist.setflags(write=False)
        object.__setattr__(self, "dist", dist)

    @property
    def size(self) -> int:
        return len(self.nodes)

    def points(self) -> np.ndarray:
        return np.array([(nd.x_mm, nd.y_mm) for nd in self.nodes], dtype=np.float64)


def distance_matrix(points) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    diff = pts[:, None, :] - pts[None, :, :]
    return np.sqrt((diff * diff).sum(axis=-1))


def graph_from_points(points, start: int = 0) -> TourGraph:
    """Complete Euclidean graph over bare (x, y) mm points; node `start` is home."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if len(pts) == 0:
        raise GraphError("no points")
    nodes = [
        GraphNode(
            float(x),
            float(y),
            segment_id=None if i == start else f"p{i}",
            pose_index=None if i == start else 0,
            contact_mm=(float(x), float(y)),
        )
        for i, (x, y) in enumerate(pts)
    ]
    return TourGraph(nodes, distance_matrix(pts), start)


def _robot_pose(ps: PoseSet, x_px: float, y_px: float, theta: float, calib: Optional[FrameCalibration]):
    """Contact point (mm) and contact-line angle (deg, [0, 180)) in the robot frame."""
    if calib is None:
        ox, oy = ps.origin_mm
        s = ps.scale_mm_per_px
        return (ox + s * x_px, oy + s * y_px), math.degrees(theta) % 180.0
    ox, oy = ps.offset_px
    p = np.array([[ox + x_px, oy + y_px], [ox + x_px + math.cos(theta), oy + y_px + math.sin(theta)]])
    (cx, cy), (dx, dy) = rectify(p, calib)
    angle = math.degrees(math.atan2(dy - cy, dx - cx)) % 180.0
    return (float(cx), float(cy)), angle


def build_graph(
    pose_sets: Sequence[PoseSet],
    calib: Optional[FrameCalibration] = None,
    home: Tuple[float, float] = DEFAULT_HOME_MM,
    geometry: Optional[EffectorGeometry] = None,
) -> TourGraph:
    """
    Nodes are the robot-frame centres of all valid poses, preceded by home.

    Without a calibration, robot mm = origin_mm + scale_mm_per_px * pose_px;
    with one, camera pixel = offset_px + pose_px goes through rectify().

    Raises:
        GraphError: no valid pose in any set
    """
    nodes = [GraphNode(float(home[0]), float(home[1]), contact_mm=(float(home[0]), float(home[1])))]
    for ps in pose_sets:
        if ps.failed:
            continue
        for i, pose in enumerate(ps.poses):
            if not (ps.pose_valid and ps.pose_valid[i]):
                continue
            contact, theta_deg = _robot_pose(ps, pose.x, pose.y, pose.theta, calib)
            x, y = contact
            if geometry is not None:
                x, y, _ = effector_target(contact[0], contact[1], theta_deg, geometry)
            nodes.append(GraphNode(x, y, ps.segment_id, i, contact, theta_deg))
    if len(nodes) == 1:
        raise GraphError("no valid poses to plan a route over")
    graph = TourGraph(nodes, distance_matrix([(nd.x_mm, nd.y_mm) for nd in nodes]), 0)
    logger.info("Built tour graph with %d nodes (%d poses + home)", graph.size, graph.size - 1)
    return graph


# ============================================================================
# TOURS
# ============================================================================


@dataclass
class Tour:
    order: Tuple[int, ...]
    length_mm: float
    algorithm: str
    seed: Optional[int] = None
    closed_length_mm: Optional[float] = None
    history: List[float] = field(default_factory=list)

    def waypoints(self, graph: TourGraph) -> List[GraphNode]:
        return [graph.nodes[i] for i in self.order]


def tour_length(graph: TourGraph, order: Sequence[int]) -> float:
    """Open-loop length: sum of consecutive edges, no return to start."""
    idx = np.asarray(order, dtype=np.intp)
    if len(idx) < 2:
        return 0.0
    return float(graph.dist[idx[:-1], idx[1:]].sum())


def make_tour(graph: TourGraph, order: Sequence[int], algorithm: str, seed: Optional[int] = None, **extra) -> Tour:
    order = tuple(int(i) for i in order)
    if len(order) != graph.size or sorted(order) != list(range(graph.size)):
        raise GraphError(f"{algorithm}: order is not a permutation of the {graph.size} nodes")
    if order[0] != graph.start:
        raise GraphError(f"{algorithm}: tour must begin at node {graph.start}")
    return Tour(order, tour_length(graph, order), algorithm, seed, **extra)


TOUR_CSV_FIELDS = [
    "step",
    "node",
    "segment_id",
    "pose_index",
    "x_mm",
    "y_mm",
    "theta_deg",
    "contact_x_mm",
    "contact_y_mm",
]


def write_tour_csv(graph: TourGraph, tour: Tour, path: Union[str, Path]) -> Path:
    """Ordered robot-frame waypoints, home first."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=TOUR_CSV_FIELDS, lineterminator="\n")
        writer.writeheader()
        for step, i in enumerate(tour.order):
            nd = graph.nodes[i]
            writer.writerow(
                {
                    "step": step,
                    "node": i,
                    "segment_id": nd.segment_id or "",
                    "pose_index": "" if nd.pose_index is None else nd.pose_index,
                    "x_mm": repr(nd.x_mm),
                    "y_mm": repr(nd.y_mm),
                    "theta_deg": repr(nd.theta_deg),
                    "contact_x_mm": repr(nd.contact_mm[0]),
                    "contact_y_mm": repr(nd.contact_mm[1]),
                }
            )
    return path


def read_tour_csv(path: Union[str, Path]) -> List[GraphNode]:
    """Waypoints in tour order, as written by write_tour_csv()."""
    path = Path(path)
    waypoints = []
    try:
        with open(path, "r", newline="") as f:
            for row in csv.DictReader(f):
                segment = row["segment_id"] or None
                waypoints.append(
                    GraphNode(
                        float(row["x_mm"]),
                        float(row["y_mm"]),
                        segment,
                        int(row["pose_index"]) if segment is not None else None,
                        (float(row["contact_x_mm"]), float(row["contact_y_mm"])),
                        float(row["theta_deg"]),
                    )
                )
    except (OSError, KeyError, ValueError) as e:
        raise GraphError(f"cannot read tour file {path}: {e}") from e
    if not waypoints:
        raise GraphError(f"{path}: empty tour")
    return waypoints
