import json
import math

import numpy as np
import pytest
from scipy.spatial import Delaunay

from errors import CalibrationError, GcodeError, MeasurementError
from planning.graph import GraphNode, build_graph, graph_from_points
from planning.greedy import greedy_dijkstra
from poses.optimizer import PoseSet
from robot.calibration import (
    FrameCalibration,
    apply_homography,
    build_mesh,
    calibrate_from_pairs,
    fit_homography,
    load_calibration,
    rectify,
    rectify_points,
    reprojection_rms,
    save_calibration,
    unrectify,
)
from robot.gcode import GcodeConfig, WorkEnvelope, check_gcode, emit_gcode, probe_order
from robot.kinematics import EffectorGeometry, contact_point, effector_target, led_spacing
from shapes.footprint import Pose

GEOM = EffectorGeometry(30.0)
H_TRUE = np.array([[0.11, 0.004, 12.0], [-0.003, 0.105, 25.0], [1e-5, -2e-5, 1.0]])
H_PX = np.array([[1.02, 0.01, 5.0], [-0.01, 0.98, 3.0], [1e-6, 0.0, 1.0]])


def grid_points(n=10, step=50.0):
    xs, ys = np.meshgrid(np.arange(n) * step, np.arange(n) * step)
    return np.column_stack([xs.ravel(), ys.ravel()])


# ============================================================================
# KINEMATICS
# ============================================================================


def test_effector_target_inverts_forward_model(rng):
    for _ in range(100):
        x0, y0 = rng.uniform(-50, 250, 2)
        theta = rng.uniform(0, 180)
        geom = EffectorGeometry(rng.uniform(5, 60))
        x_t, y_t, t = effector_target(x0, y0, theta, geom)
        assert t == theta
        assert contact_point(x_t, y_t, theta, geom) == pytest.approx((x0, y0), abs=1e-9)


def test_zero_angle_target_is_the_contact():
    assert effector_target(10.0, 20.0, 0.0, GEOM) == (10.0, 20.0, 0.0)


def test_right_angle_target():
    x_t, y_t, _ = effector_target(0.0, 0.0, 90.0, GEOM)
    assert (x_t, y_t) == pytest.approx((-30.0, -30.0))


def test_led_spacing():
    assert led_spacing(5.0, 3.0) == pytest.approx(4.0)
    with pytest.raises(MeasurementError):
        led_spacing(3.0, 3.0)


def test_nonpositive_arm_is_a_calibration_error():
    with pytest.raises(CalibrationError, match="R0 must be > 0"):
        EffectorGeometry(0.0)
    with pytest.raises(CalibrationError):
        EffectorGeometry(-2.5)


# ============================================================================
# HOMOGRAPHIES AND MESH
# ============================================================================


def test_homography_recovered_from_exact_pairs():
    src = grid_points()
    dst = apply_homography(H_TRUE, src)
    H = fit_homography(src, dst)
    np.testing.assert_allclose(apply_homography(H, src), dst, atol=1e-9)
    assert H[2, 2] == 1.0


def test_homography_from_four_points():
    src = np.array([[0, 0], [100, 0], [100, 80], [0, 80]], dtype=float)
    dst = apply_homography(H_TRUE, src)
    np.testing.assert_allclose(apply_homography(fit_homography(src, dst), src), dst, atol=1e-9)


def test_noisy_pairs_fit_within_noise(rng):
    src = grid_points()
    dst_px = apply_homography(H_PX, src)
    noisy = dst_px + rng.normal(0, 0.1, dst_px.shape)
    H = fit_homography(src, noisy)
    assert reprojection_rms(H, src, noisy) < 0.3


def test_degenerate_correspondences():
    collinear = np.array([[0, 0], [1, 1], [2, 2], [5, 0]], dtype=float)
    with pytest.raises(CalibrationError, match="collinear"):
        fit_homography(collinear, collinear + 1.0)
    with pytest.raises(CalibrationError):
        fit_homography(collinear[:3], collinear[:3])


def test_singular_matrix_rejected():
    with pytest.raises(CalibrationError, match="singular"):
        FrameCalibration(np.eye(3), np.zeros((3, 3)))


def test_rectify_round_trip():
    calib = FrameCalibration(np.array([[1.0, 0.01, 2.0], [0.0, 0.99, -1.0], [0.0, 0.0, 1.0]]), H_TRUE)
    cam = grid_points()
    np.testing.assert_allclose(unrectify(rectify(cam, calib), calib), cam, atol=1e-9)


def test_rectify_matches_stepwise_chain(rng):
    K_cam_img = np.eye(3) + rng.normal(0, 0.01, (3, 3))
    K_cam_img[2] = [rng.normal(0, 1e-5), rng.normal(0, 1e-5), 1.0]
    K_img_robot = np.array([[0.1, 0.002, 10.0], [-0.001, 0.1, 20.0], [0.0, 0.0, 1.0]]) + rng.normal(0, 1e-4, (3, 3))
    mesh = build_mesh(rng.uniform(0, 500, (10, 2)), rng.normal(0, 0.1, (10, 2)))
    calib = FrameCalibration(K_cam_img, K_img_robot, mesh)

    for p in rng.uniform(0, 500, (50, 2)):
        img = K_cam_img @ [p[0], p[1], 1.0]
        img = img[:2] / img[2]
        robot = K_img_robot @ [img[0], img[1], 1.0]
        expected = robot[:2] / robot[2] + mesh.residual(img)
        np.testing.assert_allclose(rectify(p, calib), expected, atol=1e-9)



def test_homogeneous_and_single_points():
    calib = FrameCalibration.scaled(0.5, (1.0, 2.0))
    np.testing.assert_allclose(rectify((4.0, 6.0), calib), [3.0, 5.0])
    np.testing.assert_allclose(rectify((8.0, 12.0, 2.0), calib), [3.0, 5.0])
    with pytest.raises(CalibrationError):
        rectify((1.0, 1.0, 0.0), calib)


def test_mesh_is_exact_at_anchors_and_zero_when_empty(rng):
    anchors = rng.uniform(0, 100, (8, 2))
    residuals = rng.normal(0, 0.2, (8, 2))
    mesh = build_mesh(anchors, residuals)
    np.testing.assert_allclose(mesh.residual(anchors), residuals, atol=1e-12)
    inside = anchors.mean(axis=0)
    assert np.all(np.abs(mesh.residual(inside)) <= np.abs(residuals).max() + 1e-12)
    np.testing.assert_array_equal(FrameCalibration.identity().mesh.residual((5.0, 5.0)), [0.0, 0.0])


def test_mesh_needs_four_anchors():
    with pytest.raises(CalibrationError):
        build_mesh([[0, 0], [1, 0], [0, 1]], np.zeros((3, 2)))


def test_mesh_triangle_centroid_is_mean_of_its_corrections(rng):
    anchors = rng.uniform(0, 100, (12, 2))
    residuals = rng.normal(0, 0.2, (12, 2))
    mesh = build_mesh(anchors, residuals)
    simplices = Delaunay(anchors).simplices
    centroids = anchors[simplices].mean(axis=1)
    np.testing.assert_allclose(mesh.residual(centroids), residuals[simplices].mean(axis=1), atol=1e-12)



def test_calibration_from_jogged_pairs_hits_every_pair(rng):
    image = rng.uniform(0, 1000, (12, 2))
    robot = apply_homography(H_TRUE, image) + rng.normal(0, 0.05, (12, 2))
    calib = calibrate_from_pairs(image, robot)
    np.testing.assert_allclose(rectify(image, calib), robot, atol=1e-9)


def test_calibration_file(tmp_path, rng):
    image = rng.uniform(0, 1000, (6, 2))
    calib = calibrate_from_pairs(image, apply_homography(H_TRUE, image) + rng.normal(0, 0.05, (6, 2)))
    loaded = load_calibration(save_calibration(calib, tmp_path / "calib.json"))
    probe = rng.uniform(0, 1000, (20, 2))
    np.testing.assert_allclose(rectify(probe, loaded), rectify(probe, calib), atol=1e-9)

    doc = json.loads((tmp_path / "calib.json").read_text())
    doc["calib_version"] = 2
    (tmp_path / "v2.json").write_text(json.dumps(doc))
    with pytest.raises(CalibrationError, match="calib_version"):
        load_calibration(tmp_path / "v2.json")


def test_missing_calibration_is_identity():
    pts = [(1.0, 2.0), (3.0, 4.0)]
    np.testing.assert_array_equal(rectify_points(pts, None), pts)


# ============================================================================
# G-CODE
# ============================================================================


def waypoint(x, y, theta=0.0, segment="s0", index=0):
    return GraphNode(x, y, segment, index, (x, y), theta)


def test_single_waypoint_program():
    program = emit_gcode([GraphNode(0.0, 0.0), waypoint(10.0, 20.0)], GEOM)
    assert "G1 X10.000000000 Y20.000000000 Z0.000000000 F300.0" in program.commands
    assert program.contact_cycles == 1
    check = check_gcode(program.text(), program.safe_z)
    assert check.safe and check.contact_cycles == 1
    assert check.xy_travel_mm == pytest.approx(math.hypot(10, 20), abs=1e-6)


def test_rotated_waypoint_uses_effector_target():
    program = emit_gcode([GraphNode(0.0, 0.0), waypoint(100.0, 100.0, 90.0)], GEOM, GcodeConfig(rotary_axis="E"))
    assert "G0 X70.000000000 Y70.000000000 F3000.0" in program.commands
    assert any(c.startswith("G0 E90.000000000") for c in program.commands)


def test_film_array_tour_program(rng):
    points = np.vstack([[0.0, 0.0], rng.uniform(0, 150, (105, 2))])
    graph = graph_from_points(points)
    tour = greedy_dijkstra(graph)
    program = emit_gcode(tour.waypoints(graph), GEOM)
    check = check_gcode(program.text(), program.safe_z)
    assert program.contact_cycles == 105 == check.contact_cycles
    assert check.safe
    assert check.xy_travel_mm == pytest.approx(tour.length_mm, abs=1e-6)
    expected = [(graph.nodes[i].segment_id, graph.nodes[i].pose_index) for i in tour.order[1:]]
    assert probe_order(program.text()) == expected


def test_program_travel_matches_tour_with_angles():
    sets = [
        PoseSet(
            poses=[Pose(10, 10, 0.4), Pose(40, 30, 1.9), Pose(25, 45, 2.8)],
            segment_id="film",
            final_loss=None,
            valid=True,
            pose_valid=[True, True, True],
            scale_mm_per_px=0.5,
            origin_mm=(60.0, 80.0),
        )
    ]
    graph = build_graph(sets, geometry=GEOM)
    tour = greedy_dijkstra(graph)
    program = emit_gcode(tour.waypoints(graph), GEOM)
    assert check_gcode(program.text(), program.safe_z).xy_travel_mm == pytest.approx(tour.length_mm, abs=1e-6)


def test_identical_tours_give_identical_programs():
    waypoints = [GraphNode(0.0, 0.0), waypoint(10.0 / 3, 20.0 / 7, 33.3)]
    assert emit_gcode(waypoints, GEOM).text() == emit_gcode(list(waypoints), GEOM).text()


def test_target_outside_envelope():
    with pytest.raises(GcodeError, match="outside work envelope"):
        emit_gcode([GraphNode(0.0, 0.0), waypoint(500.0, 10.0)], GEOM)
    small = GcodeConfig(envelope=WorkEnvelope(x_min=-1, x_max=1, y_min=-1, y_max=1))
    with pytest.raises(GcodeError):
        emit_gcode([GraphNode(5.0, 5.0)], GEOM, small)


def test_empty_tour_and_bad_heights():
    with pytest.raises(GcodeError):
        emit_gcode([], GEOM)
    with pytest.raises(ValueError):
        GcodeConfig(safe_z=1.0, plunge_z=2.0)


def test_checker_flags_lateral_motion_while_lowered():
    text = "G0 X0 Y0 Z10\nG1 Z0\nG1 X5 Y0\nG1 Z10\n"
    check = check_gcode(text, 10.0)
    assert not check.safe
    assert "line 3" in check.violations[0]
    assert check.contact_cycles == 1


def test_segment_id_with_whitespace_is_quoted_and_read_back():
    program = emit_gcode([GraphNode(0.0, 0.0), waypoint(10.0, 20.0, segment="film A", index=2)], GEOM)
    assert any(c.startswith(';PROBE segment="film A" pose=2 ') for c in program.commands)
    check = check_gcode(program.text(), program.safe_z)
    assert check.probes[0]["segment"] == "film A"
    assert check.probes[0]["theta"] == "0.0000"
    assert probe_order(program.text()) == [("film A", 2)]


def test_bare_ids_stay_unquoted_and_odd_ids_survive():
    odd = 'a "b"=c;d\\e'
    waypoints = [GraphNode(0.0, 0.0), waypoint(10.0, 20.0, segment=odd), waypoint(30.0, 20.0, segment="film_07", index=1)]
    program = emit_gcode(waypoints, GEOM)
    assert ";PROBE segment=film_07 pose=1 " in program.text()
    assert probe_order(program.text()) == [(odd, 0), ("film_07", 1)]


def test_malformed_probe_comments_raise_gcode_error():
    with pytest.raises(GcodeError, match="line 2"):
        check_gcode("G0 X0 Y0 Z10\n;PROBE segment=film A pose=0\n", 10.0)
    with pytest.raises(GcodeError):
        check_gcode(';PROBE segment="film pose=0\n', 10.0)
    with pytest.raises(GcodeError, match="bad pose index"):
        probe_order(";PROBE segment=a pose=x\n")
