# robot.gcode depends on planning.graph, which depends on this package's
# calibration and kinematics modules; import it directly, not from here.
from robot.calibration import (
    CorrectionMesh,
    FrameCalibration,
    build_mesh,
    fit_homography,
    load_calibration,
    rectify,
    save_calibration,
    unrectify,
)
from robot.kinematics import EffectorGeometry, contact_point, effector_target, led_spacing

__all__ = [
    "CorrectionMesh",
    "FrameCalibration",
    "build_mesh",
    "fit_homography",
    "load_calibration",
    "rectify",
    "save_calibration",
    "unrectify",
    "EffectorGeometry",
    "contact_point",
    "effector_target",
    "led_spacing",
]
