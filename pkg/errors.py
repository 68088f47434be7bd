"""
Error types shared across probemap packages.

All library errors derive from ProbeMapError and from ValueError, so callers
that only catch ValueError keep working.
"""


class ProbeMapError(ValueError):
    """Base class for every error raised by probemap."""


class MaskError(ProbeMapError):
    """Unreadable, empty or non-grayscale segment mask."""


class FieldError(ProbeMapError):
    """Invalid smoothing / footprint parameters or malformed field files."""


class LossError(ProbeMapError):
    """Non-finite loss or gradient (usually a mis-scaled sigmoid steepness)."""


class OptimizerError(ProbeMapError):
    pass


class GraphError(ProbeMapError):
    """Graph construction failed, e.g. no valid poses."""


class CalibrationError(ProbeMapError):
    """Degenerate homography, correspondences or mesh anchors."""


class MeasurementError(ProbeMapError):
    """Malformed IV records or out-of-range geometry inputs."""


class GcodeError(ProbeMapError):
    """Waypoint outside the work envelope or empty tour."""


class ConfigError(ProbeMapError):
    pass


class StageError(ProbeMapError):
    """A pipeline stage failed; carries the stage tag."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage
        self.message = message
