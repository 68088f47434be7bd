from shapes.mask import SegmentMask, load_mask, write_mask
from shapes.field import ScalarField, smooth, read_sfld, write_sfld
from shapes.footprint import Pose, ProbeFootprint, render_footprint, tip_positions

__all__ = [
    "SegmentMask",
    "load_mask",
    "write_mask",
    "ScalarField",
    "smooth",
    "read_sfld",
    "write_sfld",
    "Pose",
    "ProbeFootprint",
    "render_footprint",
    "tip_positions",
]
