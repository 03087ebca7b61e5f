"""Gaze-centered point-cloud imitation: geometry, bottleneck segmentation,
Bezier reaching, a kinematic tabletop benchmark, and an ID/OOD evaluation CLI."""

from .geometry import (
    CameraModel,
    GazeCloud,
    PointCloud,
    Pose7,
    PoseDelta7,
    backproject,
    compose,
    crop_gaze_cube,
    delta_between,
)
from .bezier import BezierReach, control_pose, eval_reach, fit_reach, parameterize

__all__ = [
    "BezierReach",
    "CameraModel",
    "GazeCloud",
    "PointCloud",
    "Pose7",
    "PoseDelta7",
    "backproject",
    "compose",
    "control_pose",
    "crop_gaze_cube",
    "delta_between",
    "eval_reach",
    "fit_reach",
    "parameterize",
]

__version__ = "0.1.0"
