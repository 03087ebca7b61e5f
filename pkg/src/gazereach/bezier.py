"""Reaching curves with two endpoints and one control point, in the 7-D pose chart.

The chart anchors rotations at the start orientation: a pose maps to
(position, rotation-vector relative to start, gripper). Curve shape is carried
by a 7-D displacement from the endpoint mean pose to the control pose.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import (
    Pose7,
    PoseDelta7,
    compose,
    delta_between,
    quat_conjugate,
    quat_from_rotvec,
    quat_multiply,
    quat_slerp,
    quat_to_rotvec,
)


@dataclass(frozen=True)
class BezierReach:
    """A reaching plan: start pose, target (bottleneck) pose, and the control-point offset."""

    start: Pose7
    end: Pose7
    bezier_vector: PoseDelta7


def mean_pose(a: Pose7, b: Pose7) -> Pose7:
    """Componentwise mean: arithmetic position/gripper, geodesic orientation midpoint."""
    return Pose7(0.5 * (a.position + b.position),
                 quat_slerp(a.orientation, b.orientation, 0.5),
                 0.5 * (a.gripper + b.gripper))


def control_pose(reach: BezierReach) -> Pose7:
    return compose(mean_pose(reach.start, reach.end), reach.bezier_vector)


def _to_chart(pose: Pose7, anchor_q: np.ndarray) -> np.ndarray:
    rot = quat_to_rotvec(quat_multiply(quat_conjugate(anchor_q), pose.orientation))
    return np.concatenate([pose.position, rot, [pose.gripper]])


def _from_chart(v: np.ndarray, anchor_q: np.ndarray) -> Pose7:
    return Pose7(v[:3], quat_multiply(anchor_q, quat_from_rotvec(v[3:6])), v[6])


def eval_reach(reach: BezierReach, s: float) -> Pose7:
    """Curve point at parameter s in [0, 1]; s=0 is the start, s=1 the end."""
    if not 0.0 <= s <= 1.0:
        raise ValueError("parameter out of range")
    anchor = reach.start.orientation
    p0 = _to_chart(reach.start, anchor)
    p1 = _to_chart(reach.end, anchor)
    c = _to_chart(control_pose(reach), anchor)
    v = (1.0 - s) ** 2 * p0 + 2.0 * s * (1.0 - s) * c + s**2 * p1
    return _from_chart(v, anchor)


def fit_reach(samples: list[tuple[float, Pose7]]) -> tuple[PoseDelta7, float]:
    """Closed-form least-squares control point for a sampled reaching motion.

    `samples` are (parameter, pose) pairs with parameters starting at 0 and
    ending at 1; the first and last poses are taken as the curve endpoints.
    Returns the fitted control offset from the endpoint mean pose plus the
    RMS residual in chart units.
    """
    if len(samples) < 3:
        raise ValueError("need at least 3 samples")
    svals = np.array([s for s, _ in samples], dtype=np.float64)
    if abs(svals[0]) > 1e-12 or abs(svals[-1] - 1.0) > 1e-12:
        raise ValueError("parameters must start at 0 and end at 1")
    start = samples[0][1]
    end = samples[-1][1]
    anchor = start.orientation
    p0 = _to_chart(start, anchor)
    p1 = _to_chart(end, anchor)
    x = np.stack([_to_chart(p, anchor) for _, p in samples])

    w = 2.0 * svals * (1.0 - svals)
    denom = float(np.dot(w, w))
    if denom < 1e-12:
        raise ValueError("underdetermined fit")
    resid = x - np.outer((1.0 - svals) ** 2, p0) - np.outer(svals**2, p1)
    c = resid.T @ w / denom

    pred = np.outer((1.0 - svals) ** 2, p0) + np.outer(w, c) + np.outer(svals**2, p1)
    rms = float(np.sqrt(np.mean(np.sum((pred - x) ** 2, axis=1))))

    control = _from_chart(c, anchor)
    return delta_between(mean_pose(start, end), control), rms


def parameterize(timestamps) -> np.ndarray:
    """Affine map of strictly increasing timestamps onto [0, 1]."""
    t = np.asarray(timestamps, dtype=np.float64)
    if t.ndim != 1 or t.size < 2:
        raise ValueError("need at least 2 timestamps")
    if np.any(np.diff(t) <= 0):
        raise ValueError("timestamps must be strictly increasing")
    return (t - t[0]) / (t[-1] - t[0])


def chord_length(reach: BezierReach) -> float:
    return float(np.linalg.norm(reach.end.position - reach.start.position))


def steps_for_reach(reach: BezierReach, speed: float = 0.10, dt: float = 0.1) -> int:
    """Step count for a constant-parameter-speed traversal at a nominal Cartesian speed."""
    if speed <= 0 or dt <= 0:
        raise ValueError("speed and dt must be positive")
    return max(1, math.ceil(chord_length(reach) / (speed * dt)))
