"""Poses, quaternions, point clouds, pinhole projection, and the gaze-centered cubic crop.

Conventions:
- quaternions are (w, x, y, z), always unit norm after construction
- rotation deltas use the rotation-vector chart (axis * angle, radians), angle < pi
- position deltas are expressed in world axes anchored at the current pose
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)

GRIPPER_LIMITS = (0.0, 1.2)  # radians, mechanical stops

_ROTVEC_EPS = 1e-12


def _vec(x, n: int) -> np.ndarray:
    a = np.asarray(x, dtype=np.float64)
    if a.shape != (n,):
        raise ValueError(f"expected {n}-vector, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("non-finite component")
    return a


# ---------------------------------------------------------------------------
# quaternion helpers (w, x, y, z)

def quat_identity() -> np.ndarray:
    return np.array([1.0, 0.0, 0.0, 0.0])


def quat_normalize(q) -> np.ndarray:
    """Unit-normalize; inputs already unit to 1e-9 are returned bit-unchanged
    so that serialization round-trips exactly."""
    q = _vec(q, 4)
    n = np.linalg.norm(q)
    if n < 1e-12:
        raise ValueError("zero-norm quaternion")
    if abs(n - 1.0) <= 1e-9:
        return q
    return q / n


def quat_multiply(q1: np.ndarray, q2: np.ndarray) -> np.ndarray:
    w1, x1, y1, z1 = q1
    w2, x2, y2, z2 = q2
    return np.array([
        w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
        w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
        w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
        w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
    ])


def quat_conjugate(q: np.ndarray) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_rotate(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rotate vector(s) v by quaternion q. v may be (3,) or (n, 3)."""
    w, x, y, z = q
    u = np.array([x, y, z])
    v = np.asarray(v, dtype=np.float64)
    uv = np.cross(u, v)
    return v + 2.0 * (w * uv + np.cross(u, uv))


def quat_from_rotvec(r) -> np.ndarray:
    r = _vec(r, 3)
    angle = np.linalg.norm(r)
    if angle < 1e-12:
        # second-order series keeps the map smooth through zero
        return quat_normalize(np.array([1.0, 0.5 * r[0], 0.5 * r[1], 0.5 * r[2]]))
    axis = r / angle
    half = 0.5 * angle
    s = np.sin(half)
    return np.array([np.cos(half), axis[0] * s, axis[1] * s, axis[2] * s])


def quat_to_rotvec(q: np.ndarray) -> np.ndarray:
    """Principal-chart rotation vector; raises on rotations at pi."""
    q = np.asarray(q, dtype=np.float64)
    if q[0] < 0.0:
        q = -q
    s = np.linalg.norm(q[1:])
    angle = 2.0 * np.arctan2(s, q[0])
    if angle >= np.pi - _ROTVEC_EPS:
        raise ValueError("antipodal rotation")
    if s < 1e-12:
        return 2.0 * q[1:] / q[0]
    return q[1:] * (angle / s)


def quat_slerp(q0: np.ndarray, q1: np.ndarray, t: float) -> np.ndarray:
    """Shortest-arc spherical interpolation."""
    q0 = quat_normalize(q0)
    q1 = quat_normalize(q1)
    dot = float(np.dot(q0, q1))
    if dot < 0.0:
        q1 = -q1
        dot = -dot
    if dot > 1.0 - 1e-12:
        return quat_normalize(q0 + t * (q1 - q0))
    theta = np.arccos(np.clip(dot, -1.0, 1.0))
    s = np.sin(theta)
    return quat_normalize((np.sin((1.0 - t) * theta) / s) * q0 + (np.sin(t * theta) / s) * q1)


def quat_from_matrix(m: np.ndarray) -> np.ndarray:
    """Rotation matrix -> quaternion (Shepperd's method)."""
    m = np.asarray(m, dtype=np.float64)
    tr = m[0, 0] + m[1, 1] + m[2, 2]
    if tr > 0:
        s = np.sqrt(tr + 1.0) * 2.0
        q = np.array([0.25 * s,
                      (m[2, 1] - m[1, 2]) / s,
                      (m[0, 2] - m[2, 0]) / s,
                      (m[1, 0] - m[0, 1]) / s])
    elif m[0, 0] > m[1, 1] and m[0, 0] > m[2, 2]:
        s = np.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2.0
        q = np.array([(m[2, 1] - m[1, 2]) / s,
                      0.25 * s,
                      (m[0, 1] + m[1, 0]) / s,
                      (m[0, 2] + m[2, 0]) / s])
    elif m[1, 1] > m[2, 2]:
        s = np.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2.0
        q = np.array([(m[0, 2] - m[2, 0]) / s,
                      (m[0, 1] + m[1, 0]) / s,
                      0.25 * s,
                      (m[1, 2] + m[2, 1]) / s])
    else:
        s = np.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2.0
        q = np.array([(m[1, 0] - m[0, 1]) / s,
                      (m[0, 2] + m[2, 0]) / s,
                      (m[1, 2] + m[2, 1]) / s,
                      0.25 * s])
    return quat_normalize(q)


def yaw_of_quat(q: np.ndarray) -> float:
    """Heading (rotation about +z) of a quaternion."""
    w, x, y, z = q
    return float(np.arctan2(2.0 * (w * z + x * y), 1.0 - 2.0 * (y * y + z * z)))


# ---------------------------------------------------------------------------
# pose types

@dataclass(frozen=True)
class Pose7:
    """End-effector configuration: position (m), unit quaternion (w,x,y,z), gripper angle (rad)."""

    position: np.ndarray
    orientation: np.ndarray
    gripper: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "position", _vec(self.position, 3))
        object.__setattr__(self, "orientation", quat_normalize(self.orientation))
        g = float(np.clip(self.gripper, *GRIPPER_LIMITS))
        object.__setattr__(self, "gripper", g)

    @staticmethod
    def identity() -> "Pose7":
        return Pose7(np.zeros(3), quat_identity(), 0.0)

    def feature_vector(self) -> np.ndarray:
        """8-vector (position, quaternion, gripper) for state-augmented features."""
        return np.concatenate([self.position, self.orientation, [self.gripper]])

    def __eq__(self, other):
        return (isinstance(other, Pose7)
                and np.array_equal(self.position, other.position)
                and np.array_equal(self.orientation, other.orientation)
                and self.gripper == other.gripper)


@dataclass(frozen=True)
class PoseDelta7:
    """Relative pose: world-axis position delta, rotation vector, gripper delta."""

    dpos: np.ndarray
    drot: np.ndarray
    dgrip: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "dpos", _vec(self.dpos, 3))
        dr = _vec(self.drot, 3)
        if np.linalg.norm(dr) >= np.pi:
            raise ValueError("rotation vector outside principal chart")
        object.__setattr__(self, "drot", dr)
        object.__setattr__(self, "dgrip", float(self.dgrip))

    @staticmethod
    def zero() -> "PoseDelta7":
        return PoseDelta7(np.zeros(3), np.zeros(3), 0.0)

    @staticmethod
    def from_vector(v) -> "PoseDelta7":
        v = _vec(v, 7)
        return PoseDelta7(v[:3], v[3:6], v[6])

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.dpos, self.drot, [self.dgrip]])

    def __eq__(self, other):
        return (isinstance(other, PoseDelta7)
                and np.array_equal(self.dpos, other.dpos)
                and np.array_equal(self.drot, other.drot)
                and self.dgrip == other.dgrip)


# ---------------------------------------------------------------------------
# point clouds

@dataclass(frozen=True)
class PointCloud:
    """World-frame points (n, 3); labels are simulator metadata, never predictor input."""

    points: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self):
        p = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        if not np.all(np.isfinite(p)):
            raise ValueError("non-finite point coordinate")
        object.__setattr__(self, "points", p)
        if self.labels is not None:
            lab = np.asarray(self.labels, dtype=np.int32)
            if lab.shape != (p.shape[0],):
                raise ValueError("labels length mismatch")
            object.__setattr__(self, "labels", lab)

    def __len__(self):
        return self.points.shape[0]

    def translated(self, v) -> "PointCloud":
        return PointCloud(self.points + _vec(v, 3), self.labels)


@dataclass(frozen=True)
class GazeCloud:
    """Points re-expressed with the gaze point as origin, axes parallel to world."""

    points: np.ndarray
    source_gaze: np.ndarray
    side: float = 0.20

    def __post_init__(self):
        p = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        object.__setattr__(self, "points", p)
        object.__setattr__(self, "source_gaze", _vec(self.source_gaze, 3))
        object.__setattr__(self, "side", float(self.side))
        if self.side <= 0:
            raise ValueError("side must be positive")
        if p.size and np.max(np.abs(p)) > self.side / 2.0:
            raise ValueError("point outside gaze cube")

    def __len__(self):
        return self.points.shape[0]


@dataclass(frozen=True)
class CameraModel:
    """Pinhole intrinsics plus camera-to-world rigid transform.

    Camera frame: x right, y down, z forward (optical axis).
    """

    fx: float
    fy: float
    cx: float
    cy: float
    rotation: np.ndarray = field(default_factory=quat_identity)
    position: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        object.__setattr__(self, "rotation", quat_normalize(self.rotation))
        object.__setattr__(self, "position", _vec(self.position, 3))

    @staticmethod
    def look_at(position, target, fx=420.0, fy=420.0, cx=320.0, cy=240.0) -> "CameraModel":
        """Camera at `position` with optical axis through `target`, world +z up."""
        position = _vec(position, 3)
        forward = _vec(target, 3) - position
        n = np.linalg.norm(forward)
        if n < 1e-9:
            raise ValueError("camera position equals target")
        forward = forward / n
        right = np.cross(forward, np.array([0.0, 0.0, 1.0]))
        rn = np.linalg.norm(right)
        if rn < 1e-9:
            raise ValueError("optical axis parallel to world z")
        right = right / rn
        down = np.cross(forward, right)
        m = np.column_stack([right, down, forward])
        return CameraModel(fx, fy, cx, cy, quat_from_matrix(m), position)

    def project(self, points) -> tuple[np.ndarray, np.ndarray]:
        """World points -> (pixels (n,2), depths (n,)). Depth is the camera-frame z."""
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        cam = quat_rotate(quat_conjugate(self.rotation), pts - self.position)
        z = cam[:, 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            u = self.cx + self.fx * cam[:, 0] / z
            v = self.cy + self.fy * cam[:, 1] / z
        return np.column_stack([u, v]), z


# ---------------------------------------------------------------------------
# operations

def compose(base: Pose7, delta: PoseDelta7,
            gripper_limits: tuple[float, float] = GRIPPER_LIMITS) -> Pose7:
    """Apply a relative action: world-axis translation, body-frame rotation, clamped gripper."""
    g = base.gripper + delta.dgrip
    lo, hi = gripper_limits
    if g < lo or g > hi:
        log.debug("gripper clamped: %.4f -> [%.4f, %.4f]", g, lo, hi)
        g = float(np.clip(g, lo, hi))
    return Pose7(base.position + delta.dpos,
                 quat_multiply(base.orientation, quat_from_rotvec(delta.drot)),
                 g)


def delta_between(start: Pose7, end: Pose7) -> PoseDelta7:
    """Relative pose such that compose(start, delta) == end. Raises on rotations at pi."""
    q_rel = quat_multiply(quat_conjugate(start.orientation), end.orientation)
    return PoseDelta7(end.position - start.position,
                      quat_to_rotvec(q_rel),
                      end.gripper - start.gripper)


def backproject(pixel, depth: float, cam: CameraModel) -> np.ndarray:
    """Pixel + depth -> world point via the pinhole model."""
    if depth <= 0:
        raise ValueError("invalid depth")
    u, v = _vec(pixel, 2)
    cam_pt = np.array([(u - cam.cx) * depth / cam.fx,
                       (v - cam.cy) * depth / cam.fy,
                       depth])
    return quat_rotate(cam.rotation, cam_pt) + cam.position


def crop_gaze_cube(cloud: PointCloud, gaze, side: float = 0.20) -> GazeCloud:
    """Points within the closed axis-aligned cube of extent `side` around `gaze`,
    re-expressed relative to the gaze point. Ordering preserved; empty result valid."""
    if side <= 0:
        raise ValueError("side must be positive")
    gaze = _vec(gaze, 3)
    rel = cloud.points - gaze
    if rel.size == 0:
        return GazeCloud(rel.reshape(0, 3), gaze, side)
    mask = np.max(np.abs(rel), axis=1) <= side / 2.0
    return GazeCloud(rel[mask], gaze, side)
