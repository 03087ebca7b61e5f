"""Deterministic kinematic tabletop world with synthetic point-cloud rendering,
a scripted gaze-aware expert, and ID/OOD scenario sampling for a two-box
stacking task (pick a small box, pile it onto a larger one).

No dynamics: arms are free-flying effectors; grasping attaches an object
rigidly, releasing settles it straight down onto the highest support under
its footprint. Effector bodies (two fingers and a palm per arm) are rendered
into the cloud, since the post-bottleneck phase is only predictable from
gaze-centered vision when the effector is visible there.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .bezier import BezierReach, eval_reach, steps_for_reach
from .dataset import Demonstration, Frame
from .geometry import (
    CameraModel,
    PointCloud,
    Pose7,
    PoseDelta7,
    compose,
    delta_between,
    quat_identity,
    yaw_of_quat,
)

log = logging.getLogger(__name__)

CONDITIONS = ("id", "ood-object", "ood-arm", "ood-both")

TABLE_LABEL = -1
LEFT_EFFECTOR_LABEL = -2
RIGHT_EFFECTOR_LABEL = -3

PICK_COLOR = 0   # the box that gets picked up ("red")
PLACE_COLOR = 1  # the stacking base ("green")


# ---------------------------------------------------------------------------
# world state

@dataclass(frozen=True)
class BoxObject:
    """Rigid box: size (sx, sy, sz), center position, yaw about +z, color id."""

    size: np.ndarray
    position: np.ndarray
    yaw: float
    color: int

    def __post_init__(self):
        object.__setattr__(self, "size", np.asarray(self.size, dtype=np.float64).reshape(3))
        object.__setattr__(self, "position", np.asarray(self.position, dtype=np.float64).reshape(3))

    @property
    def top(self) -> float:
        return float(self.position[2] + self.size[2] / 2)

    @property
    def bottom(self) -> float:
        return float(self.position[2] - self.size[2] / 2)

    def grasp_point(self) -> np.ndarray:
        return self.position + np.array([0.0, 0.0, self.size[2] / 2])

    def footprint_aabb(self) -> tuple[np.ndarray, np.ndarray]:
        """Axis-aligned bounds of the yaw-rotated footprint."""
        c, s = abs(math.cos(self.yaw)), abs(math.sin(self.yaw))
        hx = 0.5 * (c * self.size[0] + s * self.size[1])
        hy = 0.5 * (s * self.size[0] + c * self.size[1])
        return self.position[:2] - [hx, hy], self.position[:2] + [hx, hy]


@dataclass(frozen=True)
class ArmState:
    pose: Pose7
    attached: int | None = None          # object index
    attach_offset: np.ndarray = field(default_factory=lambda: np.zeros(3))
    attach_yaw: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "attach_offset",
                           np.asarray(self.attach_offset, dtype=np.float64).reshape(3))


@dataclass(frozen=True)
class World:
    table_z: float
    table_lo: np.ndarray     # (2,) table rectangle min corner
    table_hi: np.ndarray
    boxes: tuple[BoxObject, ...]
    left: ArmState
    right: ArmState
    lifted: bool = False     # sticky: pick box was held >= 5 cm above the table

    def __post_init__(self):
        object.__setattr__(self, "table_lo", np.asarray(self.table_lo, dtype=np.float64).reshape(2))
        object.__setattr__(self, "table_hi", np.asarray(self.table_hi, dtype=np.float64).reshape(2))

    def arm(self, name: str) -> ArmState:
        return self.left if name == "left" else self.right

    def box_by_color(self, color: int) -> BoxObject:
        for b in self.boxes:
            if b.color == color:
                return b
        raise ValueError(f"no box with color {color}")


@dataclass(frozen=True)
class SuccessFlags:
    lifted: bool
    pile: bool


# ---------------------------------------------------------------------------
# scenario

@dataclass(frozen=True)
class ScenarioSpec:
    """Spawn regions, arm ranges, camera, gripper and render parameters.

    ID and OOD regions are disjoint rectangles on the table; OOD arm ranges
    are displaced bands outside the ID pose box.
    """

    name: str = "pilebox"
    table_z: float = 0.0
    table_lo: tuple = (-0.40, -0.30)
    table_hi: tuple = (0.40, 0.30)
    box_sizes: tuple = ((0.04, 0.04, 0.04), (0.08, 0.08, 0.05))
    box_colors: tuple = (PICK_COLOR, PLACE_COLOR)
    # per-box (lo_xy, hi_xy) rectangles
    id_regions: tuple = (((-0.28, -0.05), (-0.08, 0.05)),   # pick box: 20 x 10 cm
                         ((0.10, -0.05), (0.20, 0.05)))     # place box: 10 cm square
    ood_regions: tuple = (((-0.28, 0.10), (-0.08, 0.18)),
                          ((0.10, -0.20), (0.20, -0.12)))
    yaw_range: tuple = (-0.2, 0.2)
    left_arm_id: tuple = ((-0.36, -0.26, 0.16), (-0.26, -0.16, 0.24))
    left_arm_ood: tuple = ((-0.16, -0.26, 0.24), (-0.08, -0.16, 0.30))
    right_arm_id: tuple = ((0.31, -0.28, 0.14), (0.37, -0.22, 0.20))
    right_arm_ood: tuple = ((0.33, -0.28, 0.24), (0.39, -0.22, 0.30))
    workspace: tuple = ((-0.45, -0.32, 0.0), (0.45, 0.32, 0.50))
    camera_position: tuple = (0.0, -0.62, 0.55)
    camera_target: tuple = (0.0, 0.0, 0.0)
    camera_intrinsics: tuple = (420.0, 420.0, 320.0, 240.0)
    gripper_open: float = 1.0
    gripper_closed: float = 0.1
    close_threshold: float = 0.2
    open_threshold: float = 0.8
    grasp_radius: float = 0.03
    n_points: int = 2048
    noise_sigma: float = 0.002
    min_spawn_gap: float = 0.02

    def camera(self) -> CameraModel:
        fx, fy, cx, cy = self.camera_intrinsics
        return CameraModel.look_at(self.camera_position, self.camera_target, fx, fy, cx, cy)

    def to_lines(self) -> list[str]:
        def flat(x):
            return ",".join(repr(float(v)) for v in np.asarray(x, dtype=np.float64).ravel())
        lines = [f"scenario-format 1", f"name {self.name}"]
        for key in ("table_z", "table_lo", "table_hi", "box_sizes", "box_colors",
                    "id_regions", "ood_regions", "yaw_range", "left_arm_id",
                    "left_arm_ood", "right_arm_id", "right_arm_ood", "workspace",
                    "camera_position", "camera_target", "camera_intrinsics",
                    "gripper_open", "gripper_closed", "close_threshold",
                    "open_threshold", "grasp_radius", "n_points", "noise_sigma",
                    "min_spawn_gap"):
            lines.append(f"{key} {flat(getattr(self, key))}")
        return lines

    @staticmethod
    def from_lines(lines: list[str]) -> "ScenarioSpec":
        if not lines or lines[0].split() != ["scenario-format", "1"]:
            raise ValueError("unsupported scenario format")
        raw: dict[str, str] = {}
        for line in lines[1:]:
            if not line.strip():
                continue
            key, _, value = line.partition(" ")
            raw[key] = value.strip()
        base = ScenarioSpec()
        kwargs = {"name": raw.pop("name", base.name)}

        def parse(key, template):
            vals = [float(v) for v in raw.pop(key).split(",")]
            arr = np.asarray(vals).reshape(np.asarray(template, dtype=np.float64).shape)
            return arr

        for key in ("table_lo", "table_hi", "box_sizes", "box_colors", "id_regions",
                    "ood_regions", "yaw_range", "left_arm_id", "left_arm_ood",
                    "right_arm_id", "right_arm_ood", "workspace", "camera_position",
                    "camera_target", "camera_intrinsics"):
            if key in raw:
                arr = parse(key, getattr(base, key))
                if key == "box_colors":
                    kwargs[key] = tuple(int(v) for v in arr)
                else:
                    kwargs[key] = tuple(map(tuple, arr)) if arr.ndim > 1 else tuple(arr)
        for key in ("table_z", "gripper_open", "gripper_closed", "close_threshold",
                    "open_threshold", "grasp_radius", "noise_sigma", "min_spawn_gap"):
            if key in raw:
                kwargs[key] = float(raw.pop(key))
        if "n_points" in raw:
            kwargs["n_points"] = int(float(raw.pop("n_points")))
        unknown = set(raw) - {"scenario-format"}
        if unknown:
            raise ValueError(f"unknown scenario keys: {sorted(unknown)}")
        return ScenarioSpec(**kwargs)


def default_pilebox() -> ScenarioSpec:
    return ScenarioSpec()


# ---------------------------------------------------------------------------
# spawning

def _sample_box(rng, lo, hi):
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    return lo + rng.random(lo.shape) * (hi - lo)


def spawn(spec: ScenarioSpec, condition: str, seed: int) -> World:
    """Deterministic world sample for one trial. `condition` picks which parts
    draw from OOD ranges: objects, arms, or both."""
    if condition not in CONDITIONS:
        raise ValueError(f"unknown condition {condition!r}")
    ood_objects = condition in ("ood-object", "ood-both")
    ood_arms = condition in ("ood-arm", "ood-both")
    rng = np.random.default_rng([int(seed), 0x5EED])

    regions = spec.ood_regions if ood_objects else spec.id_regions
    boxes: list[BoxObject] = []
    for i, (size, color) in enumerate(zip(spec.box_sizes, spec.box_colors)):
        (rlo, rhi) = regions[i]
        placed = None
        for _ in range(100):
            xy = _sample_box(rng, rlo, rhi)
            yaw = float(rng.uniform(*spec.yaw_range))
            cand = BoxObject(np.asarray(size), np.array([xy[0], xy[1], spec.table_z + size[2] / 2]),
                             yaw, color)
            lo_c, hi_c = cand.footprint_aabb()
            ok = True
            for other in boxes:
                lo_o, hi_o = other.footprint_aabb()
                if np.all(lo_c - spec.min_spawn_gap < hi_o) and np.all(lo_o - spec.min_spawn_gap < hi_c):
                    ok = False
                    break
            if ok:
                placed = cand
                break
        if placed is None:
            raise RuntimeError("could not place objects without overlap after 100 samples")
        boxes.append(placed)

    left_range = spec.left_arm_ood if ood_arms else spec.left_arm_id
    right_range = spec.right_arm_ood if ood_arms else spec.right_arm_id
    left = ArmState(Pose7(_sample_box(rng, *left_range), quat_identity(), spec.gripper_open))
    right = ArmState(Pose7(_sample_box(rng, *right_range), quat_identity(), spec.gripper_open))
    return World(spec.table_z, np.asarray(spec.table_lo), np.asarray(spec.table_hi),
                 tuple(boxes), left, right)


# ---------------------------------------------------------------------------
# rendering

_FINGER_SIZE = np.array([0.012, 0.012, 0.05])
_PALM_SIZE = np.array([0.06, 0.02, 0.02])
_PALM_LIFT = 0.062
_FINGER_LIFT = 0.025


def gripper_half_aperture(gripper: float) -> float:
    return 0.012 + 0.04 * gripper


def effector_boxes(pose: Pose7, label: int) -> list[tuple[BoxObject, int]]:
    """Two finger boxes (separation tracks the gripper angle) plus a palm bar."""
    yaw = yaw_of_quat(pose.orientation)
    c, s = math.cos(yaw), math.sin(yaw)
    half = gripper_half_aperture(pose.gripper)

    def local(dx, dz):
        return pose.position + np.array([c * dx, s * dx, dz])

    return [
        (BoxObject(_FINGER_SIZE, local(+half, _FINGER_LIFT), yaw, label), label),
        (BoxObject(_FINGER_SIZE, local(-half, _FINGER_LIFT), yaw, label), label),
        (BoxObject(_PALM_SIZE, local(0.0, _PALM_LIFT), yaw, label), label),
    ]


def _box_faces(box: BoxObject, label: int):
    """Six planar faces as (origin, edge1, edge2, outward normal, area, label)."""
    c, s = math.cos(box.yaw), math.sin(box.yaw)
    ex = np.array([c, s, 0.0])
    ey = np.array([-s, c, 0.0])
    ez = np.array([0.0, 0.0, 1.0])
    h = box.size / 2.0
    faces = []
    for axis, n in enumerate((ex, ey, ez)):
        if axis == 0:
            e1, e2 = ey * box.size[1], ez * box.size[2]
        elif axis == 1:
            e1, e2 = ex * box.size[0], ez * box.size[2]
        else:
            e1, e2 = ex * box.size[0], ey * box.size[1]
        area = float(np.linalg.norm(e1) * np.linalg.norm(e2))
        for sign in (1.0, -1.0):
            normal = sign * n
            center = box.position + normal * h[axis]
            origin = center - e1 / 2 - e2 / 2
            faces.append((origin, e1, e2, normal, area, label))
    return faces


def _world_solids(world: World) -> list[tuple[BoxObject, int]]:
    solids = [(b, i) for i, b in enumerate(world.boxes)]
    solids += effector_boxes(world.left.pose, LEFT_EFFECTOR_LABEL)
    solids += effector_boxes(world.right.pose, RIGHT_EFFECTOR_LABEL)
    return solids


def _occluded(points: np.ndarray, cam_pos: np.ndarray, solids) -> np.ndarray:
    """True where the segment point -> camera passes through any solid box."""
    n = points.shape[0]
    occ = np.zeros(n, dtype=bool)
    d = cam_pos[None, :] - points
    for box, _ in solids:
        c, s = math.cos(box.yaw), math.sin(box.yaw)
        rot = np.array([[c, s, 0], [-s, c, 0], [0, 0, 1]])  # world -> box local
        pl = (points - box.position) @ rot.T
        dl = d @ rot.T
        h = box.size / 2.0
        with np.errstate(divide="ignore", invalid="ignore"):
            t1 = (-h - pl) / dl
            t2 = (h - pl) / dl
        tmin = np.where(np.isnan(t1), -np.inf, np.minimum(t1, t2))
        tmax = np.where(np.isnan(t2), np.inf, np.maximum(t1, t2))
        # zero direction component: inside-slab iff |pl| <= h
        par = dl == 0.0
        inside = np.abs(pl) <= h
        tmin = np.where(par, np.where(inside, -np.inf, np.inf), tmin)
        tmax = np.where(par, np.where(inside, np.inf, -np.inf), tmax)
        lo = tmin.max(axis=1)
        hi = tmax.min(axis=1)
        occ |= (hi > np.maximum(lo, 1e-6)) & (lo < 1.0 - 1e-9)
    return occ


def render(world: World, cam: CameraModel, n_points: int = 2048,
           noise_sigma: float = 0.0, seed=0) -> PointCloud:
    """Point cloud sampled area-uniformly on camera-facing surfaces, with
    occluded samples removed, per-axis Gaussian noise, and float32-rounded
    coordinates. Deterministic given (world, seed)."""
    if n_points <= 0:
        raise ValueError("n_points must be positive")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng([int(seed), 0xCA3])

    table_e1 = np.array([world.table_hi[0] - world.table_lo[0], 0.0, 0.0])
    table_e2 = np.array([0.0, world.table_hi[1] - world.table_lo[1], 0.0])
    faces = [(np.array([world.table_lo[0], world.table_lo[1], world.table_z]),
              table_e1, table_e2, np.array([0.0, 0.0, 1.0]),
              float(table_e1[0] * table_e2[1]), TABLE_LABEL)]
    solids = _world_solids(world)
    for box, label in solids:
        faces.extend(_box_faces(box, label))

    visible = []
    for origin, e1, e2, normal, area, label in faces:
        center = origin + e1 / 2 + e2 / 2
        if float(np.dot(normal, cam.position - center)) > 1e-12:
            visible.append((origin, e1, e2, area, label))
    if not visible:
        return PointCloud(np.zeros((0, 3)), np.zeros(0, dtype=np.int32))

    areas = np.array([f[3] for f in visible])
    counts = rng.multinomial(n_points, areas / areas.sum())
    pts, labels = [], []
    for (origin, e1, e2, _, label), cnt in zip(visible, counts):
        if cnt == 0:
            continue
        uv = rng.random((cnt, 2))
        pts.append(origin[None, :] + uv[:, :1] * e1[None, :] + uv[:, 1:] * e2[None, :])
        labels.append(np.full(cnt, label, dtype=np.int32))
    points = np.concatenate(pts)
    labels = np.concatenate(labels)

    keep = ~_occluded(points, cam.position, solids)
    points, labels = points[keep], labels[keep]
    if noise_sigma > 0:
        points = points + rng.normal(0.0, noise_sigma, points.shape)
    points = points.astype(np.float32).astype(np.float64)
    return PointCloud(points, labels)


# ---------------------------------------------------------------------------
# stepping

def _clamp_workspace(pose: Pose7, spec: ScenarioSpec) -> Pose7:
    lo, hi = np.asarray(spec.workspace[0]), np.asarray(spec.workspace[1])
    clipped = np.clip(pose.position, lo, hi)
    if not np.array_equal(clipped, pose.position):
        log.debug("workspace clamp: %s -> %s", pose.position, clipped)
        return Pose7(clipped, pose.orientation, pose.gripper)
    return pose


def _footprint_overlap(a: BoxObject, b: BoxObject) -> float:
    """Intersection of footprint AABBs as a fraction of a's footprint area."""
    lo_a, hi_a = a.footprint_aabb()
    lo_b, hi_b = b.footprint_aabb()
    inter = np.maximum(0.0, np.minimum(hi_a, hi_b) - np.maximum(lo_a, lo_b))
    area_a = np.prod(hi_a - lo_a)
    return float(inter[0] * inter[1] / area_a) if area_a > 0 else 0.0


_SNAP_TOL = 0.02


def _settle(boxes: list[BoxObject], attached: set[int], table_z: float) -> list[BoxObject]:
    """Drop unattached boxes onto the highest support under their footprint."""
    for _ in range(3):
        changed = False
        for i, box in enumerate(boxes):
            if i in attached:
                continue
            rest_top = table_z
            for j, other in enumerate(boxes):
                if j == i or j in attached:
                    continue
                if (_footprint_overlap(box, other) >= 0.5
                        and other.top <= box.bottom + _SNAP_TOL
                        and other.top > rest_top):
                    rest_top = other.top
            new_z = rest_top + box.size[2] / 2
            if abs(new_z - box.position[2]) > 1e-12:
                boxes[i] = replace(box, position=np.array([box.position[0], box.position[1], new_z]))
                changed = True
        if not changed:
            break
    return boxes


def _update_arm(arm: ArmState, delta: PoseDelta7, boxes: list[BoxObject],
                taken: set[int], spec: ScenarioSpec) -> ArmState:
    old_g = arm.pose.gripper
    pose = _clamp_workspace(compose(arm.pose, delta), spec)
    new_g = pose.gripper
    attached = arm.attached
    offset, ayaw = arm.attach_offset, arm.attach_yaw

    if attached is None and old_g >= spec.close_threshold > new_g:
        best, best_d = None, spec.grasp_radius
        for i, box in enumerate(boxes):
            if i in taken:
                continue
            dist = float(np.linalg.norm(box.grasp_point() - pose.position))
            if dist <= best_d:
                best, best_d = i, dist
        if best is not None:
            attached = best
            yaw = yaw_of_quat(pose.orientation)
            c, s = math.cos(yaw), math.sin(yaw)
            rot = np.array([[c, s, 0], [-s, c, 0], [0, 0, 1]])
            offset = rot @ (boxes[best].position - pose.position)
            ayaw = boxes[best].yaw - yaw
    elif attached is not None and old_g <= spec.open_threshold < new_g:
        attached = None
        offset, ayaw = np.zeros(3), 0.0

    if attached is not None:
        yaw = yaw_of_quat(pose.orientation)
        c, s = math.cos(yaw), math.sin(yaw)
        rot = np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]])
        boxes[attached] = replace(boxes[attached],
                                  position=pose.position + rot @ offset,
                                  yaw=yaw + ayaw)
    return ArmState(pose, attached, offset, ayaw)


def step(world: World, action: tuple[PoseDelta7, PoseDelta7],
         spec: ScenarioSpec) -> World:
    """Advance one tick: move arms, apply grasp/release transitions, settle."""
    boxes = list(world.boxes)
    taken = {a for a in (world.right.attached,) if a is not None}
    left = _update_arm(world.left, action[0], boxes, taken, spec)
    taken = {a for a in (left.attached,) if a is not None}
    right = _update_arm(world.right, action[1], boxes, taken, spec)
    attached = {a for a in (left.attached, right.attached) if a is not None}
    boxes = _settle(boxes, attached, world.table_z)

    lifted = world.lifted
    for arm in (left, right):
        if arm.attached is not None and boxes[arm.attached].color == PICK_COLOR:
            if boxes[arm.attached].bottom - world.table_z >= 0.05:
                lifted = True
    return World(world.table_z, world.table_lo, world.table_hi, tuple(boxes),
                 left, right, lifted)


def success(world: World) -> SuccessFlags:
    """Lifted: the pick box was ever held >= 5 cm up. Pile: it now rests on the
    place box, centered within 25% of the base width, and is released."""
    try:
        pick = world.box_by_color(PICK_COLOR)
        place = world.box_by_color(PLACE_COLOR)
    except ValueError:
        return SuccessFlags(world.lifted, False)
    held = any(arm.attached is not None and world.boxes[arm.attached].color == PICK_COLOR
               for arm in (world.left, world.right))
    resting = abs(pick.bottom - place.top) <= 1e-6
    overlap = _footprint_overlap(pick, place) >= 0.5
    center_off = float(np.linalg.norm(pick.position[:2] - place.position[:2]))
    centered = center_off <= 0.25 * float(min(place.size[0], place.size[1]))
    return SuccessFlags(world.lifted, bool((not held) and resting and overlap and centered))


# ---------------------------------------------------------------------------
# scripted expert

def _line_to(a: np.ndarray, b: np.ndarray, step_len: float) -> list[np.ndarray]:
    dist = float(np.linalg.norm(b - a))
    n = max(1, round(dist / step_len))
    return [a + (b - a) * (i / n) for i in range(1, n + 1)]


def scripted_expert(world: World, spec: ScenarioSpec, gaze_noise: float = 0.004,
                    waypoint_jitter: float = 1.0, seed: int = 0) -> Demonstration:
    """Two-sub-task pick-and-pile demonstration at 10 Hz.

    Pick: arch-shaped reach to a pre-grasp pose ~5 cm over the pick box, straight
    descend, close, lift. Place: arch traverse to ~7 cm over the base box,
    descend, open, short retreat. Gaze fixates the pick-box grasp point, then
    saccades to the base-box top at the sub-task transition. Ground-truth
    segment boundaries, bottleneck steps, and the planted arch vectors go into
    the demo metadata.
    """
    rng = np.random.default_rng([int(seed), 0xE2BE])
    cam = spec.camera()
    pick = world.box_by_color(PICK_COLOR)
    place = world.box_by_color(PLACE_COLOR)
    grasp_point = pick.grasp_point()
    place_point = place.grasp_point()

    # waypoint_jitter scales the per-demo randomness, not the nominal arch
    jit = float(waypoint_jitter)
    draws = rng.normal(0.0, 1.0, 8)
    arch0 = np.array([jit * 0.008 * draws[0], jit * 0.008 * draws[1],
                      max(0.015, 0.035 + jit * 0.006 * draws[2])])
    arch1 = np.array([jit * 0.008 * draws[3], jit * 0.008 * draws[4],
                      max(0.015, 0.030 + jit * 0.006 * draws[5])])
    b0_h = 0.05 + jit * 0.003 * draws[6]
    b1_h = 0.07 + jit * 0.003 * draws[7]

    g_open, g_closed = spec.gripper_open, spec.gripper_closed
    start = world.left.pose
    ident = quat_identity()
    pre_grasp = Pose7(grasp_point + [0, 0, b0_h], ident, g_open)
    grasp = Pose7(grasp_point + [0, 0, 0.005], ident, g_open)

    plan: list[Pose7] = [start]
    reach0 = BezierReach(start, pre_grasp, PoseDelta7(arch0, np.zeros(3), 0.0))
    n0 = steps_for_reach(reach0)
    plan += [eval_reach(reach0, i / n0) for i in range(1, n0 + 1)]
    b0_step = len(plan)  # first descend frame
    plan += [Pose7(p, ident, g_open) for p in _line_to(pre_grasp.position, grasp.position, 0.01)]
    for g in (0.7, 0.4, g_closed):
        plan.append(Pose7(grasp.position, ident, g))
    lift_top = grasp.position + [0, 0, 0.08]
    plan += [Pose7(p, ident, g_closed) for p in _line_to(grasp.position, lift_top, 0.01)]
    e0_step = len(plan) - 1

    pre_place = Pose7(place_point + [0, 0, b1_h], ident, g_closed)
    reach1 = BezierReach(plan[-1], pre_place, PoseDelta7(arch1, np.zeros(3), 0.0))
    n1 = steps_for_reach(reach1)
    plan += [eval_reach(reach1, i / n1) for i in range(1, n1 + 1)]
    b1_step = len(plan)
    release_z = place.top + pick.size[2] + 0.001 + 0.005
    release = Pose7(np.array([place_point[0], place_point[1], release_z]), ident, g_closed)
    plan += [Pose7(p, ident, g_closed)
             for p in _line_to(pre_place.position, release.position, 0.01)]
    for g in (0.4, 0.7, g_open):
        plan.append(Pose7(release.position, ident, g))
    plan += [Pose7(release.position + [0, 0, 0.01 * i], ident, g_open) for i in (1, 2)]
    s1_step = e0_step + 1
    T = len(plan) - 1

    lo, hi = np.asarray(spec.workspace[0]), np.asarray(spec.workspace[1])
    for p in plan:
        if np.any(p.position < lo) or np.any(p.position > hi):
            raise ValueError("unreachable configuration: waypoint outside workspace")

    gaze_targets = [grasp_point if t <= e0_step else place_point for t in range(T + 1)]
    gaze_noise_draws = rng.normal(0.0, gaze_noise, (T + 1, 3)) if gaze_noise > 0 else np.zeros((T + 1, 3))
    render_seeds = rng.integers(0, 2**31 - 1, T + 1)

    frames: list[Frame] = []
    cur = world
    for t in range(T + 1):
        if t < T:
            act_l = delta_between(plan[t], plan[t + 1])
        else:
            act_l = PoseDelta7.zero()
        act_r = PoseDelta7.zero()
        gaze3 = gaze_targets[t] + gaze_noise_draws[t]
        gaze_pix, _ = cam.project(gaze3)
        cloud = render(cur, cam, spec.n_points, spec.noise_sigma, int(render_seeds[t]))
        frames.append(Frame(t, cloud, cur.left.pose, cur.right.pose,
                            gaze_pix[0], gaze3, act_l, act_r))
        if t < T:
            cur = step(cur, (act_l, act_r), spec)

    flags = success(cur)
    if not (flags.lifted and flags.pile):
        raise RuntimeError(f"expert rollout failed: lifted={flags.lifted} pile={flags.pile}")

    def fmt_vec(v):
        return ",".join(repr(float(x)) for x in v)

    meta = {
        "arms": "left,left",
        "gt_segments": f"0:{e0_step}:{b0_step},{s1_step}:{T}:{b1_step}",
        "gt_bezier_0": fmt_vec(PoseDelta7(arch0, np.zeros(3), 0.0).as_vector()),
        "gt_bezier_1": fmt_vec(PoseDelta7(arch1, np.zeros(3), 0.0).as_vector()),
        "gt_gaze_0": fmt_vec(grasp_point),
        "gt_gaze_1": fmt_vec(place_point),
        "gt_bottleneck_0": fmt_vec(plan[b0_step].position),
        "gt_bottleneck_1": fmt_vec(plan[b1_step].position),
    }
    return Demonstration(tuple(frames), spec.name, seed, spec.name, meta)
