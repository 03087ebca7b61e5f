"""Demonstration recording schema, on-disk format, and segment annotations.

File layout (one demonstration per file, binary mode): a self-describing text
header (format version, task, seed, frame count, free-form metadata tokens),
then one record per frame. Pose and gaze scalars are written as round-tripping
decimal text; each frame's point cloud is a length-prefixed block of
little-endian float32 triplets (plus an optional int32 label block).
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .bezier import parameterize
from .containerio import atomic_write
from .geometry import PointCloud, Pose7, PoseDelta7, delta_between

FORMAT_VERSION = 1
DEMO_SUFFIX = ".demo"
ANNOTATION_SUFFIX = ".seg"


class DemoFormatError(ValueError):
    pass


@dataclass(frozen=True)
class Frame:
    """One 10 Hz step: scene cloud, both arm poses, gaze, and the expert action."""

    t: int
    cloud: PointCloud
    left: Pose7
    right: Pose7
    gaze_pixel: np.ndarray
    gaze_3d: np.ndarray
    action_left: PoseDelta7
    action_right: PoseDelta7

    def __post_init__(self):
        object.__setattr__(self, "gaze_pixel", np.asarray(self.gaze_pixel, dtype=np.float64).reshape(2))
        object.__setattr__(self, "gaze_3d", np.asarray(self.gaze_3d, dtype=np.float64).reshape(3))

    def arm(self, name: str) -> Pose7:
        if name == "left":
            return self.left
        if name == "right":
            return self.right
        raise ValueError(f"unknown arm {name!r}")

    def __eq__(self, other):
        return (isinstance(other, Frame)
                and self.t == other.t
                and np.array_equal(self.cloud.points, other.cloud.points)
                and ((self.cloud.labels is None) == (other.cloud.labels is None))
                and (self.cloud.labels is None or np.array_equal(self.cloud.labels, other.cloud.labels))
                and self.left == other.left and self.right == other.right
                and np.array_equal(self.gaze_pixel, other.gaze_pixel)
                and np.array_equal(self.gaze_3d, other.gaze_3d)
                and self.action_left == other.action_left
                and self.action_right == other.action_right)


@dataclass(frozen=True)
class Demonstration:
    frames: tuple[Frame, ...]
    task: str = "pilebox"
    seed: int = 0
    scenario: str = "default"
    meta: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "frames", tuple(self.frames))
        if len(self.frames) < 2:
            raise ValueError("demonstration needs at least 2 frames")
        for i, f in enumerate(self.frames):
            if f.t != i:
                raise ValueError("frame step indices must be contiguous from 0")

    def __len__(self):
        return len(self.frames)

    def __eq__(self, other):
        return (isinstance(other, Demonstration)
                and self.task == other.task and self.seed == other.seed
                and self.scenario == other.scenario and self.meta == other.meta
                and self.frames == other.frames)

    def acting_arm(self, k: int) -> str:
        arms = self.meta.get("arms", "")
        names = arms.split(",") if arms else []
        return names[k] if k < len(names) else "left"

    def gt_segments(self) -> list[tuple[int, int, int]] | None:
        """Generator ground truth (start, end, bottleneck) triples, if recorded."""
        raw = self.meta.get("gt_segments")
        if not raw:
            return None
        out = []
        for part in raw.split(","):
            s, e, b = (int(x) for x in part.split(":"))
            out.append((s, e, b))
        return out


@dataclass(frozen=True)
class SegmentAnnotation:
    """Per-sub-task (start, end, bottleneck) step triples partitioning a demo."""

    segments: tuple[tuple[int, int, int], ...]

    def __post_init__(self):
        segs = tuple((int(s), int(e), int(b)) for s, e, b in self.segments)
        object.__setattr__(self, "segments", segs)
        if not segs:
            raise ValueError("annotation needs at least one sub-task")
        if segs[0][0] != 0:
            raise ValueError("first sub-task must start at step 0")
        prev_e = None
        for s, e, b in segs:
            if prev_e is not None and s != prev_e + 1:
                raise ValueError("sub-tasks must be contiguous")
            if not s <= b <= e:
                raise ValueError("bottleneck must lie within its sub-task")
            prev_e = e

    def __len__(self):
        return len(self.segments)

    @property
    def end(self) -> int:
        return self.segments[-1][1]


# ---------------------------------------------------------------------------
# serialization

def _fmt_floats(a) -> str:
    return " ".join(repr(float(x)) for x in np.asarray(a).ravel())


def _pose_line(p: Pose7) -> str:
    return _fmt_floats(np.concatenate([p.position, p.orientation, [p.gripper]]))


def _delta_line(d: PoseDelta7) -> str:
    return _fmt_floats(d.as_vector())


def save(demo: Demonstration, path: str) -> None:
    out = bytearray()
    out += f"demo-format {FORMAT_VERSION}\n".encode()
    out += f"task {demo.task}\n".encode()
    out += f"seed {demo.seed}\n".encode()
    out += f"scenario {demo.scenario}\n".encode()
    out += f"frames {len(demo)}\n".encode()
    for k, v in demo.meta.items():
        if any(c.isspace() for c in k) or any(c.isspace() for c in str(v)):
            raise ValueError(f"meta entry {k!r} contains whitespace")
        out += f"meta {k} {v}\n".encode()
    out += b"endheader\n"
    for f in demo.frames:
        out += f"frame {f.t}\n".encode()
        out += ("left " + _pose_line(f.left) + "\n").encode()
        out += ("right " + _pose_line(f.right) + "\n").encode()
        out += ("gaze_pixel " + _fmt_floats(f.gaze_pixel) + "\n").encode()
        out += ("gaze_3d " + _fmt_floats(f.gaze_3d) + "\n").encode()
        out += ("action_left " + _delta_line(f.action_left) + "\n").encode()
        out += ("action_right " + _delta_line(f.action_right) + "\n").encode()
        n = len(f.cloud)
        has_labels = 1 if f.cloud.labels is not None else 0
        out += f"cloud {n} {has_labels}\n".encode()
        out += f.cloud.points.astype("<f4").tobytes()
        out += b"\n"
        if has_labels:
            out += f.cloud.labels.astype("<i4").tobytes()
            out += b"\n"
        out += b"endframe\n"
    out += b"enddemo\n"
    atomic_write(path, bytes(out))


class _Parser:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def line(self, what: str) -> str:
        nl = self.data.find(b"\n", self.pos)
        if nl < 0:
            raise DemoFormatError(f"unexpected end of input (reading {what})")
        s = self.data[self.pos:nl].decode("utf-8", errors="replace")
        self.pos = nl + 1
        return s

    def tagged(self, tag: str) -> list[str]:
        parts = self.line(tag).split()
        if not parts or parts[0] != tag:
            raise DemoFormatError(f"invalid field: expected {tag!r}, got {parts[:1]!r}")
        return parts[1:]

    def floats(self, tag: str, n: int) -> np.ndarray:
        parts = self.tagged(tag)
        if len(parts) != n:
            raise DemoFormatError(f"invalid field {tag!r}: expected {n} values")
        try:
            return np.array([float(x) for x in parts])
        except ValueError as e:
            raise DemoFormatError(f"invalid field {tag!r}: {e}") from None

    def raw(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise DemoFormatError(f"unexpected end of input (reading {what})")
        b = self.data[self.pos:self.pos + n]
        self.pos += n
        return b


def load(path: str) -> Demonstration:
    with open(path, "rb") as fh:
        p = _Parser(fh.read())
    magic = p.line("magic").split()
    if len(magic) != 2 or magic[0] != "demo-format":
        raise DemoFormatError("invalid field: missing demo-format magic")
    if magic[1] != str(FORMAT_VERSION):
        raise DemoFormatError(f"unsupported demo-format version {magic[1]}")
    task = p.tagged("task")
    seed = p.tagged("seed")
    scenario = p.tagged("scenario")
    frames_decl = p.tagged("frames")
    if len(task) != 1 or len(seed) != 1 or len(scenario) != 1 or len(frames_decl) != 1:
        raise DemoFormatError("invalid field: header")
    try:
        seed_i, n_frames = int(seed[0]), int(frames_decl[0])
    except ValueError:
        raise DemoFormatError("invalid field: seed/frames must be integers") from None
    meta: dict[str, str] = {}
    while True:
        line = p.line("header")
        if line == "endheader":
            break
        parts = line.split()
        if len(parts) != 3 or parts[0] != "meta":
            raise DemoFormatError(f"invalid field: {line!r}")
        meta[parts[1]] = parts[2]
    frames = []
    for i in range(n_frames):
        idx = p.tagged("frame")
        if len(idx) != 1 or idx[0] != str(i):
            raise DemoFormatError(f"invalid field 'frame': expected index {i}")
        left = p.floats("left", 8)
        right = p.floats("right", 8)
        gaze_pixel = p.floats("gaze_pixel", 2)
        gaze_3d = p.floats("gaze_3d", 3)
        al = p.floats("action_left", 7)
        ar = p.floats("action_right", 7)
        cl = p.tagged("cloud")
        if len(cl) != 2:
            raise DemoFormatError("invalid field 'cloud': expected count and label flag")
        try:
            n_pts, has_labels = int(cl[0]), int(cl[1])
        except ValueError:
            raise DemoFormatError("invalid field 'cloud': non-integer count") from None
        raw = p.raw(n_pts * 12, "cloud points")
        if p.raw(1, "cloud terminator") != b"\n":
            raise DemoFormatError("invalid field: cloud block terminator")
        pts = np.frombuffer(raw, dtype="<f4").reshape(n_pts, 3).astype(np.float64)
        labels = None
        if has_labels:
            lraw = p.raw(n_pts * 4, "cloud labels")
            if p.raw(1, "label terminator") != b"\n":
                raise DemoFormatError("invalid field: label block terminator")
            labels = np.frombuffer(lraw, dtype="<i4").astype(np.int32)
        if p.line("endframe") != "endframe":
            raise DemoFormatError("invalid field: missing endframe")
        frames.append(Frame(
            t=i,
            cloud=PointCloud(pts, labels),
            left=Pose7(left[:3], left[3:7], left[7]),
            right=Pose7(right[:3], right[3:7], right[7]),
            gaze_pixel=gaze_pixel,
            gaze_3d=gaze_3d,
            action_left=PoseDelta7.from_vector(al),
            action_right=PoseDelta7.from_vector(ar),
        ))
    if p.line("enddemo") != "enddemo":
        raise DemoFormatError("invalid field: missing enddemo")
    return Demonstration(tuple(frames), task[0], seed_i, scenario[0], meta)


def save_annotation(ann: SegmentAnnotation, path: str) -> None:
    lines = [f"segmentation {FORMAT_VERSION}", f"subtasks {len(ann)}"]
    for k, (s, e, b) in enumerate(ann.segments):
        lines.append(f"{k} {s} {e} {b}")
    lines.append("end")
    atomic_write(path, ("\n".join(lines) + "\n").encode())


def load_annotation(path: str) -> SegmentAnnotation:
    with open(path, "rb") as fh:
        lines = fh.read().decode().splitlines()
    if not lines or not lines[0].startswith("segmentation "):
        raise DemoFormatError("invalid field: missing segmentation magic")
    if lines[0].split()[1] != str(FORMAT_VERSION):
        raise DemoFormatError("unsupported segmentation version")
    n = int(lines[1].split()[1])
    segs = []
    for k in range(n):
        parts = lines[2 + k].split()
        if len(parts) != 4 or parts[0] != str(k):
            raise DemoFormatError(f"invalid field: sub-task record {k}")
        segs.append((int(parts[1]), int(parts[2]), int(parts[3])))
    if lines[2 + n] != "end":
        raise DemoFormatError("invalid field: missing end")
    return SegmentAnnotation(tuple(segs))


# ---------------------------------------------------------------------------
# operations

def extract_reaching_segment(demo: Demonstration, ann: SegmentAnnotation, k: int,
                             arm: str | None = None) -> list[tuple[float, Pose7]]:
    """Acting-arm poses over the reaching phase [s_k, b_k - 1] with normalized parameters."""
    s, e, b = ann.segments[k]
    if b == s:
        raise ValueError("degenerate reaching phase")
    arm = arm or demo.acting_arm(k)
    poses = [demo.frames[t].arm(arm) for t in range(s, b)]
    if len(poses) == 1:
        return [(0.0, poses[0])]
    svals = parameterize(np.arange(s, b, dtype=np.float64))
    return list(zip(svals.tolist(), poses))


def lint_demo(demo: Demonstration, ann: SegmentAnnotation | None = None,
              tol: float = 1e-9) -> list[str]:
    """Validate recorded-action consistency and (optionally) annotation invariants."""
    issues = []
    for t in range(len(demo) - 1):
        f, nxt = demo.frames[t], demo.frames[t + 1]
        for arm, rec in (("left", f.action_left), ("right", f.action_right)):
            try:
                expect = delta_between(f.arm(arm), nxt.arm(arm))
            except ValueError:
                issues.append(f"frame {t}: {arm} antipodal step")
                continue
            if np.max(np.abs(expect.as_vector() - rec.as_vector())) > tol:
                issues.append(f"frame {t}: {arm} action inconsistent with pose delta")
    last = demo.frames[-1]
    for arm, rec in (("left", last.action_left), ("right", last.action_right)):
        if np.any(rec.as_vector() != 0.0):
            issues.append(f"last frame: {arm} action must be zero")
    if ann is not None:
        if ann.segments[-1][1] != len(demo) - 1:
            issues.append("annotation does not end at the last frame")
    return issues


def demo_paths(directory: str) -> list[str]:
    names = sorted(n for n in os.listdir(directory) if n.endswith(DEMO_SUFFIX))
    return [os.path.join(directory, n) for n in names]


def load_dir(directory: str) -> list[Demonstration]:
    return [load(p) for p in demo_paths(directory)]


def annotation_path_for(demo_path: str) -> str:
    base, _ = os.path.splitext(demo_path)
    return base + ANNOTATION_SUFFIX
