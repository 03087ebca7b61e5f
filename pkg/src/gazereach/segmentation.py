"""Data-driven demonstration segmentation: gaze fixation clustering into
sub-tasks, an action-predictivity probe over gaze-centered features, and
median-split bottleneck detection within each sub-task."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .dataset import Demonstration, SegmentAnnotation
from .geometry import crop_gaze_cube
from .predictors import KNNRegressor, Regressor, featurize

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class FixationParams:
    """Fixation = gaze within `radius` of the cluster's running centroid for at
    least `min_dwell` consecutive steps."""

    radius: float = 0.05
    min_dwell: int = 5

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("radius must be positive")
        if self.min_dwell < 1:
            raise ValueError("min_dwell must be >= 1")


@dataclass(frozen=True)
class PredictivityTrace:
    """Per-step squared action-prediction error of the gaze-cloud probe."""

    losses: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.losses, dtype=np.float64)
        if np.any(~np.isfinite(a)) or np.any(a < 0):
            raise ValueError("losses must be finite and nonnegative")
        object.__setattr__(self, "losses", a)

    def __len__(self):
        return len(self.losses)


# ---------------------------------------------------------------------------
# sub-task segmentation

def _stable_run_start(gaze: np.ndarray, start: int, params: FixationParams) -> tuple[int, np.ndarray, int] | None:
    """First index v >= start where gaze stays within radius of its running
    centroid for min_dwell steps; returns (v, centroid, count)."""
    T = gaze.shape[0]
    for v in range(start, T - params.min_dwell + 1):
        centroid = gaze[v].copy()
        n = 1
        ok = True
        for u in range(v + 1, v + params.min_dwell):
            if np.linalg.norm(gaze[u] - centroid) > params.radius:
                ok = False
                break
            centroid = (centroid * n + gaze[u]) / (n + 1)
            n += 1
        if ok:
            return v, centroid, n
    return None


def segment_gaze(gaze: np.ndarray, params: FixationParams = FixationParams()) -> list[tuple[int, int]]:
    """Partition [0, T] into fixation-cluster segments.

    Greedy scan with a running centroid. Excursions that return to the current
    cluster within min_dwell steps are absorbed without moving the centroid; a
    departure that never returns starts the next sub-task at the departure step
    (the transition motion belongs to the segment it leads into).
    """
    gaze = np.asarray(gaze, dtype=np.float64)
    T = gaze.shape[0]
    first = _stable_run_start(gaze, 0, params)
    if first is None:
        raise ValueError("no stable gaze")
    v0, centroid, n = first
    boundaries = [0]
    t = v0 + n
    while t < T:
        if np.linalg.norm(gaze[t] - centroid) <= params.radius:
            centroid = (centroid * n + gaze[t]) / (n + 1)
            n += 1
            t += 1
            continue
        # transient excursion: returns to the current cluster within min_dwell
        ret = None
        for u in range(t + 1, min(t + params.min_dwell, T)):
            if np.linalg.norm(gaze[u] - centroid) <= params.radius:
                ret = u
                break
        if ret is not None:
            t = ret
            continue
        nxt = _stable_run_start(gaze, t, params)
        if nxt is None:
            break  # tail never stabilizes; it stays with the current segment
        boundaries.append(t)
        _, centroid, n = nxt
        t = nxt[0] + n
    segments = [(boundaries[i], boundaries[i + 1] - 1) for i in range(len(boundaries) - 1)]
    segments.append((boundaries[-1], T - 1))
    return segments


def segment_subtasks(demo: Demonstration,
                     params: FixationParams = FixationParams()) -> list[tuple[int, int]]:
    gaze = np.stack([f.gaze_3d for f in demo.frames])
    return segment_gaze(gaze, params)


# ---------------------------------------------------------------------------
# predictivity probe

def _frame_action14(frame) -> np.ndarray:
    return np.concatenate([frame.action_left.as_vector(), frame.action_right.as_vector()])


def _frame_features(demo: Demonstration, side: float, resolution: int) -> np.ndarray:
    return np.stack([
        featurize(crop_gaze_cube(f.cloud, f.gaze_3d, side), resolution).as_vector()
        for f in demo.frames
    ])


def train_bottleneck_probe(demos: list[Demonstration], make_regressor=None,
                           side: float = 0.20, resolution: int = 8) -> Regressor:
    """Behavior-cloning probe: gaze-cloud features -> 14-D action, fit over
    every frame of every demo (crops use the recorded gaze)."""
    if not demos:
        raise ValueError("empty dataset")
    make_regressor = make_regressor or (lambda: KNNRegressor(k=5))
    X = np.concatenate([_frame_features(d, side, resolution) for d in demos])
    Y = np.concatenate([np.stack([_frame_action14(f) for f in d.frames]) for d in demos])
    return make_regressor().fit(X, Y)


def predictivity(demo: Demonstration, h: Regressor, side: float = 0.20,
                 resolution: int = 8) -> PredictivityTrace:
    """Squared prediction error per step: |a_t - h(crop(o_t, g_t))|^2."""
    X = _frame_features(demo, side, resolution)
    Y = np.stack([_frame_action14(f) for f in demo.frames])
    pred = h.predict(X)
    return PredictivityTrace(np.sum((pred - Y) ** 2, axis=1))


# ---------------------------------------------------------------------------
# bottleneck detection

def smooth_losses(losses: np.ndarray, w: int) -> np.ndarray:
    """Centered moving average of width w; windows truncate at the edges."""
    half = w // 2
    out = np.empty_like(losses, dtype=np.float64)
    for i in range(len(losses)):
        lo = max(0, i - half)
        hi = min(len(losses), i + half + 1)
        out[i] = losses[lo:hi].mean()
    return out


def detect_bottleneck(segment_losses: np.ndarray, w: int = 3) -> int:
    """Index (within the segment) of the earliest step where the smoothed loss
    stays below the segment median for w consecutive steps. Falls back to the
    smoothed argmin when no sustained run exists."""
    losses = np.asarray(segment_losses, dtype=np.float64)
    if len(losses) < 2 * w:
        raise ValueError("segment below minimum length")
    m = float(np.median(losses))
    sm = smooth_losses(losses, w)
    below = sm < m
    for t in range(len(losses) - w + 1):
        if np.all(below[t:t + w]):
            return t
    fallback = int(np.argmin(sm))
    log.debug("no sustained sub-median run; falling back to argmin=%d", fallback)
    return fallback


def annotate_demo(demo: Demonstration, h: Regressor,
                  params: FixationParams = FixationParams(), w: int = 3,
                  side: float = 0.20, resolution: int = 8
                  ) -> tuple[SegmentAnnotation, PredictivityTrace]:
    """Full per-demo segmentation: fixation segments plus a bottleneck each."""
    segments = segment_subtasks(demo, params)
    trace = predictivity(demo, h, side, resolution)
    annotated = []
    for s, e in segments:
        b = s + detect_bottleneck(trace.losses[s:e + 1], w)
        annotated.append((s, e, b))
    return SegmentAnnotation(tuple(annotated)), trace
