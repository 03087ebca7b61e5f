"""Pluggable regression heads for the manipulation policy.

All heads consume plain feature vectors. `featurize` turns a gaze-centered
cloud into a normalized occupancy grid; `featurize_planar` is the
image-style alternative (pixel-window crop, absolute depth) whose features
are deliberately not translation-invariant. The gaze predictor maps whole
scenes to a 3-D fixation target per sub-task.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .geometry import (
    CameraModel,
    GazeCloud,
    PointCloud,
    Pose7,
    PoseDelta7,
    compose,
    quat_identity,
)

log = logging.getLogger(__name__)

# raw point counts enter feature vectors at this scale so shape terms dominate
COUNT_FEATURE_SCALE = 1e-3


class NotFittedError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# features

@dataclass(frozen=True)
class VoxelFeature:
    """Occupancy over the gaze cube: per-cell point counts normalized by the
    total count, plus the raw total as a separate scalar."""

    grid: np.ndarray
    count: int

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.grid.ravel(), [self.count * COUNT_FEATURE_SCALE]])


def _bin_points(points: np.ndarray, lows, highs, dims) -> np.ndarray:
    """Histogram with closed lower / open upper cell boundaries; the last cell
    is closed so points on the top face still count."""
    lows = np.asarray(lows, dtype=np.float64)
    highs = np.asarray(highs, dtype=np.float64)
    dims = np.asarray(dims, dtype=np.int64)
    grid = np.zeros(tuple(dims), dtype=np.float64)
    if points.shape[0] == 0:
        return grid
    cell = (highs - lows) / dims
    idx = np.floor((points - lows) / cell).astype(np.int64)
    inside = np.all((points >= lows) & (points <= highs), axis=1)
    idx = np.clip(idx[inside], 0, dims - 1)
    flat = np.ravel_multi_index(tuple(idx.T), tuple(dims))
    counts = np.bincount(flat, minlength=int(np.prod(dims)))
    return counts.reshape(tuple(dims)).astype(np.float64)


def featurize(g: GazeCloud, resolution: int = 8) -> VoxelFeature:
    if resolution < 1:
        raise ValueError("resolution must be >= 1")
    half = g.side / 2.0
    grid = _bin_points(g.points, [-half] * 3, [half] * 3, [resolution] * 3)
    n = int(grid.sum())
    if n > 0:
        grid = grid / n
    return VoxelFeature(grid, n)


@dataclass(frozen=True)
class PlanarCropParams:
    """Pixel-window crop around the gaze pixel with absolute-depth binning."""

    window_px: float = 64.0
    resolution: int = 8
    depth_range: tuple[float, float] = (0.35, 1.05)


def featurize_planar(cloud: PointCloud, cam: CameraModel, gaze_3d,
                     params: PlanarCropParams = PlanarCropParams()) -> VoxelFeature:
    gaze_pix, _ = cam.project(np.asarray(gaze_3d, dtype=np.float64))
    pix, z = cam.project(cloud.points)
    du = pix[:, 0] - gaze_pix[0, 0]
    dv = pix[:, 1] - gaze_pix[0, 1]
    w = params.window_px
    zlo, zhi = params.depth_range
    keep = (np.abs(du) <= w) & (np.abs(dv) <= w) & (z > 0)
    pts = np.column_stack([du[keep], dv[keep], np.clip(z[keep], zlo, zhi)])
    grid = _bin_points(pts, [-w, -w, zlo], [w, w, zhi], [params.resolution] * 3)
    n = int(grid.sum())
    if n > 0:
        grid = grid / n
    return VoxelFeature(grid, n)


def scene_summary(cloud: PointCloud, lows, highs,
                  dims=(16, 16, 4)) -> np.ndarray:
    """Coarse world-frame occupancy over the workspace, normalized, plus count."""
    grid = _bin_points(cloud.points, lows, highs, dims)
    n = grid.sum()
    if n > 0:
        grid = grid / n
    return np.concatenate([grid.ravel(), [n * COUNT_FEATURE_SCALE]])


# ---------------------------------------------------------------------------
# regressors

class Regressor:
    """fit(X, Y) then deterministic predict(x). predict before fit raises."""

    def __init__(self):
        self.fitted = False

    def fit(self, X, Y) -> "Regressor":
        raise NotImplementedError

    def predict(self, x) -> np.ndarray:
        raise NotImplementedError

    def _require_fitted(self):
        if not self.fitted:
            raise NotFittedError("regressor not fitted")

    @staticmethod
    def _as_2d(a) -> np.ndarray:
        a = np.asarray(a, dtype=np.float64)
        return a.reshape(1, -1) if a.ndim == 1 else a


class KNNRegressor(Regressor):
    """Mean of the k nearest training targets (Euclidean on flattened features);
    distance ties broken by lower training index."""

    def __init__(self, k: int = 5):
        super().__init__()
        self.k = int(k)
        self.X: np.ndarray | None = None
        self.Y: np.ndarray | None = None

    def fit(self, X, Y):
        X = self._as_2d(X)
        Y = self._as_2d(Y)
        if X.shape[0] == 0:
            raise ValueError("empty training set")
        if self.k > X.shape[0]:
            raise ValueError("k exceeds training-set size")
        if X.shape[0] != Y.shape[0]:
            raise ValueError("X/Y length mismatch")
        self.X, self.Y = X.copy(), Y.copy()
        self.fitted = True
        return self

    def _neighbor_means(self, Q: np.ndarray) -> np.ndarray:
        # |x-q|^2 = |x|^2 - 2 x.q + |q|^2 ; the |q|^2 term is rank-invariant
        d2 = np.sum(self.X**2, axis=1)[None, :] - 2.0 * Q @ self.X.T
        order = np.argsort(d2, axis=1, kind="stable")[:, :self.k]
        return self.Y[order].mean(axis=1)

    def predict(self, x):
        self._require_fitted()
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        out = self._neighbor_means(self._as_2d(x))
        return out[0] if single else out


class RidgeRegressor(Regressor):
    """Linear least squares with an unregularized bias column, solved by the
    normal equations."""

    def __init__(self, lam: float = 1e-3):
        super().__init__()
        if lam < 0:
            raise ValueError("lambda must be nonnegative")
        self.lam = float(lam)
        self.W: np.ndarray | None = None

    def fit(self, X, Y):
        X = self._as_2d(X)
        Y = self._as_2d(Y)
        if X.shape[0] == 0:
            raise ValueError("empty training set")
        if not np.all(np.isfinite(X)):
            raise ValueError("non-finite design matrix")
        A = np.column_stack([X, np.ones(X.shape[0])])
        reg = np.eye(A.shape[1]) * self.lam
        reg[-1, -1] = 0.0  # bias unregularized
        G = A.T @ A + reg
        if np.linalg.cond(G) > 1e12:
            raise ValueError("singular normal equations; use lambda > 0")
        self.W = np.linalg.solve(G, A.T @ Y)
        self.fitted = True
        return self

    def predict(self, x):
        self._require_fitted()
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        X = self._as_2d(x)
        out = np.column_stack([X, np.ones(X.shape[0])]) @ self.W
        return out[0] if single else out


class ConstantRegressor(Regressor):
    """Always predicts a fixed vector; used for degenerate heads and for
    pure-geometry executor tests."""

    def __init__(self, value):
        super().__init__()
        self.value = np.asarray(value, dtype=np.float64).ravel()
        self.fitted = True

    def fit(self, X, Y):
        return self

    def predict(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 2:
            return np.tile(self.value, (x.shape[0], 1))
        return self.value.copy()


# ---------------------------------------------------------------------------
# bottleneck offset head

def gaze_anchor_pose(gaze_3d) -> Pose7:
    """Canonical world-aligned frame at the gaze point (identity orientation,
    zero gripper); bottleneck targets are expressed relative to it."""
    return Pose7(np.asarray(gaze_3d, dtype=np.float64), quat_identity(), 0.0)


def predict_offset(f: Regressor, g: GazeCloud, resolution: int = 8) -> PoseDelta7:
    """Bottleneck offset from the gaze point; takes no end-effector input."""
    vec = f.predict(featurize(g, resolution).as_vector())
    return PoseDelta7.from_vector(vec)


def bottleneck_pose(gaze_3d, offset: PoseDelta7) -> Pose7:
    return compose(gaze_anchor_pose(gaze_3d), offset)


# ---------------------------------------------------------------------------
# progress gating

def progress_labels(n_seg: int, k: int, t: int, s: int, e: int) -> np.ndarray:
    """Per-sub-task completion vector: 1 for finished sub-tasks, the
    normalized phase (t-s)/(e-s) for the active one, 0 for future ones."""
    lab = np.zeros(n_seg)
    lab[:k] = 1.0
    lab[k] = 1.0 if e == s else (t - s) / (e - s)
    return lab


def advance(i_seg: int, streak: int, c: float, n_seg: int,
            threshold: float = 0.9, patience: int = 3) -> tuple[int, int, bool]:
    """Sub-task index update: advance after `patience` consecutive steps with
    predicted completion >= threshold; never decrements; saturates at n_seg-1."""
    if c >= threshold:
        streak += 1
    else:
        streak = 0
    if streak >= patience:
        if i_seg < n_seg - 1:
            return i_seg + 1, 0, True
        return i_seg, 0, False
    return i_seg, streak, False


# ---------------------------------------------------------------------------
# scene clustering and the gaze predictor

@dataclass(frozen=True)
class SceneCluster:
    centroid: np.ndarray
    descriptor: np.ndarray
    npoints: int


def scene_clusters(cloud: PointCloud, table_z: float = 0.0, cell: float = 0.02,
                   z_min: float = 0.006, min_points: int = 5) -> list[SceneCluster]:
    """Connected components of above-table occupancy (26-connectivity on a
    `cell`-sized grid). Descriptors are position-free: sorted bounding-box
    extents, centroid height over the table, and a sqrt point-count term."""
    pts = cloud.points[cloud.points[:, 2] > table_z + z_min]
    if pts.shape[0] == 0:
        return []
    keys = np.floor(pts / cell).astype(np.int64)
    cells: dict[tuple[int, int, int], list[int]] = {}
    for i, k in enumerate(map(tuple, keys)):
        cells.setdefault(k, []).append(i)
    seen: set[tuple[int, int, int]] = set()
    clusters = []
    for start in cells:
        if start in seen:
            continue
        stack, members = [start], []
        seen.add(start)
        while stack:
            c = stack.pop()
            members.extend(cells[c])
            for dx in (-1, 0, 1):
                for dy in (-1, 0, 1):
                    for dz in (-1, 0, 1):
                        nb = (c[0] + dx, c[1] + dy, c[2] + dz)
                        if nb in cells and nb not in seen:
                            seen.add(nb)
                            stack.append(nb)
        if len(members) < min_points:
            continue
        sub = pts[members]
        centroid = sub.mean(axis=0)
        extents = np.sort(sub.max(axis=0) - sub.min(axis=0))
        desc = np.concatenate([extents, [centroid[2] - table_z],
                               [np.sqrt(len(members)) * 0.01]])
        clusters.append(SceneCluster(centroid, desc, len(members)))
    clusters.sort(key=lambda c: -c.npoints)
    return clusters


@dataclass
class GazePredictor:
    """One gaze model per sub-task.

    mode 'cluster': match above-table clusters by shape descriptor against the
    training clusters that carried the gaze, then add a learned offset from the
    cluster centroid — equivariant to object placement by construction.
    mode 'grid': nearest-neighbor regression on a coarse world-frame occupancy
    grid of the scene (position-dependent baseline).
    """

    mode: str = "cluster"
    table_z: float = 0.0
    workspace: tuple = ((-0.45, -0.32, 0.0), (0.45, 0.32, 0.5))
    grid_dims: tuple = (16, 16, 4)
    knn_k: int = 3
    models: list = field(default_factory=list)
    fitted: bool = False

    def fit(self, per_subtask: list[list[tuple[PointCloud, np.ndarray]]]) -> "GazePredictor":
        """per_subtask[i] is a list of (scene, gaze_3d) pairs for sub-task i."""
        self.models = []
        for pairs in per_subtask:
            if not pairs:
                raise ValueError("empty training set")
            if self.mode == "cluster":
                descs, offsets, gazes = [], [], []
                for cloud, gaze in pairs:
                    gaze = np.asarray(gaze, dtype=np.float64)
                    gazes.append(gaze)
                    clusters = scene_clusters(cloud, self.table_z)
                    if not clusters:
                        continue
                    near = min(clusters, key=lambda c: np.linalg.norm(c.centroid - gaze))
                    descs.append(near.descriptor)
                    offsets.append(gaze - near.centroid)
                if not descs:
                    raise ValueError("no clusters found in any training scene")
                knn = KNNRegressor(k=min(self.knn_k, len(descs)))
                knn.fit(np.stack(descs), np.stack(offsets))
                self.models.append({"knn": knn, "descs": np.stack(descs),
                                    "fallback": np.mean(gazes, axis=0)})
            elif self.mode == "grid":
                X = np.stack([scene_summary(c, *self.workspace, self.grid_dims)
                              for c, _ in pairs])
                Y = np.stack([np.asarray(g, dtype=np.float64) for _, g in pairs])
                knn = KNNRegressor(k=min(self.knn_k, len(pairs)))
                knn.fit(X, Y)
                self.models.append({"knn": knn})
            else:
                raise ValueError(f"unknown gaze mode {self.mode!r}")
        self.fitted = True
        return self

    def predict(self, scene: PointCloud, i_seg: int) -> np.ndarray:
        if not self.fitted:
            raise NotFittedError("gaze predictor not fitted")
        if not 0 <= i_seg < len(self.models):
            raise ValueError("sub-task index out of range")
        m = self.models[i_seg]
        if self.mode == "grid":
            return m["knn"].predict(scene_summary(scene, *self.workspace, self.grid_dims))
        clusters = scene_clusters(scene, self.table_z)
        if not clusters:
            log.warning("no scene clusters; falling back to mean training gaze")
            return m["fallback"].copy()
        best, best_d = None, np.inf
        for c in clusters:
            d = float(np.min(np.sum((m["descs"] - c.descriptor) ** 2, axis=1)))
            if d < best_d:
                best, best_d = c, d
        return best.centroid + m["knn"].predict(best.descriptor)

    @property
    def n_seg(self) -> int:
        return len(self.models)
