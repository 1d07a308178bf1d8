"""Synthetic scenes with known ground-truth poses.

Every draw comes from ``SplitMix64(seed)`` forked per purpose ("shape",
"pose", "overlap", "noise", "outliers"), so a scene is a pure function of its
config and seed.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from ..core import CorrespondenceSet, PointCloud, RigidTransform, axis_angle_matrix
from ..errors import InvalidData
from ..rng import SplitMix64

SHAPES = ("uniform-cube", "sphere-shell", "multi-plane", "room-like")
_MAX_REJECTION_ROUNDS = 10_000


@dataclass
class SceneConfig:
    point_count: int = 1000
    shape: str = "uniform-cube"
    extent: float = 1.0
    noise_std: float = 0.0
    outlier_fraction: float = 0.0
    overlap_fraction: float = 1.0
    pose_rotation_max: float = 30.0      # degrees
    pose_translation_max: float = 0.5
    # outlier targets closer than this to their paired source's true
    # position are redrawn; 0 disables the check
    outlier_clearance: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.point_count < 10:
            raise InvalidData("point_count must be >= 10")
        if self.shape not in SHAPES:
            raise InvalidData(f"unknown shape {self.shape!r}; expected one of {SHAPES}")
        if not 0.0 <= self.outlier_fraction < 1.0:
            raise InvalidData("outlier_fraction must lie in [0, 1)")
        if not 0.0 < self.overlap_fraction <= 1.0:
            raise InvalidData("overlap_fraction must lie in (0, 1]")
        if self.noise_std < 0 or self.extent <= 0 or self.outlier_clearance < 0:
            raise InvalidData("noise_std, extent and outlier_clearance must be non-negative")
        if self.pose_rotation_max < 0 or self.pose_translation_max < 0:
            raise InvalidData("pose bounds must be non-negative")


@dataclass(frozen=True, eq=False)
class Scene:
    src: PointCloud
    tar: PointCloud
    T_gt: RigidTransform
    gt_corrs: CorrespondenceSet
    outlier_indices: np.ndarray          # target rows that are outliers
    outlier_pairs: CorrespondenceSet     # (source, outlier target) decoys
    config: SceneConfig

    def mixed_correspondences(self) -> tuple[CorrespondenceSet, np.ndarray]:
        """True pairs followed by decoy pairs, and a mask marking the decoys."""
        pairs = np.concatenate([self.gt_corrs.pairs, self.outlier_pairs.pairs])
        mask = np.zeros(pairs.shape[0], dtype=bool)
        mask[len(self.gt_corrs):] = True
        return CorrespondenceSet(pairs), mask


def _sample_faces(rng: SplitMix64, n: int, boxes: list[tuple[np.ndarray, np.ndarray]]) -> np.ndarray:
    faces = []
    for lo, hi in boxes:
        size = hi - lo
        for axis in range(3):
            u, v = [a for a in range(3) if a != axis]
            for side in (lo[axis], hi[axis]):
                faces.append((axis, side, u, v, lo, size, size[u] * size[v]))
    area = np.array([f[-1] for f in faces])
    cdf = np.cumsum(area) / area.sum()
    pick = np.searchsorted(cdf, rng.uniform(n), side="right")
    pick = np.minimum(pick, len(faces) - 1)
    uv = rng.uniform(2 * n).reshape(n, 2)
    pts = np.empty((n, 3))
    for i, (axis, side, u, v, lo, size, _) in enumerate(faces):
        sel = pick == i
        pts[sel, axis] = side
        pts[sel, u] = lo[u] + uv[sel, 0] * size[u]
        pts[sel, v] = lo[v] + uv[sel, 1] * size[v]
    return pts


def sample_shape(shape: str, n: int, extent: float, rng: SplitMix64) -> np.ndarray:
    """``n`` points of the named shape, centred on the origin with span ``extent``."""
    h = extent / 2.0
    if shape == "uniform-cube":
        return rng.uniform(3 * n, -h, h).reshape(n, 3)
    if shape == "sphere-shell":
        return h * rng.unit_vectors(n)
    if shape == "multi-plane":
        # floor plus two walls meeting in a corner
        which = rng.integers(n, 3)
        uv = rng.uniform(2 * n, -h, h).reshape(n, 2)
        pts = np.empty((n, 3))
        for axis in range(3):
            sel = which == axis
            others = [a for a in range(3) if a != axis]
            pts[sel, axis] = -h
            pts[sel, others[0]] = uv[sel, 0]
            pts[sel, others[1]] = uv[sel, 1]
        return pts
    if shape == "room-like":
        room = (np.array([-h, -h, -h / 2]), np.array([h, h, h / 2]))
        box_a = (np.array([-0.6 * h, -0.6 * h, -h / 2]), np.array([-0.1 * h, 0.0, -0.1 * h]))
        box_b = (np.array([0.2 * h, 0.1 * h, -h / 2]), np.array([0.7 * h, 0.5 * h, 0.2 * h]))
        return _sample_faces(rng, n, [room, box_a, box_b])
    raise InvalidData(f"unknown shape {shape!r}")


def random_pose(rng: SplitMix64, rotation_max_deg: float, translation_max: float) -> RigidTransform:
    axis = rng.unit_vectors(1)[0]
    angle = np.radians(rotation_max_deg) * rng.uniform(1)[0]
    direction = rng.unit_vectors(1)[0]
    magnitude = translation_max * rng.uniform(1)[0]
    return RigidTransform(axis_angle_matrix(axis, angle), direction * magnitude)


def generate_scene(config: SceneConfig, seed: Optional[int] = None) -> Scene:
    """Source cloud, noisy moved copy of its overlapping part plus outliers, and the truth.

    The target holds ``n_in = min(round(overlap * n), n - round(outlier_fraction * n))``
    transformed source points (the first ``n_in`` of the overlap region, in
    source order) followed by ``round(outlier_fraction * n)`` points drawn
    uniformly in the bounding box of those inliers. Each outlier is paired
    with a random source point to form a decoy correspondence.
    """
    if seed is not None:
        config = replace(config, seed=seed)
    root = SplitMix64(config.seed)
    n = config.point_count
    src_pts = sample_shape(config.shape, n, config.extent, root.fork("shape"))
    T = random_pose(root.fork("pose"), config.pose_rotation_max, config.pose_translation_max)

    n_out = int(round(config.outlier_fraction * n))
    n_overlap = int(round(config.overlap_fraction * n))
    if n_overlap >= n:
        region = np.arange(n)
    else:
        d = root.fork("overlap").unit_vectors(1)[0]
        region = np.sort(np.argsort(src_pts @ d, kind="stable")[:n_overlap])
    n_in = min(region.shape[0], n - n_out)
    if n_in < 1:
        raise InvalidData("scene has no inlier points")
    inlier_src = region[:n_in]

    tar_in = T.apply(src_pts[inlier_src])
    if config.noise_std > 0:
        tar_in = tar_in + config.noise_std * root.fork("noise").normal(3 * n_in).reshape(n_in, 3)

    out_rng = root.fork("outliers")
    decoy_src = out_rng.integers(n_out, n)
    lo, hi = tar_in.min(axis=0), tar_in.max(axis=0)
    outliers = lo + (hi - lo) * out_rng.uniform(3 * n_out).reshape(n_out, 3) if n_out else np.zeros((0, 3))
    if n_out and config.outlier_clearance > 0:
        truth = T.apply(src_pts[decoy_src])
        for _ in range(_MAX_REJECTION_ROUNDS):
            bad = np.flatnonzero(np.linalg.norm(outliers - truth, axis=1) < config.outlier_clearance)
            if bad.size == 0:
                break
            outliers[bad] = lo + (hi - lo) * out_rng.uniform(3 * bad.size).reshape(bad.size, 3)
        else:
            raise InvalidData("outlier_clearance too large for the scene bounding box")

    tar_pts = np.concatenate([tar_in, outliers])
    outlier_idx = np.arange(n_in, n_in + n_out)
    gt = CorrespondenceSet(np.stack([inlier_src, np.arange(n_in)], axis=1))
    decoys = CorrespondenceSet(np.stack([decoy_src, outlier_idx], axis=1))
    return Scene(PointCloud(src_pts), PointCloud(tar_pts), T, gt, outlier_idx, decoys, config)
