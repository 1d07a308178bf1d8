"""Geometric value types and rigid-transform algebra."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DimensionMismatch, InvalidData, InvalidRotation

ORTHO_TOL = 1e-9


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class PointCloud:
    """Points of shape (n, 3) with optional per-point feature rows."""

    points: np.ndarray
    features: Optional[np.ndarray] = None

    def __post_init__(self):
        pts = _frozen(self.points)
        if pts.ndim == 1 and pts.size == 0:
            pts = _frozen(np.zeros((0, 3)))
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise DimensionMismatch(f"points must have shape (n, 3), got {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise InvalidData("point coordinates must be finite")
        object.__setattr__(self, "points", pts)
        if self.features is not None:
            feats = _frozen(self.features)
            if feats.ndim == 1:
                feats = _frozen(feats.reshape(-1, 1))
            if feats.shape[0] != pts.shape[0]:
                raise DimensionMismatch(
                    f"{feats.shape[0]} feature rows for {pts.shape[0]} points")
            object.__setattr__(self, "features", feats)

    def __len__(self) -> int:
        return self.points.shape[0]

    def with_features(self, features: Optional[np.ndarray]) -> "PointCloud":
        return PointCloud(self.points, features)


def orthogonality_residual(R: np.ndarray) -> float:
    return float(np.linalg.norm(R.T @ R - np.eye(3)))


def orthonormalize(R: np.ndarray) -> np.ndarray:
    """Nearest proper rotation to ``R`` in the Frobenius sense (polar decomposition)."""
    U, _, Vt = np.linalg.svd(np.asarray(R, dtype=np.float64))
    D = np.diag([1.0, 1.0, np.sign(np.linalg.det(U @ Vt)) or 1.0])
    return U @ D @ Vt


def is_rotation(R: np.ndarray, tol: float = ORTHO_TOL) -> bool:
    R = np.asarray(R, dtype=np.float64)
    if R.shape != (3, 3) or not np.all(np.isfinite(R)):
        return False
    return orthogonality_residual(R) <= tol and abs(np.linalg.det(R) - 1.0) <= tol


@dataclass(frozen=True, eq=False)
class RigidTransform:
    """Proper rotation plus translation; maps p to R p + t."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        R = np.asarray(self.rotation, dtype=np.float64)
        t = np.asarray(self.translation, dtype=np.float64).reshape(-1)
        if R.shape != (3, 3) or t.shape != (3,):
            raise DimensionMismatch("rotation must be 3x3 and translation a 3-vector")
        if not np.all(np.isfinite(R)) or not np.all(np.isfinite(t)):
            raise InvalidRotation("non-finite transform entries")
        if abs(np.linalg.det(R) - 1.0) > 1e-6:
            raise InvalidRotation(f"det(R) = {np.linalg.det(R):.6g}, expected +1")
        if orthogonality_residual(R) > ORTHO_TOL:
            if orthogonality_residual(R) > 1e-6:
                raise InvalidRotation("rotation is not orthogonal")
            R = orthonormalize(R)
        object.__setattr__(self, "rotation", _frozen(R))
        object.__setattr__(self, "translation", _frozen(t))

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.eye(3), np.zeros(3))

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform an (n, 3) array (or a single 3-vector)."""
        p = np.asarray(points, dtype=np.float64)
        return p @ self.rotation.T + self.translation

    def matrix(self) -> np.ndarray:
        M = np.eye(4)
        M[:3, :3] = self.rotation
        M[:3, 3] = self.translation
        return M

    def __matmul__(self, other: "RigidTransform") -> "RigidTransform":
        return compose(self, other)

    def allclose(self, other: "RigidTransform", atol: float = 1e-9) -> bool:
        return bool(np.allclose(self.rotation, other.rotation, rtol=0, atol=atol)
                    and np.allclose(self.translation, other.translation, rtol=0, atol=atol))


def apply_transform(T: RigidTransform, cloud: PointCloud) -> PointCloud:
    return PointCloud(T.apply(cloud.points), cloud.features)


def compose(T1: RigidTransform, T2: RigidTransform) -> RigidTransform:
    """Transform that applies ``T2`` first, then ``T1``."""
    R = T1.rotation @ T2.rotation
    if orthogonality_residual(R) > ORTHO_TOL:
        R = orthonormalize(R)
    return RigidTransform(R, T1.rotation @ T2.translation + T1.translation)


def invert(T: RigidTransform) -> RigidTransform:
    Rt = T.rotation.T
    return RigidTransform(Rt, -Rt @ T.translation)


def axis_angle_matrix(axis, angle: float) -> np.ndarray:
    """Rodrigues' formula; ``angle`` in radians."""
    k = np.asarray(axis, dtype=np.float64)
    k = k / np.linalg.norm(k)
    K = np.array([[0.0, -k[2], k[1]], [k[2], 0.0, -k[0]], [-k[1], k[0], 0.0]])
    return np.eye(3) + np.sin(angle) * K + (1.0 - np.cos(angle)) * (K @ K)


def rotation_angle(R: np.ndarray) -> float:
    """Rotation angle of ``R`` in radians, in [0, pi].

    Uses ``atan2(sin, cos)``: ``arccos`` of the trace alone bottoms out
    around 1e-8 rad for near-identity matrices.
    """
    R = np.asarray(R, dtype=np.float64)
    c = (np.trace(R) - 1.0) / 2.0
    w = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    return float(np.arctan2(np.linalg.norm(w) / 2.0, c))


@dataclass(frozen=True, eq=False)
class CorrespondenceSet:
    """Pairs of (source index, target index) with optional scores and weights."""

    pairs: np.ndarray
    scores: Optional[np.ndarray] = None
    weights: Optional[np.ndarray] = None

    def __post_init__(self):
        pairs = np.array(self.pairs, dtype=np.int64, copy=True).reshape(-1, 2)
        pairs.setflags(write=False)
        object.__setattr__(self, "pairs", pairs)
        n = pairs.shape[0]
        if n and np.any(pairs < 0):
            raise InvalidData("negative correspondence index")
        if n and np.unique(pairs, axis=0).shape[0] != n:
            raise InvalidData("duplicate correspondence pairs")
        for name in ("scores", "weights"):
            v = getattr(self, name)
            if v is not None:
                v = _frozen(np.reshape(v, -1))
                if v.shape[0] != n:
                    raise DimensionMismatch(f"{name} length {v.shape[0]} != {n} pairs")
                object.__setattr__(self, name, v)
        if self.weights is not None and n and (
                np.any(self.weights < 0) or np.any(self.weights > 1)):
            raise InvalidData("weights must lie in [0, 1]")

    def __len__(self) -> int:
        return self.pairs.shape[0]

    @property
    def source(self) -> np.ndarray:
        return self.pairs[:, 0]

    @property
    def target(self) -> np.ndarray:
        return self.pairs[:, 1]

    def check_bounds(self, n_source: int, n_target: int) -> None:
        if len(self) and (self.source.max() >= n_source or self.target.max() >= n_target):
            raise InvalidData("correspondence index out of bounds")

    def subset(self, idx) -> "CorrespondenceSet":
        idx = np.asarray(idx, dtype=np.int64)
        return CorrespondenceSet(
            self.pairs[idx],
            None if self.scores is None else self.scores[idx],
            None if self.weights is None else self.weights[idx],
        )

    def endpoints(self, src: PointCloud, tar: PointCloud) -> tuple[np.ndarray, np.ndarray]:
        """Coordinates of both ends of every pair, each of shape (n, 3)."""
        self.check_bounds(len(src), len(tar))
        return src.points[self.source], tar.points[self.target]
