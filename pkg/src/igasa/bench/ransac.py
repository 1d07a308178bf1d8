"""Three-point RANSAC baseline with SVD model fitting."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import CorrespondenceSet, PointCloud, RigidTransform
from ..errors import DegenerateGeometry, DegenerateWeights, InsufficientCorrespondences, NoConsensus
from ..igar import RANK_TOL, procrustes
from ..rng import SplitMix64

_BLOCK = 256


@dataclass(frozen=True, eq=False)
class RansacResult:
    transform: RigidTransform
    inliers: np.ndarray      # boolean mask over pairs
    iterations: int


def _batched_kabsch(A: np.ndarray, B: np.ndarray):
    """Rotations/translations for batches of 3-point samples, shape (m, 3, 3)."""
    ca, cb = A.mean(axis=1), B.mean(axis=1)
    C = np.einsum("mij,mik->mjk", A - ca[:, None], B - cb[:, None])
    U, S, Vt = np.linalg.svd(C)
    V = np.transpose(Vt, (0, 2, 1))
    d = np.sign(np.linalg.det(V @ np.transpose(U, (0, 2, 1))))
    d[d == 0] = 1.0
    D = np.zeros_like(C)
    D[:, 0, 0] = 1.0
    D[:, 1, 1] = 1.0
    D[:, 2, 2] = d
    R = V @ D @ np.transpose(U, (0, 2, 1))
    t = cb - np.einsum("mij,mj->mi", R, ca)
    valid = (S[:, 0] > 0) & (S[:, 1] > RANK_TOL * S[:, 0])
    return R, t, valid


def ransac(corrs: CorrespondenceSet, src: PointCloud, tar: PointCloud, iterations: int = 2000,
           inlier_radius: float = 0.05, seed: int = 0) -> RansacResult:
    """Sample 3 pairs per hypothesis, keep the hypothesis with the most pairs
    within ``inlier_radius`` (first one wins ties), then refit on its consensus set."""
    n = len(corrs)
    if n < 3:
        raise InsufficientCorrespondences(f"need at least 3 pairs, got {n}")
    ps, pt = corrs.endpoints(src, tar)
    samples = SplitMix64(seed).fork("ransac").integers(3 * iterations, n).reshape(iterations, 3)
    best_count, best_mask = -1, None
    for start in range(0, iterations, _BLOCK):
        idx = samples[start:start + _BLOCK]
        distinct = (idx[:, 0] != idx[:, 1]) & (idx[:, 0] != idx[:, 2]) & (idx[:, 1] != idx[:, 2])
        R, t, valid = _batched_kabsch(ps[idx], pt[idx])
        valid &= distinct
        moved = np.einsum("mij,nj->mni", R, ps) + t[:, None, :]
        r2 = np.einsum("mni,mni->mn", moved - pt, moved - pt)
        masks = r2 < inlier_radius ** 2
        counts = np.where(valid, masks.sum(axis=1), -1)
        j = int(np.argmax(counts))
        if counts[j] > best_count:
            best_count, best_mask = int(counts[j]), masks[j]
    if best_mask is None or best_count < 3:
        raise NoConsensus(f"largest consensus set has {max(best_count, 0)} pairs")
    try:
        T = procrustes(ps[best_mask], pt[best_mask], np.ones(best_count))
    except (DegenerateWeights, DegenerateGeometry) as exc:
        raise NoConsensus(f"consensus set is degenerate: {exc}") from None
    return RansacResult(T, best_mask, iterations)


def ransac_baseline(corrs: CorrespondenceSet, src: PointCloud, tar: PointCloud,
                    iterations: int = 2000, inlier_radius: float = 0.05, seed: int = 0) -> RigidTransform:
    return ransac(corrs, src, tar, iterations, inlier_radius, seed).transform
