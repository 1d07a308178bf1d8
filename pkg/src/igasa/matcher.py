"""Superpoint matching: feature nearest neighbours, geometric consistency
scores under an initial transform, and top-k filtering."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import CorrespondenceSet, PointCloud, RigidTransform
from .errors import (DegenerateGeometry, DegenerateWeights, DimensionMismatch, EmptyInput,
                     InvalidData)

_CHUNK = 256


def nearest_feature_indices(F_src: np.ndarray, F_tar: np.ndarray) -> np.ndarray:
    """For each source row, index of the closest target row (smallest index on ties)."""
    F_src = np.atleast_2d(np.asarray(F_src, dtype=np.float64))
    F_tar = np.atleast_2d(np.asarray(F_tar, dtype=np.float64))
    if F_tar.shape[0] == 0 or np.asarray(F_tar).size == 0:
        raise EmptyInput("target feature matrix is empty")
    if F_src.shape[0] == 0:
        raise EmptyInput("source feature matrix is empty")
    if F_src.shape[1] != F_tar.shape[1]:
        raise DimensionMismatch(f"feature widths differ: {F_src.shape[1]} vs {F_tar.shape[1]}")
    out = np.empty(F_src.shape[0], dtype=np.int64)
    for start in range(0, F_src.shape[0], _CHUNK):
        block = F_src[start:start + _CHUNK]
        diff = block[:, None, :] - F_tar[None, :, :]
        d2 = np.einsum("ijk,ijk->ij", diff, diff)
        out[start:start + _CHUNK] = np.argmin(d2, axis=1)
    return out


def nn_match(F_src: np.ndarray, F_tar: np.ndarray, mutual: bool = False) -> CorrespondenceSet:
    """One pair (j, argmin_k |f_src_j - f_tar_k|) per source row.

    With ``mutual`` only pairs that are also nearest in the target-to-source
    direction are kept.
    """
    fwd = nearest_feature_indices(F_src, F_tar)
    src_idx = np.arange(fwd.shape[0])
    if mutual:
        back = nearest_feature_indices(F_tar, F_src)
        keep = back[fwd] == src_idx
        src_idx, fwd = src_idx[keep], fwd[keep]
    return CorrespondenceSet(np.stack([src_idx, fwd], axis=1))


@dataclass
class MatchConfig:
    k: Optional[int] = None          # None: max(ceil(0.25 n), 32)
    sigma_score: float = 0.05
    initial_transform: RigidTransform = field(default_factory=RigidTransform.identity)
    tinit: str = "identity"          # identity | unweighted-svd
    mutual: bool = False

    def __post_init__(self):
        if self.k is not None and self.k < 1:
            raise InvalidData("k must be >= 1")
        if self.sigma_score <= 0:
            raise InvalidData("sigma_score must be positive")
        if self.tinit not in ("identity", "unweighted-svd"):
            raise InvalidData(f"unknown tinit mode {self.tinit!r}")

    def resolve_k(self, n: int) -> int:
        if self.k is not None:
            return self.k
        return max(math.ceil(0.25 * n), 32)


def consistency_scores(corrs: CorrespondenceSet, src: PointCloud, tar: PointCloud,
                       config: MatchConfig) -> np.ndarray:
    """``exp(-|R_init p_src + t_init - p_tar|^2 / sigma_s^2)`` per pair."""
    ps, pt = corrs.endpoints(src, tar)
    r = config.initial_transform.apply(ps) - pt
    return np.exp(-np.einsum("ij,ij->i", r, r) / config.sigma_score ** 2)


def topk_filter(corrs: CorrespondenceSet, scores: np.ndarray, k: int) -> CorrespondenceSet:
    """The ``min(k, n)`` best-scoring pairs, descending by score, stable on ties."""
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    if scores.shape[0] != len(corrs):
        raise DimensionMismatch("one score per pair required")
    if k < 1:
        raise InvalidData("k must be >= 1")
    order = np.argsort(-scores, kind="stable")[:k]
    kept = corrs.subset(order)
    return CorrespondenceSet(kept.pairs, scores[order], kept.weights)


def superpoint_match(F_src: np.ndarray, F_tar: np.ndarray, src: PointCloud, tar: PointCloud,
                     config: MatchConfig) -> CorrespondenceSet:
    """Nearest-neighbour matching followed by consistency scoring and top-k."""
    corrs = nn_match(F_src, F_tar, mutual=config.mutual)
    if config.tinit == "unweighted-svd" and len(corrs) >= 3:
        from .igar import weighted_svd_solve
        try:
            T0 = weighted_svd_solve(corrs, src, tar, np.ones(len(corrs)))
        except (DegenerateGeometry, DegenerateWeights):
            T0 = config.initial_transform
        config = MatchConfig(config.k, config.sigma_score, T0, "identity", config.mutual)
    scores = consistency_scores(corrs, src, tar, config)
    return topk_filter(corrs, scores, config.resolve_k(len(corrs)))
