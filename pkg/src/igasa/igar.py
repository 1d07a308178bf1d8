"""Iterative geometry-aware refinement.

Alternates consistency reweighting of correspondences with a closed-form
weighted Procrustes solve for a fixed number of iterations.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import CorrespondenceSet, PointCloud, RigidTransform
from .errors import DegenerateGeometry, DegenerateWeights, InsufficientCorrespondences, InvalidData

RANK_TOL = 1e-12


@dataclass
class RefineConfig:
    iterations: int = 5
    sigma: float = 0.05
    tau: Optional[float] = None         # None: 3 * sigma
    min_effective_weight: float = 1e-8
    # Literal first-iteration weights use the raw gap |p_src - p_tar|.
    # With apply_init the gap is measured after init_transform.
    init_transform: Optional[RigidTransform] = None
    apply_init: bool = False
    early_exit: bool = False
    early_exit_tol: float = 1e-10

    def __post_init__(self):
        if self.iterations < 1:
            raise InvalidData("iterations must be >= 1")
        if self.sigma <= 0:
            raise InvalidData("sigma must be positive")
        if self.tau is not None and self.tau <= 0:
            raise InvalidData("tau must be positive")

    @property
    def gate(self) -> float:
        return 3.0 * self.sigma if self.tau is None else self.tau


@dataclass(frozen=True, eq=False)
class RefineRecord:
    transform: RigidTransform
    objective: float
    effective_weight_sum: float
    inlier_count: int
    weights: np.ndarray


@dataclass
class RefineTrace:
    records: list[RefineRecord] = field(default_factory=list)
    degenerate: bool = False
    reason: Optional[str] = None

    def __len__(self) -> int:
        return len(self.records)

    @property
    def final_weights(self) -> Optional[np.ndarray]:
        return self.records[-1].weights if self.records else None


def _residuals(ps: np.ndarray, pt: np.ndarray, T: Optional[RigidTransform]) -> np.ndarray:
    moved = ps if T is None else T.apply(ps)
    d = pt - moved
    return np.sqrt(np.einsum("ij,ij->i", d, d))


def initial_weights(corrs: CorrespondenceSet, src: PointCloud, tar: PointCloud, sigma: float,
                    T_init: Optional[RigidTransform] = None) -> np.ndarray:
    """``exp(-|p_src - p_tar|^2 / sigma^2)``; the gap is taken after ``T_init`` if given."""
    if sigma <= 0:
        raise InvalidData("sigma must be positive")
    ps, pt = corrs.endpoints(src, tar)
    r = _residuals(ps, pt, T_init)
    return np.exp(-(r * r) / sigma ** 2)


def reweight(corrs: CorrespondenceSet, src: PointCloud, tar: PointCloud, T: RigidTransform,
             sigma: float, tau: float) -> np.ndarray:
    """Gaussian weight of the residual under ``T``, set to exactly 0 where residual >= tau."""
    ps, pt = corrs.endpoints(src, tar)
    r = _residuals(ps, pt, T)
    w = np.exp(-(r * r) / sigma ** 2)
    w[~(r < tau)] = 0.0
    return w


def objective(corrs: CorrespondenceSet, src: PointCloud, tar: PointCloud, weights: np.ndarray,
              T: RigidTransform) -> float:
    """Weighted sum of squared residuals ``sum w |R p_src + t - p_tar|^2``."""
    ps, pt = corrs.endpoints(src, tar)
    w = np.asarray(weights, dtype=np.float64).reshape(-1)
    if w.shape[0] != len(corrs):
        raise InvalidData("one weight per pair required")
    d = T.apply(ps) - pt
    return float(np.einsum("i,i->", w, np.einsum("ij,ij->i", d, d)))


def procrustes(ps: np.ndarray, pt: np.ndarray, weights: np.ndarray,
               min_effective_weight: float = 1e-8) -> RigidTransform:
    """Weighted Procrustes on paired coordinate arrays (see ``weighted_svd_solve``)."""
    w = np.asarray(weights, dtype=np.float64).reshape(-1)
    total = float(w.sum())
    if not total > min_effective_weight or np.count_nonzero(w) < 3:
        raise DegenerateWeights(
            f"effective weight {total:.3g} with {np.count_nonzero(w)} nonzero weights")
    c_src = np.einsum("i,ij->j", w, ps) / total
    c_tar = np.einsum("i,ij->j", w, pt) / total
    C = np.einsum("i,ij,ik->jk", w, ps - c_src, pt - c_tar)
    U, S, Vt = np.linalg.svd(C)
    if not S[0] > 0 or S[1] <= RANK_TOL * S[0]:
        raise DegenerateGeometry("weighted points are collinear or coincident; rotation is ambiguous")
    V = Vt.T
    d = 1.0 if np.linalg.det(V @ U.T) >= 0 else -1.0
    R = V @ np.diag([1.0, 1.0, d]) @ U.T
    return RigidTransform(R, c_tar - R @ c_src)


def weighted_svd_solve(corrs: CorrespondenceSet, src: PointCloud, tar: PointCloud,
                       weights: np.ndarray, min_effective_weight: float = 1e-8) -> RigidTransform:
    """Rigid transform minimising the weighted squared residual.

    Weighted centroids, cross-covariance ``C = sum w (p_src - c_src)(p_tar - c_tar)^T``,
    ``C = U S V^T`` and ``R = V diag(1, 1, det(V U^T)) U^T``, ``t = c_tar - R c_src``.

    Raises DegenerateWeights when the weight sum is at or below
    ``min_effective_weight`` or fewer than three weights are nonzero, and
    DegenerateGeometry when the weighted points are collinear.
    """
    ps, pt = corrs.endpoints(src, tar)
    if np.asarray(weights).reshape(-1).shape[0] != len(corrs):
        raise InvalidData("one weight per pair required")
    return procrustes(ps, pt, weights, min_effective_weight)


def _delta(a: RigidTransform, b: RigidTransform) -> float:
    return float(np.linalg.norm(a.rotation - b.rotation) + np.linalg.norm(a.translation - b.translation))


def refine(corrs: CorrespondenceSet, src: PointCloud, tar: PointCloud,
           config: Optional[RefineConfig] = None) -> tuple[RigidTransform, RefineTrace]:
    """Alternate reweighting and weighted SVD solves.

    Iteration 1 solves with the initial weights; later iterations reweight
    with the previous iterate's transform. If the weights or geometry
    degenerate, the last valid transform is returned and the trace is
    flagged (``trace.degenerate``) and truncated there.
    """
    config = config or RefineConfig()
    if len(corrs) < 3:
        raise InsufficientCorrespondences(f"need at least 3 pairs, got {len(corrs)}")
    corrs.check_bounds(len(src), len(tar))
    trace = RefineTrace()
    T_init = config.init_transform
    current = T_init if T_init is not None else RigidTransform.identity()
    tau = config.gate
    for it in range(config.iterations):
        if it == 0:
            w = initial_weights(corrs, src, tar, config.sigma,
                                T_init if config.apply_init else None)
        else:
            w = reweight(corrs, src, tar, current, config.sigma, tau)
        try:
            T = weighted_svd_solve(corrs, src, tar, w, config.min_effective_weight)
        except (DegenerateWeights, DegenerateGeometry) as exc:
            trace.degenerate = True
            trace.reason = f"iteration {it + 1}: {exc}"
            break
        ps, pt = corrs.endpoints(src, tar)
        inliers = int(np.count_nonzero(_residuals(ps, pt, T) < tau))
        w = w.copy()
        w.setflags(write=False)
        trace.records.append(RefineRecord(T, objective(corrs, src, tar, w, T), float(w.sum()), inliers, w))
        previous, current = current, T
        if config.early_exit and it > 0 and _delta(previous, current) < config.early_exit_tol:
            break
    return current, trace
