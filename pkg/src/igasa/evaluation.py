"""Registration metrics and forward-only loss evaluators."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .core import CorrespondenceSet, PointCloud, RigidTransform, is_rotation, rotation_angle
from .errors import DimensionMismatch, EmptyInput, InvalidProbability, InvalidRotation

LOG_FLOOR = 1e-12


# ---------------------------------------------------------------- metrics

@dataclass
class MetricThresholds:
    inlier_radius: float = 0.1
    fmr_min_ir: float = 0.05
    rr_rmse_max: float = 0.2
    rre_max: float = 15.0
    rte_max: float = 0.3

    def __post_init__(self):
        for k, v in vars(self).items():
            if not v > 0:
                raise ValueError(f"{k} must be positive")


def _rotation(R) -> np.ndarray:
    R = np.asarray(R.rotation if isinstance(R, RigidTransform) else R, dtype=np.float64)
    if not is_rotation(R, tol=1e-6):
        raise InvalidRotation("expected a proper rotation matrix")
    return R


def rre(R_est, R_gt) -> float:
    """Relative rotation error in degrees."""
    A, B = _rotation(R_est), _rotation(R_gt)
    return float(np.degrees(rotation_angle(B.T @ A)))


def rte(t_est, t_gt) -> float:
    if isinstance(t_est, RigidTransform):
        t_est = t_est.translation
    if isinstance(t_gt, RigidTransform):
        t_gt = t_gt.translation
    return float(np.linalg.norm(np.asarray(t_est, dtype=np.float64) - np.asarray(t_gt, dtype=np.float64)))


def correspondence_residuals(corrs: CorrespondenceSet, src: PointCloud, tar: PointCloud,
                             T: RigidTransform) -> np.ndarray:
    ps, pt = corrs.endpoints(src, tar)
    d = T.apply(ps) - pt
    return np.sqrt(np.einsum("ij,ij->i", d, d))


def inlier_ratio(corrs: CorrespondenceSet, src: PointCloud, tar: PointCloud,
                 T_gt: RigidTransform, radius: float = 0.1) -> float:
    if len(corrs) == 0:
        raise EmptyInput("inlier ratio of an empty correspondence set")
    r = correspondence_residuals(corrs, src, tar, T_gt)
    return float(np.count_nonzero(r < radius) / r.shape[0])


def feature_matching_recall(irs: Sequence[float], min_ir: float = 0.05) -> float:
    irs = np.asarray(list(irs), dtype=np.float64)
    if irs.size == 0:
        raise EmptyInput("no inlier ratios given")
    return float(np.count_nonzero(irs > min_ir) / irs.size)


def registration_passes(result, thresholds: MetricThresholds) -> bool:
    """``result`` is an (RRE, RTE) pair or a scalar RMSE."""
    if np.ndim(result) == 0:
        return float(result) <= thresholds.rr_rmse_max
    rot_err, trans_err = result
    return rot_err <= thresholds.rre_max and trans_err <= thresholds.rte_max


def registration_recall(results: Iterable, thresholds: Optional[MetricThresholds] = None) -> float:
    thresholds = thresholds or MetricThresholds()
    results = list(results)
    if not results:
        raise EmptyInput("no registration results given")
    return sum(registration_passes(r, thresholds) for r in results) / len(results)


def rmse_under(T_est: RigidTransform, T_gt: RigidTransform, points: np.ndarray) -> float:
    d = T_est.apply(points) - T_gt.apply(points)
    return float(np.sqrt(np.mean(np.einsum("ij,ij->i", d, d))))


# ----------------------------------------------------------------- losses

@dataclass
class LossWeights:
    lambda_p: float = 1.0
    lambda_c: float = 1.0
    lambda_f: float = 1.0
    lambda_k: float = 1.0
    lambda_i: float = 1.0
    lambda_t: float = 1.0
    lambda_r: float = 1.0

    def __post_init__(self):
        for k, v in vars(self).items():
            if v < 0:
                raise ValueError(f"{k} must be non-negative")


def _probabilities(p, name: str = "probability", open_upper: bool = False) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    if np.any(~np.isfinite(p)) or np.any(p < 0) or np.any(p > 1):
        raise InvalidProbability(f"{name} outside [0, 1]")
    upper = 1.0 - LOG_FLOOR if open_upper else 1.0
    return np.clip(p, LOG_FLOOR, upper)


def point_matching_loss(layer_probs: Sequence[np.ndarray], weights: np.ndarray) -> float:
    """``-(1/L) sum_l sum_pairs w * log P^(l)`` over the L supervised layers."""
    if len(layer_probs) == 0:
        raise EmptyInput("at least one layer of probabilities required")
    w = np.asarray(weights, dtype=np.float64).reshape(-1)
    total = 0.0
    for P in layer_probs:
        P = _probabilities(P).reshape(-1)
        if P.shape != w.shape:
            raise DimensionMismatch("one probability per weighted pair required")
        total += float(np.sum(w * np.log(P)))
    return 0.0 - total / len(layer_probs)


def correspondence_loss(probs: np.ndarray, overlap: np.ndarray,
                        unmatched_src: Sequence[float] = (), unmatched_tar: Sequence[float] = (),
                        sign: str = "as-printed") -> float:
    """Weighted cross-entropy on final matching probabilities plus overlap terms.

    The target-side unmatched term enters with ``+`` when ``sign`` is
    ``"as-printed"`` and with ``-`` when ``sign`` is ``"nll"``. Empty
    unmatched sets contribute 0.
    """
    if sign not in ("as-printed", "nll"):
        raise ValueError(f"unknown sign convention {sign!r}")
    P = _probabilities(probs).reshape(-1)
    om = np.asarray(overlap, dtype=np.float64).reshape(-1)
    if P.shape != om.shape:
        raise DimensionMismatch("one probability per overlap weight required")
    loss = 0.0
    if om.sum() > 0:
        loss -= float(np.sum(om * np.log(P)) / om.sum())
    ux = np.asarray(unmatched_src, dtype=np.float64).reshape(-1)
    uy = np.asarray(unmatched_tar, dtype=np.float64).reshape(-1)
    if ux.size:
        loss -= float(np.mean(np.log(1.0 - _probabilities(ux, open_upper=True))))
    if uy.size:
        term = float(np.mean(np.log(1.0 - _probabilities(uy, open_upper=True))))
        loss += term if sign == "as-printed" else -term
    return loss


def matching_loss(layer_probs: Sequence[np.ndarray], overlap: np.ndarray,
                  unmatched_src: Sequence[float] = (), unmatched_tar: Sequence[float] = (),
                  weights: Optional[LossWeights] = None, sign: str = "as-printed") -> float:
    """``lambda_p * L_p + lambda_c * L_c``; the last layer serves as the final probabilities."""
    weights = weights or LossWeights()
    L_p = point_matching_loss(layer_probs, overlap)
    L_c = correspondence_loss(layer_probs[-1], overlap, unmatched_src, unmatched_tar, sign)
    return weights.lambda_p * L_p + weights.lambda_c * L_c


def infonce_loss(anchors: np.ndarray, positives: np.ndarray, negatives: Sequence[np.ndarray],
                 W: np.ndarray) -> float:
    """Mean over anchors of ``-log softmax`` of the positive bilinear similarity."""
    A = np.atleast_2d(np.asarray(anchors, dtype=np.float64))
    Pos = np.atleast_2d(np.asarray(positives, dtype=np.float64))
    W = np.asarray(W, dtype=np.float64)
    if A.shape != Pos.shape or len(negatives) != A.shape[0]:
        raise DimensionMismatch("anchors, positives and negative sets must align")
    if A.shape[0] == 0:
        raise EmptyInput("no keypoint pairs")
    losses = []
    for a, p, neg in zip(A, Pos, negatives):
        s_pos = a @ W @ p
        neg = np.asarray(neg, dtype=np.float64).reshape(-1, A.shape[1])
        s = np.concatenate([[s_pos], neg @ W.T @ a])
        m = s.max()
        losses.append(m + np.log(np.sum(np.exp(s - m))) - s_pos)
    return float(np.mean(losses))


def keypoint_residuals(x: np.ndarray, y_hat: np.ndarray, T: RigidTransform) -> np.ndarray:
    d = T.apply(np.atleast_2d(x)) - np.atleast_2d(y_hat)
    return np.sqrt(np.einsum("ij,ij->i", d, d))


def keypoint_position_loss(x: np.ndarray, y_hat: np.ndarray, T: RigidTransform) -> float:
    r = keypoint_residuals(x, y_hat, T)
    return float(np.mean(r * r))


def confidence_loss(confidences: np.ndarray, labels: np.ndarray) -> float:
    s = _probabilities(confidences, "confidence", open_upper=True).reshape(-1)
    y = np.asarray(labels, dtype=np.float64).reshape(-1)
    if s.shape != y.shape:
        raise DimensionMismatch("one label per confidence required")
    return float(-np.mean(y * np.log(s) + (1.0 - y) * np.log(1.0 - s)))


def keypoint_losses(anchors, positives, negatives, W, x, y_hat, confidences,
                    T_gt: RigidTransform, tau_conf: float,
                    weights: Optional[LossWeights] = None) -> float:
    """``lambda_f * L_f + lambda_k * L_k + lambda_i * L_i``.

    Confidence labels are 1 where the predicted correspondence lies within
    ``tau_conf`` of the ground-truth position.
    """
    weights = weights or LossWeights()
    L_f = infonce_loss(anchors, positives, negatives, W)
    L_k = keypoint_position_loss(x, y_hat, T_gt)
    labels = (keypoint_residuals(x, y_hat, T_gt) <= tau_conf).astype(np.float64)
    L_i = confidence_loss(confidences, labels)
    return weights.lambda_f * L_f + weights.lambda_k * L_k + weights.lambda_i * L_i


def dense_loss(T_est: RigidTransform, T_gt: RigidTransform, lambda_t: float = 1.0,
               lambda_r: float = 1.0) -> float:
    """``lambda_t |t_est - t_gt|^2 + lambda_r |R_est^T R_gt - I|_F^2``.

    The rotation term is evaluated as ``|R_gt - R_est|_F^2``, equal for
    orthogonal ``R_est`` and exactly zero when the rotations coincide.
    """
    dt = T_est.translation - T_gt.translation
    M = T_gt.rotation - T_est.rotation
    return float(lambda_t * dt @ dt + lambda_r * np.sum(M * M))


def total_loss(L_mat: float, L_key: float, L_den: float) -> float:
    return float(L_mat + L_key + L_den)
