"""Cross-layer attention forward passes.

SGIRA: minor-level points attend over primary-level points, with a squared
distance compensation added to the scaled dot-product scores, followed by a
skip residual. SAIGA: geometric self-attention over the minor level with a
distance penalty and a skip-derived bias, applied as a residual update.
Gated fusion combines two same-shape feature maps.

All parameters are fixed at construction from a seed; nothing here trains.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DimensionMismatch, EmptyAttentionContext, InvalidData
from .hpa import FeaturePyramid
from .rng import SplitMix64

NORM_EPS = 1e-5


def softmax_rows(scores: np.ndarray) -> np.ndarray:
    z = scores - scores.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def _uniform(rng: SplitMix64, shape, fan_in: int) -> np.ndarray:
    s = 1.0 / np.sqrt(fan_in)
    w = rng.uniform(int(np.prod(shape)), -s, s).reshape(shape)
    w.setflags(write=False)
    return w


def scaled_dot_scores(Q: np.ndarray, K: np.ndarray, d_a: int) -> np.ndarray:
    """``S_ij = Q_i . K_j / sqrt(d_a)``."""
    Q = np.atleast_2d(np.asarray(Q, dtype=np.float64))
    K = np.atleast_2d(np.asarray(K, dtype=np.float64))
    if Q.shape[1] != d_a or K.shape[1] != d_a:
        raise DimensionMismatch(f"Q {Q.shape} and K {K.shape} must have {d_a} columns")
    return (Q @ K.T) / np.sqrt(d_a)


def squared_distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    diff = np.asarray(a, dtype=np.float64)[:, None, :] - np.asarray(b, dtype=np.float64)[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def geometric_compensation(points_a: np.ndarray, points_b: np.ndarray, sigma_c: float) -> np.ndarray:
    """``R_ij = -|a_i - b_j|^2 / sigma_c^2``."""
    if sigma_c <= 0:
        raise ValueError("sigma_c must be positive")
    return -squared_distances(points_a, points_b) / sigma_c ** 2


@dataclass(frozen=True, eq=False)
class AttentionParams:
    head_count: int
    head_dim: int
    model_dim: int
    primary_dim: int
    skip_dim: int
    primary_proj: np.ndarray      # (primary_dim, model_dim)
    wq: np.ndarray                # (H, model_dim, head_dim), cross-attention
    wk: np.ndarray
    wv: np.ndarray
    merge: np.ndarray             # (H * head_dim, model_dim)
    skip_proj: np.ndarray         # (skip_dim, model_dim)
    wq_geo: np.ndarray
    wk_geo: np.ndarray
    wv_geo: np.ndarray
    merge_geo: np.ndarray
    alpha: float = 1.0
    theta: float = 1.0
    gamma: float = 1.0
    sigma_comp: float = 0.25

    def __post_init__(self):
        if self.head_count < 1 or self.head_dim < 1:
            raise InvalidData("head_count and head_dim must be >= 1")
        if self.sigma_comp <= 0:
            raise InvalidData("sigma_comp must be positive")
        if self.alpha < 0:
            raise InvalidData("alpha must be non-negative")

    @classmethod
    def from_seed(cls, seed: int = 0, head_count: int = 4, head_dim: int = 64,
                  model_dim: int = 128, primary_dim: int = 256, skip_dim: Optional[int] = None,
                  alpha: float = 1.0, theta: float = 1.0, gamma: float = 1.0,
                  sigma_comp: float = 0.25) -> "AttentionParams":
        skip_dim = model_dim if skip_dim is None else skip_dim
        rng = SplitMix64(seed).fork("hcla")
        H, d, m = head_count, head_dim, model_dim

        def mat(tag, shape, fan_in):
            return _uniform(rng.fork(tag), shape, fan_in)

        return cls(
            head_count=H, head_dim=d, model_dim=m, primary_dim=primary_dim, skip_dim=skip_dim,
            primary_proj=mat("primary_proj", (primary_dim, m), primary_dim),
            wq=mat("wq", (H, m, d), m), wk=mat("wk", (H, m, d), m), wv=mat("wv", (H, m, d), m),
            merge=mat("merge", (H * d, m), H * d),
            skip_proj=mat("skip_proj", (skip_dim, m), skip_dim),
            wq_geo=mat("wq_geo", (H, m, d), m), wk_geo=mat("wk_geo", (H, m, d), m),
            wv_geo=mat("wv_geo", (H, m, d), m),
            merge_geo=mat("merge_geo", (H * d, m), H * d),
            alpha=alpha, theta=theta, gamma=gamma, sigma_comp=sigma_comp,
        )

    def replace(self, **changes) -> "AttentionParams":
        fields = {k: getattr(self, k) for k in self.__dataclass_fields__}
        fields.update(changes)
        return AttentionParams(**fields)


@dataclass(frozen=True, eq=False)
class SkipBundle:
    F_skip: np.ndarray
    A_skip: np.ndarray

    def __post_init__(self):
        F = np.atleast_2d(np.asarray(self.F_skip, dtype=np.float64))
        A = np.atleast_2d(np.asarray(self.A_skip, dtype=np.float64))
        if A.shape != (F.shape[0], F.shape[0]):
            raise DimensionMismatch(f"A_skip {A.shape} must be square with side {F.shape[0]}")
        if not np.all(np.isfinite(A)):
            raise InvalidData("A_skip entries must be finite")
        object.__setattr__(self, "F_skip", F)
        object.__setattr__(self, "A_skip", A)


def cosine_affinity(F: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(F, axis=1, keepdims=True)
    U = F / np.where(norms > 0, norms, 1.0)
    return U @ U.T


@dataclass(frozen=True, eq=False)
class FusionParams:
    w_p: np.ndarray
    b_p: np.ndarray
    w_q: np.ndarray
    b_q: np.ndarray
    w_res: np.ndarray
    b_res: np.ndarray

    @classmethod
    def from_seed(cls, dim: int, seed: int = 0, shared: bool = False) -> "FusionParams":
        rng = SplitMix64(seed).fork("fusion")
        w_p = _uniform(rng.fork("w_p"), (dim, dim), dim)
        b_p = _uniform(rng.fork("b_p"), (dim,), dim)
        if shared:
            w_q, b_q = w_p, b_p
        else:
            w_q = _uniform(rng.fork("w_q"), (dim, dim), dim)
            b_q = _uniform(rng.fork("b_q"), (dim,), dim)
        return cls(w_p, b_p, w_q, b_q,
                   _uniform(rng.fork("w_res"), (dim, dim), dim),
                   _uniform(rng.fork("b_res"), (dim,), dim))


def normalize_columns(F: np.ndarray, eps: float = NORM_EPS) -> np.ndarray:
    mu = F.mean(axis=0, keepdims=True)
    var = F.var(axis=0, keepdims=True)
    return (F - mu) / np.sqrt(var + eps)


def gated_fusion(F_p: np.ndarray, F_q: np.ndarray, params: FusionParams) -> np.ndarray:
    """Normalize, transform by two parallel linear branches, gate, then residual-adjust.

    With branch outputs ``B_p`` and ``B_q``: ``g = sigmoid(B_p + B_q)``,
    ``F_t = g * B_p + (1 - g) * B_q`` and the output is ``F_t + F_t @ w_res + b_res``.
    """
    F_p = np.asarray(F_p, dtype=np.float64)
    F_q = np.asarray(F_q, dtype=np.float64)
    if F_p.shape != F_q.shape:
        raise DimensionMismatch(f"fusion inputs differ in shape: {F_p.shape} vs {F_q.shape}")
    if F_p.shape[1] != params.w_p.shape[0]:
        raise DimensionMismatch("fusion parameters do not match the feature width")
    branch_p = normalize_columns(F_p) @ params.w_p + params.b_p
    branch_q = normalize_columns(F_q) @ params.w_q + params.b_q
    g = sigmoid(branch_p + branch_q)
    F_t = g * branch_p + (1.0 - g) * branch_q
    return F_t + F_t @ params.w_res + params.b_res


def _check_coords(F: np.ndarray, coords: np.ndarray, what: str) -> None:
    if F.shape[0] != coords.shape[0]:
        raise DimensionMismatch(f"{what}: {F.shape[0]} feature rows vs {coords.shape[0]} coordinates")


def sgira_attention(F_minor, minor_coords, F_primary, primary_coords,
                    params: AttentionParams) -> np.ndarray:
    """Per-head cross-attention maps, shape (H, n_minor, n_primary); rows sum to 1."""
    F_minor = np.atleast_2d(np.asarray(F_minor, dtype=np.float64))
    F_primary = np.asarray(F_primary, dtype=np.float64)
    minor_coords = np.asarray(minor_coords, dtype=np.float64).reshape(-1, 3)
    primary_coords = np.asarray(primary_coords, dtype=np.float64).reshape(-1, 3)
    if F_primary.size == 0 or primary_coords.shape[0] == 0:
        raise EmptyAttentionContext("primary level has no points")
    F_primary = np.atleast_2d(F_primary)
    _check_coords(F_minor, minor_coords, "minor")
    _check_coords(F_primary, primary_coords, "primary")
    if F_minor.shape[1] != params.model_dim or F_primary.shape[1] != params.primary_dim:
        raise DimensionMismatch("feature widths do not match attention parameters")
    P = F_primary @ params.primary_proj
    comp = geometric_compensation(minor_coords, primary_coords, params.sigma_comp)
    maps = []
    for h in range(params.head_count):
        Q = F_minor @ params.wq[h]
        K = P @ params.wk[h]
        maps.append(softmax_rows(scaled_dot_scores(Q, K, params.head_dim) + comp))
    return np.stack(maps)


def sgira_forward(F_minor, minor_coords, F_primary, primary_coords, skip: SkipBundle,
                  params: AttentionParams) -> tuple[np.ndarray, np.ndarray]:
    """Cross-resolution attention; returns ``(F_minor_pp, F_minor_p)``.

    ``F_minor_p`` is the merged multi-head aggregation of projected primary
    values; ``F_minor_pp = F_minor_p + gamma * (F_skip @ skip_proj)``.
    """
    F_minor = np.atleast_2d(np.asarray(F_minor, dtype=np.float64))
    A = sgira_attention(F_minor, minor_coords, F_primary, primary_coords, params)
    if skip.F_skip.shape[0] != F_minor.shape[0]:
        raise DimensionMismatch("F_skip rows must match the minor point count")
    if skip.F_skip.shape[1] != params.skip_dim:
        raise DimensionMismatch("F_skip width does not match skip projection")
    P = np.atleast_2d(np.asarray(F_primary, dtype=np.float64)) @ params.primary_proj
    heads = [A[h] @ (P @ params.wv[h]) for h in range(params.head_count)]
    F_plus = np.concatenate(heads, axis=1) @ params.merge
    if params.gamma == 0:
        return F_plus.copy(), F_plus
    return F_plus + params.gamma * (skip.F_skip @ params.skip_proj), F_plus


def saiga_attention(F_minor_plus, minor_coords, skip: SkipBundle,
                    params: AttentionParams) -> np.ndarray:
    """Per-head self-attention maps, shape (H, n_minor, n_minor)."""
    F = np.atleast_2d(np.asarray(F_minor_plus, dtype=np.float64))
    coords = np.asarray(minor_coords, dtype=np.float64).reshape(-1, 3)
    _check_coords(F, coords, "minor")
    if skip.A_skip.shape[0] != F.shape[0]:
        raise DimensionMismatch("A_skip side must equal the minor point count")
    if F.shape[1] != params.model_dim:
        raise DimensionMismatch("feature width does not match attention parameters")
    bias = -params.alpha * squared_distances(coords, coords) + params.theta * skip.A_skip
    maps = []
    for h in range(params.head_count):
        S = scaled_dot_scores(F @ params.wq_geo[h], F @ params.wk_geo[h], params.head_dim)
        maps.append(softmax_rows(S + bias))
    return np.stack(maps)


def saiga_forward(F_minor_plus, minor_coords, skip: SkipBundle,
                  params: AttentionParams) -> np.ndarray:
    """Geometric self-attention with residual update; output shape equals input shape."""
    F = np.atleast_2d(np.asarray(F_minor_plus, dtype=np.float64))
    A = saiga_attention(F, minor_coords, skip, params)
    heads = [A[h] @ (F @ params.wv_geo[h]) for h in range(params.head_count)]
    return F + np.concatenate(heads, axis=1) @ params.merge_geo


@dataclass(frozen=True, eq=False)
class SkipParams:
    """Projection of pooled ordinary features plus the fusion that yields F_skip."""

    ordinary_proj: np.ndarray   # (ordinary_dim, minor_dim)
    fusion: FusionParams

    @classmethod
    def from_seed(cls, ordinary_dim: int = 64, minor_dim: int = 128, seed: int = 0) -> "SkipParams":
        rng = SplitMix64(seed).fork("skip")
        return cls(_uniform(rng.fork("ordinary_proj"), (ordinary_dim, minor_dim), ordinary_dim),
                   FusionParams.from_seed(minor_dim, rng.fork("fusion").seed))


def pool_to_parents(features: np.ndarray, parent_indices: np.ndarray, n_parents: int) -> np.ndarray:
    """Mean of child feature rows per parent; parents without children get zeros."""
    out = np.zeros((n_parents, features.shape[1]))
    np.add.at(out, parent_indices, features)
    counts = np.bincount(parent_indices, minlength=n_parents).astype(np.float64)
    return out / np.where(counts > 0, counts, 1.0)[:, None]


def build_skip_bundle(pyramid: FeaturePyramid, params: SkipParams) -> SkipBundle:
    """Skip features on the minor level from the ordinary and minor pyramid features.

    Ordinary features are mean-pooled into their minor parents, projected to
    the minor width and gated-fused with the minor features. The skip bias
    is the cosine affinity between skip feature rows.
    """
    ordl, minl = pyramid.ordinary, pyramid.minor
    pooled = pool_to_parents(ordl.features, ordl.parent_indices, len(minl.cloud))
    F_skip = gated_fusion(pooled @ params.ordinary_proj, minl.features, params.fusion)
    return SkipBundle(F_skip, cosine_affinity(F_skip))


@dataclass
class HclaConfig:
    head_count: int = 4
    head_dim: int = 64
    alpha: Optional[float] = None       # default 1 / (minor radius)^2
    theta: float = 1.0
    gamma: float = 1.0
    sigma_comp: Optional[float] = None  # default primary radius
    stack: int = 1


@dataclass(frozen=True, eq=False)
class HclaModel:
    attention: AttentionParams
    skip: SkipParams
    stack: int = 1

    @classmethod
    def from_seed(cls, pyramid_dims, minor_radius: float, primary_radius: float,
                  config: Optional[HclaConfig] = None, seed: int = 0) -> "HclaModel":
        config = config or HclaConfig()
        d_ord, d_min, d_pri = pyramid_dims
        alpha = config.alpha if config.alpha is not None else 1.0 / minor_radius ** 2
        sigma_c = config.sigma_comp if config.sigma_comp is not None else primary_radius
        att = AttentionParams.from_seed(seed, config.head_count, config.head_dim, d_min, d_pri,
                                        d_min, alpha, config.theta, config.gamma, sigma_c)
        return cls(att, SkipParams.from_seed(d_ord, d_min, seed), config.stack)

    def forward(self, pyramid: FeaturePyramid) -> np.ndarray:
        """Minor-level features after ``stack`` rounds of SGIRA followed by SAIGA."""
        skip = build_skip_bundle(pyramid, self.skip)
        minor, primary = pyramid.minor, pyramid.primary
        F = minor.features
        for _ in range(self.stack):
            F_pp, _ = sgira_forward(F, minor.cloud.points, primary.features,
                                    primary.cloud.points, skip, self.attention)
            F = saiga_forward(F_pp, minor.cloud.points, skip, self.attention)
        return F
