"""Multi-scale feature pyramid: grid subsampling, radius neighborhoods and
kernel-point convolution over three resolution levels (ordinary, minor, primary).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import sparse
from scipy.spatial import cKDTree

from .core import PointCloud, axis_angle_matrix
from .errors import DegeneratePyramid, DimensionMismatch, EmptyInput, InvalidData
from .rng import SplitMix64

LEVEL_NAMES = ("ordinary", "minor", "primary")


def grid_subsample(cloud: PointCloud, voxel: float) -> tuple[PointCloud, np.ndarray]:
    """Collapse every occupied voxel to the centroid of its members.

    Voxels are the cells ``floor(p / voxel)`` of a grid anchored at the origin.
    Output points are ordered by voxel key (lexicographic on x, y, z cell).
    Returns the subsampled cloud and, for every input point, the index of the
    output point it was merged into.
    """
    if voxel <= 0:
        raise ValueError("voxel size must be positive")
    if len(cloud) == 0:
        raise EmptyInput("cannot subsample an empty cloud")
    keys = np.floor(cloud.points / voxel).astype(np.int64)
    _, assignment, counts = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
    assignment = assignment.reshape(-1)
    m = counts.shape[0]
    sums = np.zeros((m, 3))
    np.add.at(sums, assignment, cloud.points)
    centroids = sums / counts[:, None]
    feats = None
    if cloud.features is not None:
        fsum = np.zeros((m, cloud.features.shape[1]))
        np.add.at(fsum, assignment, cloud.features)
        feats = fsum / counts[:, None]
    return PointCloud(centroids, feats), assignment


def radius_neighbors(queries: PointCloud, support: PointCloud, radius: float) -> list[np.ndarray]:
    """Support indices within ``radius`` of each query, nearest first, ties by index."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    q = queries.points
    s = support.points
    if len(q) == 0:
        return []
    if len(s) == 0:
        return [np.zeros(0, dtype=np.int64) for _ in range(len(q))]
    tree = cKDTree(s)
    # widen slightly, then filter on the exact distance below
    candidates = tree.query_ball_point(q, radius * (1.0 + 1e-9) + 1e-15)
    out = []
    for i, cand in enumerate(candidates):
        idx = np.asarray(cand, dtype=np.int64)
        d = np.linalg.norm(s[idx] - q[i], axis=1)
        keep = d <= radius
        idx, d = idx[keep], d[keep]
        order = np.lexsort((idx, d))
        out.append(idx[order])
    return out


def _flatten(neighbors: Sequence[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    counts = np.array([len(n) for n in neighbors], dtype=np.int64)
    rows = np.repeat(np.arange(len(neighbors), dtype=np.int64), counts)
    cols = np.concatenate(neighbors) if len(neighbors) else np.zeros(0, dtype=np.int64)
    return rows, cols.astype(np.int64)


@dataclass(frozen=True, eq=False)
class KernelDisposition:
    kernel_points: np.ndarray
    influence: float
    radius: float

    def __post_init__(self):
        kp = np.array(self.kernel_points, dtype=np.float64).reshape(-1, 3)
        if kp.shape[0] < 1:
            raise InvalidData("kernel needs at least one point")
        if self.influence <= 0 or self.radius <= 0:
            raise InvalidData("kernel influence and radius must be positive")
        if np.any(np.linalg.norm(kp, axis=1) > self.radius * (1 + 1e-12)):
            raise InvalidData("kernel point outside the kernel sphere")
        kp.setflags(write=False)
        object.__setattr__(self, "kernel_points", kp)

    @property
    def size(self) -> int:
        return self.kernel_points.shape[0]


def fibonacci_kernel(radius: float, count: int = 15, influence: Optional[float] = None,
                     shell: float = 0.66, seed: int = 0) -> KernelDisposition:
    """One kernel point at the origin plus ``count - 1`` on a sphere of ``shell * radius``.

    The shell points follow a Fibonacci lattice given a seeded random rotation.
    ``influence`` defaults to ``1.2 * radius / 2.5``.
    """
    if count < 1:
        raise InvalidData("kernel count must be >= 1")
    if influence is None:
        influence = 1.2 * radius / 2.5
    pts = [np.zeros(3)]
    m = count - 1
    if m:
        i = np.arange(m) + 0.5
        z = 1.0 - 2.0 * i / m
        r = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
        phi = np.pi * (3.0 - np.sqrt(5.0)) * i
        lattice = np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)
        rng = SplitMix64(seed)
        axis = rng.unit_vectors(1)[0]
        angle = rng.uniform(1, 0.0, 2 * np.pi)[0]
        lattice = lattice @ axis_angle_matrix(axis, angle).T
        pts.extend(shell * radius * lattice)
    return KernelDisposition(np.array(pts), influence, radius)


def kernel_correlation(offset, kernel: KernelDisposition) -> np.ndarray:
    """Linear correlation ``max(0, 1 - |offset - x_k| / sigma)`` for every kernel point.

    Accepts a single 3-vector (returns shape (K,)) or an (m, 3) array
    (returns shape (m, K)).
    """
    off = np.asarray(offset, dtype=np.float64)
    d = np.linalg.norm(off[..., None, :] - kernel.kernel_points, axis=-1)
    return np.maximum(0.0, 1.0 - d / kernel.influence)


def kpconv_aggregate(queries: PointCloud, support: PointCloud, support_features: np.ndarray,
                     kernel: KernelDisposition, kernel_weights: np.ndarray, radius: float,
                     neighbors: Optional[Sequence[np.ndarray]] = None) -> np.ndarray:
    """Kernel-point convolution.

    ``kernel_weights`` has shape (K, d_in, d_out). For query ``p_i`` the output is
    ``sum_j sum_k h_k(p_j - p_i) * f_j @ W_k`` over the support points within
    ``radius``; queries with no neighbors get zeros.
    """
    F = np.asarray(support_features, dtype=np.float64)
    if F.ndim == 1:
        F = F.reshape(-1, 1)
    W = np.asarray(kernel_weights, dtype=np.float64)
    if F.shape[0] != len(support):
        raise DimensionMismatch(f"{F.shape[0]} feature rows for {len(support)} support points")
    if W.ndim != 3 or W.shape[0] != kernel.size or W.shape[1] != F.shape[1]:
        raise DimensionMismatch(
            f"kernel weights {W.shape} incompatible with K={kernel.size}, d_in={F.shape[1]}")
    K, d_in, d_out = W.shape
    nq = len(queries)
    if neighbors is None:
        neighbors = radius_neighbors(queries, support, radius)
    rows, cols = _flatten(neighbors)
    if rows.size == 0:
        return np.zeros((nq, d_out))
    offsets = support.points[cols] - queries.points[rows]
    h = kernel_correlation(offsets, kernel)  # (m, K)
    # one sparse row per (query, kernel point)
    H = sparse.csr_matrix(
        (h.reshape(-1), ((rows[:, None] * K + np.arange(K)).reshape(-1), np.repeat(cols, K))),
        shape=(nq * K, len(support)),
    )
    G = np.asarray(H @ F).reshape(nq, K * d_in)
    return G @ W.reshape(K * d_in, d_out)


@dataclass
class PyramidConfig:
    base_voxel: float = 0.025
    level_dims: tuple[int, int, int] = (64, 128, 256)
    level_voxel_multipliers: tuple[float, float, float] = (1.0, 2.0, 4.0)
    level_radius_multipliers: tuple[float, float, float] = (2.5, 5.0, 10.0)
    kernel_count: int = 15
    influence_factor: float = 1.2   # sigma = influence_factor * R_in / 2.5
    kernel_shell: float = 0.66
    input_dim: int = 1
    leaky_slope: float = 0.1

    def __post_init__(self):
        if self.base_voxel <= 0:
            raise ValueError("base_voxel must be positive")
        dims = tuple(int(d) for d in self.level_dims)
        if len(dims) != 3 or min(dims) < 1 or not (dims[0] < dims[1] < dims[2]):
            raise ValueError("level_dims must be three strictly increasing positive integers")
        self.level_dims = dims
        for name in ("level_voxel_multipliers", "level_radius_multipliers"):
            m = tuple(float(v) for v in getattr(self, name))
            if len(m) != 3 or min(m) <= 0 or not (m[0] < m[1] < m[2]):
                raise ValueError(f"{name} must be positive and strictly increasing")
            setattr(self, name, m)
        if self.kernel_count < 1:
            raise ValueError("kernel_count must be >= 1")

    def voxel(self, level: int) -> float:
        return self.base_voxel * self.level_voxel_multipliers[level]

    def radius(self, level: int) -> float:
        return self.base_voxel * self.level_radius_multipliers[level]


@dataclass(frozen=True, eq=False)
class PyramidParams:
    """Fixed kernels and per-kernel linear maps for the three levels."""

    kernels: tuple[KernelDisposition, ...]
    weights: tuple[np.ndarray, ...]

    @classmethod
    def from_seed(cls, config: PyramidConfig, seed: int = 0) -> "PyramidParams":
        root = SplitMix64(seed).fork("hpa")
        kernels, weights = [], []
        d_in = config.input_dim
        for lvl in range(3):
            R = config.radius(lvl)
            kernels.append(fibonacci_kernel(
                R, config.kernel_count, config.influence_factor * R / 2.5,
                config.kernel_shell, seed=root.fork(f"kernel{lvl}").seed))
            d_out = config.level_dims[lvl]
            K = config.kernel_count
            scale = 1.0 / np.sqrt(K * d_in)
            w = root.fork(f"weights{lvl}").uniform(K * d_in * d_out, -scale, scale)
            w = w.reshape(K, d_in, d_out)
            w.setflags(write=False)
            weights.append(w)
            d_in = d_out
        return cls(tuple(kernels), tuple(weights))


@dataclass(frozen=True, eq=False)
class PyramidLevel:
    name: str
    cloud: PointCloud
    features: np.ndarray
    # index of the containing point one level coarser; None at the primary level
    parent_indices: Optional[np.ndarray]
    voxel: float
    radius: float


@dataclass(frozen=True, eq=False)
class FeaturePyramid:
    levels: tuple[PyramidLevel, ...] = field(default_factory=tuple)

    def __getitem__(self, name: str) -> PyramidLevel:
        for lvl in self.levels:
            if lvl.name == name:
                return lvl
        raise KeyError(name)

    @property
    def ordinary(self) -> PyramidLevel:
        return self.levels[0]

    @property
    def minor(self) -> PyramidLevel:
        return self.levels[1]

    @property
    def primary(self) -> PyramidLevel:
        return self.levels[2]


def _leaky(x: np.ndarray, slope: float) -> np.ndarray:
    return np.where(x >= 0, x, slope * x)


def build_pyramid(cloud: PointCloud, config: Optional[PyramidConfig] = None,
                  params: Optional[PyramidParams] = None, seed: int = 0) -> FeaturePyramid:
    """Subsample ``cloud`` at three voxel sizes and compute per-level KPConv features.

    Each level subsamples the previous one, so ``parent_indices`` are exactly
    the grid-subsample assignments. The ordinary level convolves a constant
    one-feature over itself; the minor and primary levels convolve the
    previous level's features. A leaky ReLU follows each convolution.
    """
    config = config or PyramidConfig()
    params = params or PyramidParams.from_seed(config, seed)
    clouds, assignments = [], []
    prev = PointCloud(cloud.points)
    for lvl, name in enumerate(LEVEL_NAMES):
        if len(prev) == 0:
            raise DegeneratePyramid(name)
        sub, assign = grid_subsample(prev, config.voxel(lvl))
        if len(sub) == 0:
            raise DegeneratePyramid(name)
        clouds.append(sub)
        assignments.append(assign)
        prev = sub

    feats_in = np.ones((len(clouds[0]), config.input_dim))
    support = clouds[0]
    levels = []
    for lvl, name in enumerate(LEVEL_NAMES):
        R = config.radius(lvl)
        f = kpconv_aggregate(clouds[lvl], support, feats_in, params.kernels[lvl],
                             params.weights[lvl], R)
        f = _leaky(f, config.leaky_slope)
        f.setflags(write=False)
        parents = assignments[lvl + 1] if lvl + 1 < 3 else None
        if parents is not None:
            parents = parents.copy()
            parents.setflags(write=False)
        levels.append(PyramidLevel(name, clouds[lvl], f, parents, config.voxel(lvl), R))
        feats_in, support = f, clouds[lvl]
    return FeaturePyramid(tuple(levels))
