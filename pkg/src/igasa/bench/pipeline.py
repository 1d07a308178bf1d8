"""End-to-end registration of a cloud pair."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np

from ..core import CorrespondenceSet, PointCloud, RigidTransform
from ..errors import IgasaError, InvalidData
from ..evaluation import MetricThresholds, inlier_ratio, rre, rte
from ..hcla import HclaConfig, HclaModel
from ..hpa import PyramidConfig, PyramidParams, build_pyramid
from ..igar import RefineConfig, RefineTrace, refine
from ..matcher import MatchConfig, superpoint_match
from . import config as cfg


@dataclass
class PipelineConfig:
    pyramid: PyramidConfig = field(default_factory=PyramidConfig)
    hcla: HclaConfig = field(default_factory=HclaConfig)
    match: MatchConfig = field(default_factory=MatchConfig)
    refine: RefineConfig = field(default_factory=RefineConfig)
    thresholds: MetricThresholds = field(default_factory=MetricThresholds)
    seed: int = 0
    corrs: str = "features"   # features | oracle

    def __post_init__(self):
        if self.corrs not in ("features", "oracle"):
            raise InvalidData(f"unknown correspondence mode {self.corrs!r}")

    @classmethod
    def default(cls, base_voxel: float = 0.025) -> "PipelineConfig":
        """Defaults tied to the base voxel: score scale 2 * voxel."""
        return cls(pyramid=PyramidConfig(base_voxel=base_voxel),
                   match=MatchConfig(sigma_score=2 * base_voxel))

    @classmethod
    def from_ini(cls, path) -> "PipelineConfig":
        cp = cfg.read_ini(path)
        sec = lambda name: cp[name] if cp.has_section(name) else None  # noqa: E731
        pipe = sec("pipeline")
        seed = int(pipe.get("seed", "0")) if pipe is not None else 0
        corrs = pipe.get("corrs", "features").strip() if pipe is not None else "features"
        pyramid = cfg.build(PyramidConfig, sec("pyramid"))
        match_sec = sec("match")
        match_kwargs = {}
        if match_sec is None or "sigma_score" not in match_sec:
            match_kwargs["sigma_score"] = 2 * pyramid.base_voxel
        return cls(
            pyramid=pyramid,
            hcla=cfg.build(HclaConfig, sec("hcla")),
            match=cfg.build(MatchConfig, match_sec, skip=("initial_transform",), **match_kwargs),
            refine=cfg.build(RefineConfig, sec("refine"), skip=("init_transform",)),
            thresholds=cfg.build(MetricThresholds, sec("thresholds")),
            seed=seed, corrs=corrs,
        )


@dataclass
class RegistrationReport:
    status: str                          # ok | degenerate | failed
    transform: RigidTransform
    trace: RefineTrace
    correspondences: Optional[CorrespondenceSet] = None
    reason: Optional[str] = None
    metrics: dict[str, float] = field(default_factory=dict)
    level_counts: dict[str, list[int]] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def to_dict(self) -> dict[str, Any]:
        T = self.transform
        return {
            "status": self.status,
            "reason": self.reason,
            "rotation": T.rotation.tolist(),
            "translation": T.translation.tolist(),
            "iterations": len(self.trace),
            "degenerate": self.trace.degenerate,
            "trace": [
                {"iteration": i + 1, "objective": r.objective,
                 "effective_weight_sum": r.effective_weight_sum,
                 "inlier_count": r.inlier_count,
                 "rotation": r.transform.rotation.tolist(),
                 "translation": r.transform.translation.tolist()}
                for i, r in enumerate(self.trace.records)
            ],
            "correspondence_count": 0 if self.correspondences is None else len(self.correspondences),
            "metrics": {k: (None if isinstance(v, float) and math.isnan(v) else v)
                        for k, v in self.metrics.items()},
            "level_counts": self.level_counts,
        }


def feature_correspondences(src: PointCloud, tar: PointCloud, config: PipelineConfig):
    """Pyramids, cross-layer attention and superpoint matching on both clouds.

    Returns the filtered correspondences together with the minor-level
    clouds they index into, plus the per-level point counts.
    """
    params = PyramidParams.from_seed(config.pyramid, config.seed)
    pyr_s = build_pyramid(src, config.pyramid, params)
    pyr_t = build_pyramid(tar, config.pyramid, params)
    model = HclaModel.from_seed(config.pyramid.level_dims, config.pyramid.radius(1),
                                config.pyramid.radius(2), config.hcla, config.seed)
    F_s = model.forward(pyr_s)
    F_t = model.forward(pyr_t)
    ms, mt = pyr_s.minor.cloud, pyr_t.minor.cloud
    corrs = superpoint_match(F_s, F_t, ms, mt, config.match)
    counts = {"source": [len(l.cloud) for l in pyr_s.levels],
              "target": [len(l.cloud) for l in pyr_t.levels]}
    return corrs, ms, mt, counts


def register_pair(src: PointCloud, tar: PointCloud, config: Optional[PipelineConfig] = None,
                  T_gt: Optional[RigidTransform] = None,
                  oracle_corrs: Optional[CorrespondenceSet] = None) -> RegistrationReport:
    """Run the full coarse-to-fine pipeline; failures are reported, never raised.

    With ``config.corrs == "oracle"`` the feature stages are skipped and
    ``oracle_corrs`` (indices into ``src`` / ``tar``) go straight to refinement.
    """
    config = config or PipelineConfig.default()
    identity = RigidTransform.identity()
    try:
        if len(src) < 10 or len(tar) < 10:
            raise InvalidData("both clouds need at least 10 points")
        counts: dict[str, list[int]] = {}
        if config.corrs == "oracle":
            if oracle_corrs is None:
                raise InvalidData("oracle correspondence mode needs oracle_corrs")
            corrs, cs, ct = oracle_corrs, src, tar
        else:
            corrs, cs, ct, counts = feature_correspondences(src, tar, config)
        T, trace = refine(corrs, cs, ct, config.refine)
    except (IgasaError, ValueError, np.linalg.LinAlgError) as exc:
        return RegistrationReport("failed", identity, RefineTrace(), reason=f"{type(exc).__name__}: {exc}")

    status = "degenerate" if trace.degenerate else "ok"
    report = RegistrationReport(status, T, trace, corrs, trace.reason, level_counts=counts)
    if T_gt is not None:
        report.metrics["rre"] = rre(T.rotation, T_gt.rotation)
        report.metrics["rte"] = rte(T.translation, T_gt.translation)
        report.metrics["inlier_ratio"] = (inlier_ratio(corrs, cs, ct, T_gt, config.thresholds.inlier_radius)
                                          if len(corrs) else float("nan"))
    return report
