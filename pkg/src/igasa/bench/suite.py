"""Benchmark suites: seeds x scenes x methods, reported as CSV and a text table.

Suite file layout (see :mod:`igasa.bench.config` for the grammar)::

    [suite]
    seeds = 0..99
    methods = igar, ransac
    correspondences = oracle-mixed    # oracle-mixed | oracle | features

    [scene.outlier30]                 # one or more; plain [scene] also works
    point_count = 1000
    noise_std = 0.01
    outlier_fraction = 0.3

    [igar]                            # RefineConfig fields
    [ransac]                          # iterations, inlier_radius
    [thresholds]                      # MetricThresholds fields
    [pipeline] / [pyramid] / [hcla] / [match]   # used when correspondences = features
"""
from __future__ import annotations

import csv
import io
import math
import os
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

from ..errors import IgasaError, ParseError
from ..evaluation import MetricThresholds, inlier_ratio, registration_passes, rre, rte
from ..igar import RefineConfig, refine
from . import config as cfg
from .io import ensure_dir
from .pipeline import PipelineConfig, feature_correspondences
from .ransac import ransac
from .scene import SceneConfig, generate_scene

METHODS = ("igar", "ransac")
CORR_MODES = ("oracle-mixed", "oracle", "features")
ROW_FIELDS = ["scene", "seed", "method", "status", "rre", "rte", "ir", "iterations"]
AGG_FIELDS = ["scene", "method", "pairs", "rr", "fmr", "mean_rre", "median_rre", "mean_rte", "median_rte"]


@dataclass
class RansacConfig:
    iterations: int = 2000
    inlier_radius: float = 0.05


@dataclass
class SuiteConfig:
    seeds: list[int]
    scenes: list[tuple[str, SceneConfig]]
    methods: list[str] = field(default_factory=lambda: list(METHODS))
    correspondences: str = "oracle-mixed"
    igar: RefineConfig = field(default_factory=RefineConfig)
    ransac: RansacConfig = field(default_factory=RansacConfig)
    thresholds: MetricThresholds = field(default_factory=MetricThresholds)
    pipeline: Optional[PipelineConfig] = None

    @classmethod
    def from_ini(cls, path) -> "SuiteConfig":
        cp = cfg.read_ini(path)
        if not cp.has_section("suite"):
            raise ParseError(f"{path}: missing [suite] section")
        suite = cp["suite"]
        seeds = cfg.parse_seeds(suite.get("seeds", "0"))
        methods = [m.strip() for m in suite.get("methods", "igar, ransac").split(",") if m.strip()]
        for m in methods:
            if m not in METHODS:
                raise ParseError(f"[suite] unknown method {m!r}")
        mode = suite.get("correspondences", "oracle-mixed").strip()
        if mode not in CORR_MODES:
            raise ParseError(f"[suite] unknown correspondences mode {mode!r}")
        scenes = []
        for name in cp.sections():
            if name == "scene" or name.startswith("scene."):
                label = name.split(".", 1)[1] if "." in name else "scene"
                scenes.append((label, cfg.build(SceneConfig, cp[name], skip=("seed",))))
        if not scenes:
            raise ParseError(f"{path}: no [scene] section")
        sec = lambda n: cp[n] if cp.has_section(n) else None  # noqa: E731
        pipeline = PipelineConfig.from_ini(path) if mode == "features" else None
        return cls(seeds, scenes, methods, mode,
                   cfg.build(RefineConfig, sec("igar"), skip=("init_transform",)),
                   cfg.build(RansacConfig, sec("ransac")),
                   cfg.build(MetricThresholds, sec("thresholds")),
                   pipeline)


@dataclass
class BenchRow:
    scene: str
    seed: int
    method: str
    status: str
    rre: float
    rte: float
    ir: float
    iterations: int
    wall_time: float = 0.0


@dataclass
class BenchReport:
    rows: list[BenchRow]
    aggregates: list[dict]


def worker_count() -> int:
    raw = os.environ.get("IGASA_THREADS", "").strip()
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            pass
    return os.cpu_count() or 1


def _run_case(suite: SuiteConfig, label: str, scene_cfg: SceneConfig, seed: int) -> list[BenchRow]:
    scene = generate_scene(scene_cfg, seed=seed)
    if suite.correspondences == "oracle-mixed":
        corrs, _ = scene.mixed_correspondences()
        cs, ct = scene.src, scene.tar
    elif suite.correspondences == "oracle":
        corrs, cs, ct = scene.gt_corrs, scene.src, scene.tar
    else:
        try:
            corrs, cs, ct, _ = feature_correspondences(scene.src, scene.tar, suite.pipeline)
        except (IgasaError, ValueError) as exc:
            return [BenchRow(label, seed, m, f"failed: {type(exc).__name__}", math.nan, math.nan,
                             math.nan, 0) for m in suite.methods]
    th = suite.thresholds
    ir = inlier_ratio(corrs, cs, ct, scene.T_gt, th.inlier_radius) if len(corrs) else math.nan
    rows = []
    for method in suite.methods:
        t0 = time.perf_counter()
        try:
            if method == "igar":
                T, trace = refine(corrs, cs, ct, suite.igar)
                iters = len(trace)
                status = "degenerate" if trace.degenerate else "ok"
            else:
                res = ransac(corrs, cs, ct, suite.ransac.iterations, suite.ransac.inlier_radius, seed)
                T, iters, status = res.transform, res.iterations, "ok"
            e_r, e_t = rre(T.rotation, scene.T_gt.rotation), rte(T.translation, scene.T_gt.translation)
        except (IgasaError, ValueError) as exc:
            e_r = e_t = math.nan
            iters, status = 0, f"failed: {type(exc).__name__}"
        rows.append(BenchRow(label, seed, method, status, e_r, e_t, ir, iters,
                             time.perf_counter() - t0))
    return rows


def aggregate(rows: list[BenchRow], thresholds: MetricThresholds) -> list[dict]:
    groups: dict[tuple[str, str], list[BenchRow]] = {}
    for r in rows:
        groups.setdefault((r.scene, r.method), []).append(r)
    out = []
    for (scene, method), rs in groups.items():
        finite = [r for r in rs if not (math.isnan(r.rre) or math.isnan(r.rte))]
        passed = sum(registration_passes((r.rre, r.rte), thresholds) for r in finite)
        irs = [r.ir for r in rs if not math.isnan(r.ir)]
        rres = [r.rre for r in finite]
        rtes = [r.rte for r in finite]
        out.append({
            "scene": scene, "method": method, "pairs": len(rs),
            "rr": passed / len(rs),
            "fmr": (sum(ir > thresholds.fmr_min_ir for ir in irs) / len(rs)),
            "mean_rre": statistics.fmean(rres) if rres else math.nan,
            "median_rre": statistics.median(rres) if rres else math.nan,
            "mean_rte": statistics.fmean(rtes) if rtes else math.nan,
            "median_rte": statistics.median(rtes) if rtes else math.nan,
        })
    return out


def run_suite(suite: SuiteConfig, threads: Optional[int] = None) -> BenchReport:
    """Evaluate every (seed, scene) case; rows come back in config order."""
    cases = [(label, sc, seed) for seed in suite.seeds for label, sc in suite.scenes]
    n = threads or worker_count()
    if n == 1:
        results = [_run_case(suite, *c) for c in cases]
    else:
        with ThreadPoolExecutor(max_workers=n) as pool:
            results = list(pool.map(lambda c: _run_case(suite, *c), cases))
    rows = [r for block in results for r in block]
    return BenchReport(rows, aggregate(rows, suite.thresholds))


def _cell(v) -> str:
    if isinstance(v, float):
        return "nan" if math.isnan(v) else f"{v:.10g}"
    return str(v)


def rows_csv(report: BenchReport, with_timing: bool = False) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(ROW_FIELDS + (["wall_time"] if with_timing else []))
    for r in report.rows:
        vals = [getattr(r, f) for f in ROW_FIELDS] + ([r.wall_time] if with_timing else [])
        w.writerow([_cell(v) for v in vals])
    return buf.getvalue()


def aggregates_csv(report: BenchReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(AGG_FIELDS)
    for a in report.aggregates:
        w.writerow([_cell(a[f]) for f in AGG_FIELDS])
    return buf.getvalue()


def table(report: BenchReport) -> str:
    head = f"{'scene':<16}{'method':<8}{'pairs':>6}{'RR':>8}{'FMR':>8}{'medRRE':>12}{'medRTE':>12}"
    lines = [head, "-" * len(head)]
    for a in report.aggregates:
        lines.append(f"{a['scene']:<16}{a['method']:<8}{a['pairs']:>6}{a['rr']:>8.3f}{a['fmr']:>8.3f}"
                     f"{a['median_rre']:>12.5g}{a['median_rte']:>12.5g}")
    return "\n".join(lines) + "\n"


def run_benchmark(suite_config_path, out_dir, with_timing: bool = False,
                  threads: Optional[int] = None) -> BenchReport:
    """Run a suite file and write ``results.csv``, ``aggregates.csv`` and ``table.txt``."""
    suite = SuiteConfig.from_ini(suite_config_path)
    report = run_suite(suite, threads)
    out = ensure_dir(out_dir)
    (out / "results.csv").write_text(rows_csv(report, with_timing), encoding="utf-8")
    (out / "aggregates.csv").write_text(aggregates_csv(report), encoding="utf-8")
    (out / "table.txt").write_text(table(report), encoding="utf-8")
    return report
