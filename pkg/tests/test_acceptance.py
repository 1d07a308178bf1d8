"""Acceptance checks; each test records one PASS/FAIL line shown in the run summary."""
import csv
import io
import math
import os
import statistics
import subprocess
import sys
import time
from pathlib import Path

import numpy as np

from igasa.bench.scene import SceneConfig, generate_scene
from igasa.core import CorrespondenceSet, PointCloud, RigidTransform
from igasa.evaluation import feature_matching_recall, inlier_ratio, rre, rte
from igasa.hcla import (AttentionParams, SkipBundle, cosine_affinity, saiga_attention, saiga_forward,
                        sgira_attention, sgira_forward)
from igasa.hpa import fibonacci_kernel, kpconv_aggregate
from igasa.igar import RefineConfig, refine, weighted_svd_solve
from igasa.matcher import MatchConfig, consistency_scores
from igasa.evaluation import (confidence_loss, correspondence_loss, dense_loss, infonce_loss,
                              keypoint_position_loss, point_matching_loss)

from conftest import random_rotation
from oracles import best_grid_objective, direct_objective
from test_hcla import saiga_oracle, sgira_oracle
from test_hpa import triple_loop_kpconv

ROOT = Path(__file__).resolve().parents[1]
SUITE = ROOT / "configs" / "outlier30.ini"


def _pairs(n):
    return CorrespondenceSet(np.stack([np.arange(n)] * 2, axis=1))


def test_procrustes_optimality(verdict):
    r = np.random.default_rng(20240101)
    inst = [(r.normal(size=(10, 3)), r.normal(size=(10, 3)), r.uniform(size=10)) for _ in range(200)]
    t0 = time.perf_counter()
    grid = best_grid_objective(inst, step_deg=2.0)
    worst = -math.inf
    for (a, b, w), e_grid in zip(inst, grid):
        T = weighted_svd_solve(_pairs(10), PointCloud(a), PointCloud(b), w)
        e = direct_objective(T.rotation, T.translation, a, b, w)
        worst = max(worst, (e - e_grid) / e_grid)
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-9 and elapsed < 60
    assert verdict("1 weighted Procrustes optimality", ok,
                   f"max rel excess {worst:.3e}, {elapsed:.1f}s")


def test_exact_recovery(verdict):
    t0 = time.perf_counter()
    worst_r = worst_t = 0.0
    cfg = SceneConfig(point_count=200)
    # raw displacements reach ~1 unit before the first solve, so the weight
    # scale must be comparable or every first-pass weight underflows
    refine_cfg = RefineConfig(sigma=1.0)
    for seed in range(100):
        s = generate_scene(cfg, seed=seed)
        T, trace = refine(s.gt_corrs, s.src, s.tar, refine_cfg)
        assert not trace.degenerate
        worst_r = max(worst_r, rre(T.rotation, s.T_gt.rotation))
        worst_t = max(worst_t, rte(T.translation, s.T_gt.translation))
    elapsed = time.perf_counter() - t0
    ok = worst_r < 1e-6 and worst_t < 1e-9 and elapsed < 5
    assert verdict("2 exact recovery", ok, f"max RRE {worst_r:.2e} deg, max RTE {worst_t:.2e}, {elapsed:.1f}s")


def _suite_scene_config():
    from igasa.bench.suite import SuiteConfig
    suite = SuiteConfig.from_ini(SUITE)
    return suite.scenes[0][1], suite.igar


def test_robust_recovery(verdict):
    scene_cfg, igar_cfg = _suite_scene_config()
    assert (scene_cfg.point_count, scene_cfg.noise_std, scene_cfg.outlier_fraction) == (1000, 0.01, 0.3)
    assert (igar_cfg.iterations, igar_cfg.sigma, igar_cfg.gate) == (5, 0.05, 0.15)
    t0 = time.perf_counter()
    passed, leaked = 0, 0
    for seed in range(100):
        s = generate_scene(scene_cfg, seed=seed)
        corrs, decoy = s.mixed_correspondences()
        T, trace = refine(corrs, s.src, s.tar, igar_cfg)
        if rre(T.rotation, s.T_gt.rotation) < 0.5 and rte(T.translation, s.T_gt.translation) < 0.01:
            passed += 1
        w = trace.final_weights
        if w is None or np.any(w[decoy] != 0):
            leaked += 1
    elapsed = time.perf_counter() - t0
    ok = passed >= 95 and leaked == 0 and elapsed < 60
    assert verdict("3 robust recovery", ok,
                   f"{passed}/100 within tolerance, {leaked} trials with nonzero outlier weight, {elapsed:.1f}s")


def test_kpconv_equivalence(verdict):
    worst = 0.0
    for seed in range(50):
        r = np.random.default_rng(5000 + seed)
        n = int(r.integers(5, 51))
        K = int(r.integers(1, 16))
        d_in, d_out = int(r.integers(1, 5)), int(r.integers(1, 5))
        radius = float(r.uniform(0.2, 0.6))
        pts = r.uniform(size=(n, 3))
        q = pts[: max(1, n // 2)]
        k = fibonacci_kernel(radius, K, seed=seed)
        F = r.normal(size=(n, d_in))
        W = r.uniform(-1, 1, size=(K, d_in, d_out))
        got = kpconv_aggregate(PointCloud(q), PointCloud(pts), F, k, W, radius)
        want = triple_loop_kpconv(q.tolist(), pts.tolist(), F, k.kernel_points.tolist(), k.influence, W, radius)
        scale = np.maximum(np.abs(want), 1e-12)
        worst = max(worst, float(np.max(np.abs(got - want) / scale)))
    assert verdict("4 KPConv equivalence", worst <= 1e-9, f"max rel error {worst:.2e}")


def test_attention_contracts(verdict):
    row_err = oracle_err = perm_err = 0.0
    for seed in range(50):
        r = np.random.default_rng(7000 + seed)
        p = AttentionParams.from_seed(seed, head_count=2, head_dim=3, model_dim=4, primary_dim=5, skip_dim=3,
                                      alpha=float(r.uniform(0.1, 2)), theta=float(r.uniform(0, 1)),
                                      gamma=float(r.uniform(0, 1)), sigma_comp=float(r.uniform(0.2, 1)))
        nm, npr = int(r.integers(2, 9)), int(r.integers(1, 5))
        Fm, cm = r.normal(size=(nm, 4)), r.uniform(size=(nm, 3))
        Fp, cp = r.normal(size=(npr, 5)), r.uniform(size=(npr, 3))
        Fs = r.normal(size=(nm, 3))
        skip = SkipBundle(Fs, cosine_affinity(Fs))
        for A in (sgira_attention(Fm, cm, Fp, cp, p), saiga_attention(Fm, cm, skip, p)):
            row_err = max(row_err, float(np.max(np.abs(A.sum(axis=-1) - 1))))
        F_pp, F_plus = sgira_forward(Fm, cm, Fp, cp, skip, p)
        want_pp, want_plus = sgira_oracle(Fm, cm.tolist(), Fp, cp.tolist(), Fs, p)
        out = saiga_forward(F_pp, cm, skip, p)
        want_out = saiga_oracle(F_pp, cm.tolist(), skip.A_skip.tolist(), p)
        for got, want in ((F_pp, want_pp), (F_plus, want_plus), (out, want_out)):
            oracle_err = max(oracle_err, float(np.max(np.abs(got - want) / np.maximum(np.abs(want), 1e-3))))
        perm = r.permutation(nm)
        pskip = SkipBundle(Fs[perm], skip.A_skip[np.ix_(perm, perm)])
        G_pp, _ = sgira_forward(Fm[perm], cm[perm], Fp, cp, pskip, p)
        pout = saiga_forward(G_pp, cm[perm], pskip, p)
        perm_err = max(perm_err, float(np.max(np.abs(G_pp - F_pp[perm]))), float(np.max(np.abs(pout - out[perm]))))
    ok = row_err <= 1e-6 and oracle_err <= 1e-9 and perm_err <= 1e-12
    assert verdict("5 attention contracts", ok,
                   f"row-sum {row_err:.1e}, oracle {oracle_err:.1e}, permutation {perm_err:.1e}")


def test_metric_formulas(verdict):
    src = np.column_stack([np.arange(10.0), np.zeros(10), np.zeros(10)])
    tar = src.copy()
    tar[3:, 1] += 1.0
    ir = inlier_ratio(_pairs(10), PointCloud(src), PointCloud(tar), RigidTransform.identity(), 0.1)
    fmr = feature_matching_recall([0.02, 0.06, 0.5], 0.05)
    sc = consistency_scores(CorrespondenceSet([[0, 0]]), PointCloud([[0.0, 0, 0]]), PointCloud([[0.05, 0, 0]]),
                            MatchConfig(sigma_score=0.05))[0]
    ok = abs(ir - 0.3) <= 1e-15 and abs(fmr - 2 / 3) <= 1e-15 and abs(sc - math.exp(-1)) <= 1e-12
    assert verdict("6 metric formulas", ok, f"IR {ir}, FMR {fmr:.6f}, score {sc:.15f}")


def test_loss_evaluators(verdict):
    T = RigidTransform(random_rotation(np.random.default_rng(3)), [0.1, 0.2, 0.3])
    x = np.random.default_rng(4).normal(size=(6, 3))
    perfect = [
        point_matching_loss([np.ones(5), np.ones(5)], np.ones(5)),
        keypoint_position_loss(x, T.apply(x), T),
        infonce_loss(x, x, [np.zeros((0, 3))] * 6, np.eye(3)),
        dense_loss(T, T),
    ]
    worst = 0.0
    for seed in range(20):
        r = np.random.default_rng(9000 + seed)
        layers = [r.uniform(0.01, 1, 6) for _ in range(3)]
        w = r.uniform(size=6)
        want = -sum(sum(a * math.log(b) for a, b in zip(w, P)) for P in layers) / 3
        worst = max(worst, abs(point_matching_loss(layers, w) - want))
        ux, uy = r.uniform(0, 0.9, 3), r.uniform(0, 0.9, 2)
        want = (-sum(a * math.log(b) for a, b in zip(w, layers[-1])) / sum(w)
                - sum(math.log(1 - u) for u in ux) / 3 + sum(math.log(1 - u) for u in uy) / 2)
        worst = max(worst, abs(correspondence_loss(layers[-1], w, ux, uy) - want))
        A, P, W = r.normal(size=(3, 4)), r.normal(size=(3, 4)), r.normal(size=(4, 4))
        negs = [r.normal(size=(2, 4)) for _ in range(3)]
        want = 0.0
        for a, p_, N in zip(A, P, negs):
            sp = float(a @ W @ p_)
            want -= math.log(math.exp(sp) / (math.exp(sp) + sum(math.exp(float(a @ W @ n)) for n in N)))
        worst = max(worst, abs(infonce_loss(A, P, negs, W) - want / 3))
        y = r.normal(size=(6, 3))
        want = sum(sum((T.rotation @ a + T.translation - b) ** 2) for a, b in zip(x, y)) / 6
        worst = max(worst, abs(keypoint_position_loss(x, y, T) - want))
        s, lab = r.uniform(0.05, 0.95, 5), (r.uniform(size=5) > 0.5).astype(float)
        want = -sum(l_ * math.log(v) + (1 - l_) * math.log(1 - v) for v, l_ in zip(s, lab)) / 5
        worst = max(worst, abs(confidence_loss(s, lab) - want))
        T2 = RigidTransform(random_rotation(r), r.normal(size=3))
        M = T2.rotation.T @ T.rotation - np.eye(3)
        want = float(np.sum((T2.translation - T.translation) ** 2)) + 0.5 * float(np.sum(M * M))
        worst = max(worst, abs(dense_loss(T2, T, 1.0, 0.5) - want))
    ok = max(abs(v) for v in perfect) == 0.0 and worst <= 1e-10
    assert verdict("7 loss evaluators", ok, f"perfect-input losses {perfect}, max oracle gap {worst:.1e}")


def _cli(args, threads, cwd):
    env = dict(os.environ, IGASA_THREADS=str(threads))
    res = subprocess.run([sys.executable, "-m", "igasa", *args], capture_output=True, env=env, cwd=cwd, check=False)
    assert res.returncode == 0, res.stderr.decode()
    return res.stdout


def _tree(path):
    return {p.relative_to(path).as_posix(): p.read_bytes() for p in sorted(path.rglob("*")) if p.is_file()}


def test_bench_igar_vs_ransac(verdict, tmp_path):
    t0 = time.perf_counter()
    out_a = _cli(["bench", "--suite", str(SUITE), "--out", str(tmp_path / "a")], 1, tmp_path)
    out_b = _cli(["bench", "--suite", str(SUITE), "--out", str(tmp_path / "b")], 4, tmp_path)
    deterministic = out_a == out_b and _tree(tmp_path / "a") == _tree(tmp_path / "b")
    rows = list(csv.DictReader(io.StringIO((tmp_path / "a" / "results.csv").read_text())))
    med = {m: statistics.median(float(r["rte"]) for r in rows if r["method"] == m) for m in ("igar", "ransac")}
    ok = deterministic and len(rows) == 200 and med["igar"] <= med["ransac"]
    assert verdict("8 IGAR vs RANSAC harness", ok,
                   f"median RTE igar {med['igar']:.6g} vs ransac {med['ransac']:.6g}, "
                   f"deterministic={deterministic}, {time.perf_counter() - t0:.1f}s")


def test_cli_determinism(verdict, tmp_path):
    scene = tmp_path / "scene.ini"
    scene.write_text("[scene]\npoint_count = 1500\nshape = room-like\nextent = 2.0\nnoise_std = 0.002\n"
                     "outlier_fraction = 0.1\npose_rotation_max = 10\npose_translation_max = 0.1\n")
    suite = tmp_path / "suite.ini"
    suite.write_text("[suite]\nseeds = 0..5\n[scene.small]\npoint_count = 300\nnoise_std = 0.005\n"
                     "outlier_fraction = 0.2\npose_rotation_max = 10\npose_translation_max = 0.1\n"
                     "[igar]\nsigma = 0.05\ntau = 0.15\n[ransac]\niterations = 300\n")
    features = tmp_path / "features.ini"
    features.write_text(suite.read_text().replace("[suite]", "[suite]\ncorrespondences = features")
                        + "[pyramid]\nbase_voxel = 0.05\n[refine]\nsigma = 0.1\ntau = 0.3\n")
    runs = []
    for k, threads in enumerate((1, 3)):
        d = tmp_path / f"run{k}"
        stdout = [
            _cli(["gen", "--scene", str(scene), "--seed", "7", "--out", str(d / "g")], threads, tmp_path),
            _cli(["register", "--src", str(d / "g" / "src.ply"), "--tar", str(d / "g" / "tar.ply"),
                  "--gt", str(d / "g" / "gt.txt"), "--config", str(ROOT / "configs" / "pipeline.ini"),
                  "--out", str(d / "r")], threads, tmp_path),
            _cli(["register", "--src", str(d / "g" / "src.ply"), "--tar", str(d / "g" / "tar.ply")],
                 threads, tmp_path),
            _cli(["eval", "--est", str(d / "r" / "transform.txt"), "--gt", str(d / "g" / "gt.txt")],
                 threads, tmp_path),
            _cli(["bench", "--suite", str(suite), "--out", str(d / "b")], threads, tmp_path),
            _cli(["bench", "--suite", str(features), "--out", str(d / "f")], threads, tmp_path),
        ]
        runs.append((stdout, _tree(d)))
    same_out = runs[0][0] == runs[1][0]
    same_files = runs[0][1] == runs[1][1]
    assert verdict("9 CLI determinism", same_out and same_files,
                   f"{len(runs[0][1])} files and 6 command outputs compared across IGASA_THREADS=1/3")
