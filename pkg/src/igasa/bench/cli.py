"""Command line entry point: ``igasa {register,bench,gen,eval}``."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from ..core import apply_transform
from ..errors import IgasaError
from ..evaluation import rre, rte
from . import config as cfg
from .io import ensure_dir, fmt, load_cloud, load_transform, save_cloud, save_transform
from .pipeline import PipelineConfig, register_pair
from .scene import SceneConfig, generate_scene
from .suite import run_benchmark


def _cmd_register(args) -> int:
    src, tar = load_cloud(args.src), load_cloud(args.tar)
    config = PipelineConfig.from_ini(args.config) if args.config else PipelineConfig.default()
    if config.corrs == "oracle":
        print("error: oracle correspondences are not available from the command line", file=sys.stderr)
        return 2
    T_gt = load_transform(args.gt) if args.gt else None
    report = register_pair(src, tar, config, T_gt)
    text = json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n"
    if args.out:
        out = ensure_dir(args.out)
        (out / "report.json").write_text(text, encoding="utf-8")
        save_transform(report.transform, out / "transform.txt")
        save_cloud(apply_transform(report.transform, src), out / "aligned_src.ply")
    else:
        sys.stdout.write(text)
    return 0


def _cmd_bench(args) -> int:
    run_benchmark(args.suite, args.out, with_timing=args.with_timing)
    sys.stdout.write((Path(args.out) / "table.txt").read_text(encoding="utf-8"))
    return 0


def _cmd_gen(args) -> int:
    cp = cfg.read_ini(args.scene)
    section = cp["scene"] if cp.has_section("scene") else None
    scene_cfg = cfg.build(SceneConfig, section, skip=("seed",))
    scene = generate_scene(scene_cfg, seed=args.seed)
    out = ensure_dir(args.out)
    save_cloud(scene.src, out / "src.ply")
    save_cloud(scene.tar, out / "tar.ply")
    save_transform(scene.T_gt, out / "gt.txt")
    corrs, mask = scene.mixed_correspondences()
    lines = [f"{s} {t} {'outlier' if m else 'inlier'}" for (s, t), m in zip(corrs.pairs, mask)]
    (out / "corrs.txt").write_text("\n".join(lines) + ("\n" if lines else ""), encoding="ascii")
    return 0


def _cmd_eval(args) -> int:
    est, gt = load_transform(args.est), load_transform(args.gt)
    print(f"RRE {fmt(rre(est.rotation, gt.rotation))}")
    print(f"RTE {fmt(rte(est.translation, gt.translation))}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="igasa", description="Rigid point cloud registration toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("register", help="register a source cloud onto a target cloud")
    r.add_argument("--src", required=True)
    r.add_argument("--tar", required=True)
    r.add_argument("--config")
    r.add_argument("--gt", help="ground-truth transform file (4 lines)")
    r.add_argument("--out", help="output directory; report goes to stdout when omitted")
    r.set_defaults(func=_cmd_register)

    b = sub.add_parser("bench", help="run a benchmark suite")
    b.add_argument("--suite", required=True)
    b.add_argument("--out", required=True)
    b.add_argument("--with-timing", action="store_true",
                   help="add a wall_time column (makes results.csv non-reproducible)")
    b.set_defaults(func=_cmd_bench)

    g = sub.add_parser("gen", help="generate a synthetic scene")
    g.add_argument("--scene", required=True)
    g.add_argument("--seed", required=True, type=int)
    g.add_argument("--out", required=True)
    g.set_defaults(func=_cmd_gen)

    e = sub.add_parser("eval", help="rotation / translation error between two transforms")
    e.add_argument("--est", required=True)
    e.add_argument("--gt", required=True)
    e.set_defaults(func=_cmd_eval)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (IgasaError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
