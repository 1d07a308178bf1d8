#!/usr/bin/env python3
"""Run every suite file in configs/ that has a [suite] section and print its table.

    python scripts/run_suites.py --out results/
"""
import argparse
import configparser
from pathlib import Path

from igasa.bench.suite import run_benchmark

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--configs", default=str(ROOT / "configs"))
    ap.add_argument("--out", default="results")
    ap.add_argument("--with-timing", action="store_true")
    args = ap.parse_args()
    for path in sorted(Path(args.configs).glob("*.ini")):
        cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
        cp.read(path)
        if not cp.has_section("suite"):
            continue
        out = Path(args.out) / path.stem
        run_benchmark(path, out, with_timing=args.with_timing)
        print(f"== {path.name} -> {out}")
        print((out / "table.txt").read_text())


if __name__ == "__main__":
    main()
