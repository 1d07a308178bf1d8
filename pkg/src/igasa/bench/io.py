"""ASCII PLY / XYZ point clouds and plain-text transforms."""
from __future__ import annotations

import os
from pathlib import Path
from typing import Optional

import numpy as np

from ..core import PointCloud, RigidTransform, orthonormalize
from ..errors import InvalidData, ParseError

FORMATS = ("ply-ascii", "xyz")


def fmt(x: float) -> str:
    """Nine significant digits; ``-0`` is written as ``0``."""
    s = f"{float(x):.9g}"
    return "0" if s == "-0" else s


def infer_format(path) -> str:
    ext = Path(path).suffix.lower()
    if ext == ".ply":
        return "ply-ascii"
    if ext in (".xyz", ".txt"):
        return "xyz"
    raise ValueError(f"cannot infer point cloud format from {path!r}")


def _parse_float_row(tokens: list[str], lineno: int, want: int) -> list[float]:
    if len(tokens) < want:
        raise ParseError(f"expected {want} values, found {len(tokens)}", lineno)
    try:
        vals = [float(t) for t in tokens]
    except ValueError as exc:
        raise ParseError(f"bad number ({exc})", lineno) from None
    return vals


def _check_finite(pts: np.ndarray, path) -> None:
    if not np.all(np.isfinite(pts)):
        raise InvalidData(f"{path}: non-finite coordinate")


def _load_xyz(lines: list[str], path) -> np.ndarray:
    rows = []
    for lineno, line in enumerate(lines, start=1):
        tokens = line.split()
        if not tokens or tokens[0].startswith("#"):
            continue
        rows.append(_parse_float_row(tokens, lineno, 3)[:3])
    if not rows:
        raise ParseError("no points found", 1)
    pts = np.array(rows, dtype=np.float64)
    _check_finite(pts, path)
    return pts


def _load_ply(lines: list[str], path) -> np.ndarray:
    if not lines or lines[0].strip() != "ply":
        raise ParseError("missing 'ply' magic", 1)
    n_vertex: Optional[int] = None
    props: list[str] = []
    current = None
    header_end = None
    for lineno, line in enumerate(lines[1:], start=2):
        tokens = line.split()
        if not tokens:
            continue
        key = tokens[0]
        if key == "format":
            if len(tokens) < 2 or tokens[1] != "ascii":
                raise ParseError("only 'format ascii 1.0' is supported", lineno)
        elif key in ("comment", "obj_info"):
            continue
        elif key == "element":
            if len(tokens) != 3:
                raise ParseError("malformed element line", lineno)
            current = tokens[1]
            if current != "vertex" and n_vertex is None:
                raise ParseError("'vertex' must be the first element", lineno)
            if current == "vertex":
                try:
                    n_vertex = int(tokens[2])
                except ValueError:
                    raise ParseError("vertex count is not an integer", lineno) from None
                if n_vertex < 0:
                    raise ParseError("negative vertex count", lineno)
        elif key == "property":
            if len(tokens) < 3:
                raise ParseError("malformed property line", lineno)
            if current == "vertex":
                if tokens[1] == "list":
                    raise ParseError("list properties on vertices are not supported", lineno)
                props.append(tokens[-1])
        elif key == "end_header":
            header_end = lineno
            break
        else:
            raise ParseError(f"unexpected header keyword {key!r}", lineno)
    if header_end is None:
        raise ParseError("missing end_header", len(lines))
    if n_vertex is None:
        raise ParseError("no 'element vertex' declared", header_end)
    try:
        cols = [props.index(c) for c in ("x", "y", "z")]
    except ValueError:
        raise ParseError("vertex element lacks x, y, z properties", header_end) from None
    body = lines[header_end:header_end + n_vertex]
    if len(body) < n_vertex:
        raise ParseError(f"expected {n_vertex} vertices, file ends early", len(lines))
    pts = np.empty((n_vertex, 3))
    for i, line in enumerate(body):
        vals = _parse_float_row(line.split(), header_end + 1 + i, len(props))
        pts[i] = [vals[c] for c in cols]
    _check_finite(pts, path)
    return pts


def load_cloud(path, format: Optional[str] = None) -> PointCloud:
    fmt_name = format or infer_format(path)
    if fmt_name not in FORMATS:
        raise ValueError(f"unknown format {fmt_name!r}")
    with open(path, "r", encoding="ascii", errors="replace") as fh:
        lines = fh.read().splitlines()
    if not lines or all(not ln.strip() for ln in lines):
        raise ParseError("empty file", 1)
    pts = _load_ply(lines, path) if fmt_name == "ply-ascii" else _load_xyz(lines, path)
    return PointCloud(pts)


def save_cloud(cloud: PointCloud, path, format: Optional[str] = None) -> None:
    fmt_name = format or infer_format(path)
    if fmt_name not in FORMATS:
        raise ValueError(f"unknown format {fmt_name!r}")
    out = []
    if fmt_name == "ply-ascii":
        out += ["ply", "format ascii 1.0", f"element vertex {len(cloud)}",
                "property float x", "property float y", "property float z", "end_header"]
    out += [" ".join(fmt(v) for v in p) for p in cloud.points]
    Path(path).write_text("\n".join(out) + "\n", encoding="ascii")


def save_transform(T: RigidTransform, path) -> None:
    """Three rotation rows then the translation, space-separated."""
    rows = [*T.rotation, T.translation]
    Path(path).write_text("\n".join(" ".join(fmt(v) for v in r) for r in rows) + "\n",
                          encoding="ascii")


def load_transform(path) -> RigidTransform:
    with open(path, "r", encoding="ascii", errors="replace") as fh:
        lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    if len(lines) != 4:
        raise ParseError(f"expected 4 non-empty lines, found {len(lines)}", len(lines) or 1)
    rows = [_parse_float_row(ln.split(), i + 1, 3) for i, ln in enumerate(lines)]
    for i, r in enumerate(rows):
        if len(r) != 3:
            raise ParseError("expected exactly 3 values", i + 1)
    M = np.array(rows[:3])
    t = np.array(rows[3])
    if not (np.all(np.isfinite(M)) and np.all(np.isfinite(t))):
        raise InvalidData(f"{path}: non-finite transform entry")
    if np.linalg.det(M) <= 0:
        raise InvalidData(f"{path}: rotation has non-positive determinant")
    # nine significant digits leave ~1e-9 drift; snap back onto SO(3)
    return RigidTransform(orthonormalize(M), t)


def ensure_dir(path) -> Path:
    p = Path(path)
    os.makedirs(p, exist_ok=True)
    return p
