"""CSV formats for distance matrices and point maps.

Distance-matrix files: optional ``#infinity=<id>``, ``#origin=<id>`` and
``#K=<float>`` directive lines, then a header row ``id,<id1>,...`` and one
row per point.  The cell token ``inf`` denotes an infinite distance.  Floats
are written with ``repr`` so a save/load round trip is bit exact.

Point-map files: a ``source_id,target_id`` header and one assignment row per
source point.
"""
from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np

from .space import PointSpace

__all__ = ["save_space", "load_space", "save_point_map", "load_point_map"]


def _cell(value: float) -> str:
    if math.isinf(value):
        return "inf"
    if math.isfinite(value) and value == int(value) and abs(value) < 1e15:
        return repr(int(value))
    return repr(float(value))


def save_space(space: PointSpace, path) -> None:
    path = Path(path)
    mat = space.matrix()
    lines = []
    if space.infinity_point is not None:
        lines.append(f"#infinity={space.infinity_point}")
    if space.origin is not None:
        lines.append(f"#origin={space.origin}")
    if space.quasimetric_K is not None:
        lines.append(f"#K={space.quasimetric_K!r}")
    with path.open("w", newline="") as fh:
        for line in lines:
            fh.write(line + "\n")
        writer = csv.writer(fh)
        writer.writerow(["id"] + space.ids)
        for k, pid in enumerate(space.ids):
            writer.writerow([pid] + [_cell(v) for v in mat[k]])


def load_space(path) -> PointSpace:
    path = Path(path)
    infinity = origin = None
    K = None
    rows = []
    with path.open(newline="") as fh:
        for raw in fh:
            line = raw.rstrip("\n")
            if line.startswith("#"):
                key, _, value = line[1:].partition("=")
                if key == "infinity":
                    infinity = value
                elif key == "origin":
                    origin = value
                elif key == "K":
                    K = float(value)
                else:
                    raise ValueError(f"unknown directive {line!r} in {path}")
                continue
            rows.append(line)
    reader = csv.reader(rows)
    header = next(reader, None)
    if not header or header[0] != "id":
        raise ValueError(f"malformed distance matrix {path}: missing 'id' header")
    ids = header[1:]
    mat = np.full((len(ids), len(ids)), math.inf)
    seen = []
    for row in reader:
        if not row:
            continue
        pid = row[0]
        if pid not in ids:
            raise ValueError(f"row id {pid!r} not in header of {path}")
        if len(row) != len(ids) + 1:
            raise ValueError(f"row {pid!r} has {len(row) - 1} cells, expected {len(ids)}")
        k = ids.index(pid)
        seen.append(pid)
        mat[k] = [math.inf if c == "inf" else float(c) for c in row[1:]]
    if len(seen) != len(ids):
        missing = sorted(set(ids) - set(seen))
        raise ValueError(f"missing rows for {missing} in {path}")
    return PointSpace(
        ids,
        dist=mat,
        infinity_point=infinity,
        origin=origin,
        quasimetric_K=K,
        meta={"source_file": str(path)},
    )


def save_point_map(assignment: dict, path) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["source_id", "target_id"])
        for src, dst in assignment.items():
            writer.writerow([src, dst])


def load_point_map(path) -> dict:
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["source_id", "target_id"]:
            raise ValueError(f"malformed point map {path}: bad header {header}")
        return {row[0]: row[1] for row in reader if row}
