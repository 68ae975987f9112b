"""Flat file formats: nodal CSV, key=value manifests and binary graymaps."""
from __future__ import annotations

import csv
import os
from pathlib import Path

import numpy as np

from .fem import FeFunction
from .mesh import Mesh

NODAL_HEADER = ["node_id", "x", "y", "value"]


def fmt(v) -> str:
    """Round-trip exact text for floats; plain text otherwise."""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (list, tuple, np.ndarray)):
        return ",".join(fmt(x) for x in v)
    return str(v)


def write_nodal_csv(path, f: FeFunction) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(NODAL_HEADER)
        for i, ((x, y), v) in enumerate(zip(f.mesh.nodes, f.values)):
            w.writerow([i, fmt(x), fmt(y), fmt(v)])


def read_nodal_csv(path, mesh: Mesh) -> FeFunction:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if rows[0] != NODAL_HEADER:
        raise ValueError(f"{path}: unexpected header {rows[0]}")
    values = np.empty(mesh.num_nodes)
    seen = np.zeros(mesh.num_nodes, dtype=bool)
    for node_id, x, y, v in rows[1:]:
        i = int(node_id)
        if abs(float(x) - mesh.nodes[i, 0]) > 1e-12 or abs(float(y) - mesh.nodes[i, 1]) > 1e-12:
            raise ValueError(f"{path}: node {i} does not match the mesh")
        values[i] = float(v)
        seen[i] = True
    if not seen.all():
        raise ValueError(f"{path}: missing nodes")
    return FeFunction(mesh, values)


def write_table_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def write_manifest(path, entries: dict) -> None:
    with open(path, "w") as fh:
        for k, v in entries.items():
            fh.write(f"{k}={fmt(v)}\n")


def read_manifest(path) -> dict[str, str]:
    out = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            k, _, v = line.partition("=")
            out[k.strip()] = v.strip()
    return out


def write_pgm(path, pixels: np.ndarray) -> None:
    """Binary (P5) portable graymap from a uint8 array, row 0 at the top."""
    pixels = np.asarray(pixels, dtype=np.uint8)
    rows, cols = pixels.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{cols} {rows}\n255\n".encode("ascii"))
        fh.write(pixels.tobytes())


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while data[pos:pos + 1].isspace():
            pos += 1
        start = pos
        while not data[pos:pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    pos += 1  # single whitespace after maxval
    if tokens[0] != b"P5":
        raise ValueError("not a binary graymap")
    cols, rows = int(tokens[1]), int(tokens[2])
    return np.frombuffer(data[pos:pos + rows * cols], dtype=np.uint8).reshape(rows, cols)


def emit_heatmap(f: FeFunction, path) -> tuple[str, str]:
    """Rasterize nodal values to an ``(n+1) x (n+1)`` graymap plus a min/max sidecar.

    Columns run left to right in ``x``; the top row is ``y = 1``.  A constant
    field maps to mid-gray.
    """
    values = np.asarray(f.values, dtype=float)
    if not np.all(np.isfinite(values)):
        raise ValueError("heatmap values must be finite")
    m = f.mesh.n + 1
    grid = values.reshape(m, m)[::-1]
    lo, hi = float(values.min()), float(values.max())
    if hi > lo:
        pix = np.rint(255.0 * (grid - lo) / (hi - lo))
    else:
        pix = np.full(grid.shape, 128.0)
    path = os.fspath(path)
    write_pgm(path, pix.astype(np.uint8))
    sidecar = path + ".txt"
    write_manifest(sidecar, {"min": lo, "max": hi, "rows": m, "cols": m})
    return path, sidecar


def mask_image(mesh: Mesh, flags: np.ndarray) -> np.ndarray:
    """One pixel per grid cell: 255 both triangles flagged, 128 one, 0 none."""
    n = mesh.n
    per_cell = flags.reshape(n, n, 2).sum(axis=2)
    return (per_cell * 127.5).round().astype(np.uint8)[::-1]
