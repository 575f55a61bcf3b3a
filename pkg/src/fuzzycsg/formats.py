"""On-disk formats: point datasets, occupancy grids, PGM slices and loss histories.

Text writers print floats with 17 significant digits so every value reads
back bit for bit.
"""
import csv
import re
from pathlib import Path

import numpy as np

from .errors import ParseError, SchemaError

_DATASET_HEADER = re.compile(r"^dim=(\d+),count=(\d+)$")
GRID_MAGIC = "fuzzycsg-grid"


def _fmt(x):
    return format(float(x), ".17g")


def write_dataset(path, points, occupancy):
    points = np.asarray(points, dtype=np.float64)
    occupancy = np.asarray(occupancy, dtype=np.float64)
    if points.ndim != 2 or occupancy.shape != (points.shape[0],):
        raise SchemaError("points and occupancy must have shapes (n, d) and (n,)", path=str(path))
    _check_occupancy(occupancy, path)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"dim={points.shape[1]},count={points.shape[0]}\n")
        writer = csv.writer(fh, lineterminator="\n")
        for p, o in zip(points, occupancy):
            writer.writerow([_fmt(v) for v in p] + [_fmt(o)])


def _check_occupancy(occ, path):
    bad = np.flatnonzero(~((occ >= 0) & (occ <= 1)))
    if bad.size:
        raise SchemaError(f"occupancy {occ[bad[0]]!r} in row {bad[0] + 1} is outside [0, 1]", path=str(path))


def read_dataset(path):
    """Return ``(points, occupancy)`` from a dataset CSV."""
    try:
        with open(path, encoding="utf-8") as fh:
            header = fh.readline().strip()
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise ParseError(f"cannot read dataset: {exc}", path=str(path)) from exc
    m = _DATASET_HEADER.match(header)
    if not m:
        raise SchemaError(f"first line must be 'dim=<d>,count=<n>', got {header!r}", path=str(path))
    dim, count = int(m.group(1)), int(m.group(2))
    if dim not in (2, 3):
        raise SchemaError(f"dimension must be 2 or 3, got {dim}", path=str(path))
    rows = [r for r in rows if r]
    if len(rows) != count:
        raise SchemaError(f"header declares {count} rows, found {len(rows)}", path=str(path))
    if count == 0:
        raise SchemaError("dataset has no rows", path=str(path))
    for i, r in enumerate(rows):
        if len(r) != dim + 1:
            raise SchemaError(f"row {i + 1} has {len(r)} fields, expected {dim + 1}", path=str(path))
    try:
        data = np.array(rows, dtype=np.float64)
    except ValueError as exc:
        raise SchemaError(f"non-numeric field: {exc}", path=str(path)) from exc
    if not np.all(np.isfinite(data[:, :dim])):
        raise SchemaError("coordinates must be finite", path=str(path))
    _check_occupancy(data[:, dim], path)
    return data[:, :dim], data[:, dim]


def write_grid(path, values, bbox):
    """Occupancy grid: one text header line, then little-endian float64 values, row-major.

    The header reads ``fuzzycsg-grid dims=<n0>x<n1>[x<n2>] bbox=<lo...>:<hi...>``.
    """
    values = np.asarray(values, dtype=np.float64)
    lo, hi = (np.asarray(b, dtype=np.float64) for b in bbox)
    if values.ndim != lo.shape[0] or lo.shape != hi.shape:
        raise SchemaError(f"grid of rank {values.ndim} does not match a {lo.shape[0]}D bbox", path=str(path))
    dims = "x".join(str(n) for n in values.shape)
    box = ",".join(_fmt(v) for v in lo) + ":" + ",".join(_fmt(v) for v in hi)
    with open(path, "wb") as fh:
        fh.write(f"{GRID_MAGIC} dims={dims} bbox={box}\n".encode("ascii"))
        fh.write(values.astype("<f8").tobytes(order="C"))


def read_grid(path):
    """Return ``(values, (lo, hi))`` from a grid file."""
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise ParseError(f"cannot read grid: {exc}", path=str(path)) from exc
    end = raw.find(b"\n")
    if end < 0:
        raise SchemaError("missing grid header", path=str(path))
    m = re.match(rf"^{GRID_MAGIC} dims=([\dx]+) bbox=([^:]+):(\S+)$", raw[:end].decode("ascii", "replace"))
    if not m:
        raise SchemaError("malformed grid header", path=str(path))
    dims = tuple(int(n) for n in m.group(1).split("x"))
    lo = np.array([float(v) for v in m.group(2).split(",")])
    hi = np.array([float(v) for v in m.group(3).split(",")])
    body = raw[end + 1 :]
    if len(body) != 8 * int(np.prod(dims)):
        raise SchemaError(f"grid body holds {len(body)} bytes, expected {8 * int(np.prod(dims))}", path=str(path))
    values = np.frombuffer(body, dtype="<f8").reshape(dims).astype(np.float64)
    return values, (lo, hi)


def occupancy_to_pixels(occ):
    """8-bit grayscale: ``round(255 * clamp(occ, 0, 1))``, halves rounded up."""
    occ = np.clip(np.asarray(occ, dtype=np.float64), 0.0, 1.0)
    return np.floor(255.0 * occ + 0.5).astype(np.uint8)


def write_pgm(path, pixels):
    """Binary PGM (``P5``, maxval 255); row 0 is the top of the image."""
    pixels = np.asarray(pixels)
    if pixels.ndim != 2 or pixels.dtype != np.uint8:
        raise SchemaError("PGM pixels must be a 2D uint8 array", path=str(path))
    h, w = pixels.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(pixels.tobytes(order="C"))


def read_pgm(path):
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise ParseError(f"cannot read image: {exc}", path=str(path)) from exc
    m = re.match(rb"^P5\s+(\d+)\s+(\d+)\s+255\s", raw)
    if not m:
        raise SchemaError("not a P5 graymap with maxval 255", path=str(path))
    w, h = int(m.group(1)), int(m.group(2))
    body = raw[m.end() :]
    if len(body) != w * h:
        raise SchemaError(f"image body holds {len(body)} bytes, expected {w * h}", path=str(path))
    return np.frombuffer(body, dtype=np.uint8).reshape(h, w).copy()


def write_history(path, losses):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["iteration", "loss"])
        for i, loss in enumerate(losses):
            writer.writerow([i, _fmt(loss)])


def read_history(path):
    try:
        with open(path, encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise ParseError(f"cannot read loss history: {exc}", path=str(path)) from exc
    if not rows or rows[0] != ["iteration", "loss"]:
        raise SchemaError("loss history must start with 'iteration,loss'", path=str(path))
    try:
        return np.array([float(r[1]) for r in rows[1:] if r])
    except (ValueError, IndexError) as exc:
        raise SchemaError(f"bad loss row: {exc}", path=str(path)) from exc


def write_occupancy_csv(path, points, occupancy):
    """Per-point evaluation output: coordinates then occupancy, with a column header."""
    points = np.asarray(points)
    names = ["x", "y", "z"][: points.shape[1]]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(names + ["occupancy"])
        for p, o in zip(points, occupancy):
            writer.writerow([_fmt(v) for v in p] + [_fmt(o)])
