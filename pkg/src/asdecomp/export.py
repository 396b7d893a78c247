"""CSV tables and legacy-VTK point fields.

Floats are written with 17 significant digits so that files round-trip
exactly and reruns can be compared byte for byte.
"""

from __future__ import annotations

import csv
import io
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .mesh import Mesh


def fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return format(x, ".17g")
    return str(x)


def csv_text(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        if len(row) != len(header):
            raise ValueError(f"row {row!r} does not match header {header!r}")
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(csv_text(header, rows), encoding="utf-8")
    return path


def write_fields_csv(path: Path, mesh: Mesh, fields: dict[str, np.ndarray]) -> Path:
    """One row per vertex: ``x, y`` followed by one column per field."""
    names = list(fields)
    cols = [np.asarray(fields[k], dtype=float) for k in names]
    for name, c in zip(names, cols):
        if c.shape != (mesh.n_vertices,):
            raise ValueError(f"field {name!r} has shape {c.shape}, expected ({mesh.n_vertices},)")
    rows = (
        [mesh.vertices[i, 0], mesh.vertices[i, 1]] + [c[i] for c in cols]
        for i in range(mesh.n_vertices)
    )
    return write_csv(path, ["x", "y"] + names, rows)


def vtk_text(mesh: Mesh, fields: dict[str, np.ndarray], title: str = "asdecomp fields") -> str:
    """Legacy ASCII VTK unstructured grid with one scalar point field per entry."""
    n, nt = mesh.n_vertices, mesh.n_triangles
    out = [
        "# vtk DataFile Version 3.0",
        title.replace("\n", " ")[:255],
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {n} double",
    ]
    out += [f"{fmt(x)} {fmt(y)} 0" for x, y in mesh.vertices]
    out.append(f"CELLS {nt} {4 * nt}")
    out += [f"3 {a} {b} {c}" for a, b, c in mesh.triangles]
    out.append(f"CELL_TYPES {nt}")
    out += ["5"] * nt
    out.append(f"POINT_DATA {n}")
    for name, values in fields.items():
        v = np.asarray(values, dtype=float)
        if v.shape != (n,):
            raise ValueError(f"field {name!r} has shape {v.shape}, expected ({n},)")
        out.append(f"SCALARS {name} double 1")
        out.append("LOOKUP_TABLE default")
        out += [fmt(x) for x in v]
    return "\n".join(out) + "\n"


def write_vtk(path: Path, mesh: Mesh, fields: dict[str, np.ndarray], title: str = "asdecomp fields") -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(vtk_text(mesh, fields, title), encoding="utf-8")
    return path


def loglog_slope(x: Sequence[float], y: Sequence[float]) -> float:
    """Least-squares slope of ``log y`` against ``log x``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 2 or np.any(x <= 0) or np.any(y <= 0):
        return float("nan")
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])
