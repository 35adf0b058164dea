"""Field snapshots as legacy VTK structured grids with a CSV twin."""

from pathlib import Path

import numpy as np

from .geometry import surface_eval
from .transport import evaluate_param

FMT = "%.12e"
COMPONENTS = ("u", "v")


def sample_grid(mesh, n):
    """``n x n`` uniform parametric grid (u fastest) and its physical image."""
    if n < 2:
        raise ValueError("sample grid needs at least 2 points per direction")
    u0, u1, v0, v1 = mesh.geometry.param_box
    su, sv = np.linspace(u0, u1, n), np.linspace(v0, v1, n)
    U, V = np.meshgrid(su, sv)
    uv = np.column_stack([U.ravel(), V.ravel()])
    return uv, surface_eval(mesh.geometry, uv[:, 0], uv[:, 1])


def sample_fields(coeffs, mesh, n):
    """``(points (n*n, 2), values (ncomp, n*n))`` on the sample grid."""
    uv, X = sample_grid(mesh, n)
    return X, evaluate_param(mesh, np.atleast_2d(coeffs), uv)


def _fmt(values):
    return " ".join(FMT % v for v in values)


def format_vtk(points, values, n, title="igadr snapshot"):
    npts = points.shape[0]
    lines = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET STRUCTURED_GRID",
             f"DIMENSIONS {n} {n} 1", f"POINTS {npts} double"]
    lines += [_fmt((x, y, 0.0)) for x, y in points]
    lines.append(f"POINT_DATA {npts}")
    for name, comp in zip(COMPONENTS, values):
        lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
        lines += [FMT % v for v in comp]
    return "\n".join(lines) + "\n"


def format_csv(points, values):
    names = ["x", "y"] + list(COMPONENTS[: len(values)])
    rows = np.column_stack([points, np.asarray(values).T])
    return ",".join(names) + "\n" + "".join(",".join(FMT % v for v in row) + "\n" for row in rows)


def write_snapshot(state, mesh, sample_n, path):
    """Write ``path`` (``.vtk`` added if missing) and a ``.csv`` twin.

    Scalar problems get a single ``u`` field and no ``v`` column.
    Returns the two paths.
    """
    path = Path(path)
    if path.suffix != ".vtk":
        path = path.with_name(path.name + ".vtk")
    coeffs = state.U if hasattr(state, "U") else state
    t = getattr(state, "t", None)
    points, values = sample_fields(coeffs, mesh, sample_n)
    title = "igadr snapshot" if t is None else f"igadr snapshot t={t!r}"
    csv_path = path.with_suffix(".csv")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(format_vtk(points, values, sample_n, title), encoding="ascii")
    csv_path.write_text(format_csv(points, values), encoding="ascii")
    return path, csv_path


def read_vtk_scalars(path):
    """Parse a file written by :func:`write_snapshot`: ``(points, {name: values})``."""
    tokens = Path(path).read_text(encoding="ascii").split("\n")
    i = next(k for k, line in enumerate(tokens) if line.startswith("POINTS"))
    npts = int(tokens[i].split()[1])
    pts = np.loadtxt(tokens[i + 1: i + 1 + npts]).reshape(npts, 3)[:, :2]
    fields = {}
    k = i + 1 + npts
    while k < len(tokens):
        if tokens[k].startswith("SCALARS"):
            name = tokens[k].split()[1]
            fields[name] = np.array([float(s) for s in tokens[k + 2: k + 2 + npts]])
            k += 2 + npts
        else:
            k += 1
    return pts, fields
