from pathlib import Path

import numpy as np
import pytest

from igadr.cli import main
from igadr.geometry import Mesh, rectangle
from igadr.output import format_vtk, read_vtk_scalars, sample_grid, write_snapshot
from igadr.stepping import FieldState

DATA = Path(__file__).parent / "data"


def unit_square_state(ncomp=2):
    mesh = Mesh.from_geometry(rectangle(0, 1, 0, 1), 1, 1)
    # bilinear coefficients of u = x + 2y and v = xy
    U = np.array([[0, 1, 2, 3], [0, 0, 0, 1]], dtype=float)[:ncomp]
    return mesh, FieldState(U, 0.5)


def test_two_by_two_sample_is_the_corners(tmp_path):
    mesh, state = unit_square_state()
    vtk, csv = write_snapshot(state, mesh, 2, tmp_path / "snap")
    lines = vtk.read_text().splitlines()
    assert lines[0] == "# vtk DataFile Version 3.0"
    assert "DATASET STRUCTURED_GRID" in lines
    assert "DIMENSIONS 2 2 1" in lines
    pts, fields = read_vtk_scalars(vtk)
    np.testing.assert_array_equal(pts, [[0, 0], [1, 0], [0, 1], [1, 1]])
    np.testing.assert_allclose(fields["u"], [0, 1, 2, 3], atol=1e-15)
    np.testing.assert_allclose(fields["v"], [0, 0, 0, 1], atol=1e-15)
    rows = csv.read_text().splitlines()
    assert rows[0] == "x,y,u,v"
    assert rows[4] == ",".join(["1.000000000000e+00"] * 2 + ["3.000000000000e+00", "1.000000000000e+00"])


def test_scalar_field_has_no_v_column(tmp_path):
    mesh, state = unit_square_state(ncomp=1)
    vtk, csv = write_snapshot(state, mesh, 3, tmp_path / "s.vtk")
    assert vtk.name == "s.vtk" and csv.name == "s.csv"
    assert "SCALARS v" not in vtk.read_text()
    assert csv.read_text().splitlines()[0] == "x,y,u"


def test_sample_grid_is_u_fastest():
    mesh = Mesh.from_geometry(rectangle(0, 2, 0, 1), 2, 2)
    uv, X = sample_grid(mesh, 3)
    np.testing.assert_allclose(X[:3], [[0, 0], [1, 0], [2, 0]])
    with pytest.raises(ValueError):
        sample_grid(mesh, 1)


def test_vtk_number_format():
    text = format_vtk(np.array([[0.1, 0.2]]), np.array([[1 / 3]]), 1)
    assert "3.333333333333e-01" in text.splitlines()


def test_golden_snapshot(tmp_path):
    assert main(["simulate", "--config", str(DATA / "golden.cfg"), "--out", str(tmp_path)]) == 0
    for suffix in ("vtk", "csv"):
        new = (tmp_path / f"final.{suffix}").read_text().splitlines()
        old = (DATA / f"golden_final.{suffix}").read_text().splitlines()
        assert len(new) == len(old)
        for a, b in zip(new, old):
            try:
                va = np.array(a.replace(",", " ").split(), dtype=float)
                vb = np.array(b.replace(",", " ").split(), dtype=float)
            except ValueError:
                assert a == b
                continue
            np.testing.assert_allclose(va, vb, rtol=1e-10, atol=1e-12)
