"""The numba kernels and their numpy twins must agree."""

import numpy as np
import pytest

from igadr import _accel, kernels
from igadr.geometry import Mesh, disk

pytestmark = pytest.mark.skipif(not _accel.HAVE_NUMBA, reason="numba not installed")


@pytest.fixture(scope="module")
def setup():
    rng = np.random.default_rng(7)
    mesh = Mesh.from_geometry(disk((0.2, 0.0), 1.0), 4, 8)
    sp = mesh.space
    args = (sp.kv_u.knots, sp.kv_v.knots, mesh.p, mesh.q, mesh.mb, sp.w_flat)
    xi, eta = rng.random(2000), rng.random(2000)
    xi[:3], eta[:3] = (0.0, 1.0, 0.5), (1.0, 0.0, 0.5)
    return mesh, args, xi, eta, rng


def test_find_spans_and_ders(setup):
    mesh, args, xi, _, _ = setup
    k, p = args[0], args[2]
    np.testing.assert_array_equal(kernels.find_spans_nb(k, p, xi), kernels.find_spans_np(k, p, xi))
    s1, d1 = kernels.basis_ders_nb(k, p, xi, 2)
    s2, d2 = kernels.basis_ders_np(k, p, xi, 2)
    np.testing.assert_array_equal(s1, s2)
    np.testing.assert_allclose(d1, d2, rtol=0, atol=1e-10)


def test_field_and_basis(setup):
    mesh, args, xi, eta, rng = setup
    c = rng.random((2, mesh.ndof))
    f1 = kernels.eval_field_nb(*args, c, xi, eta)
    np.testing.assert_allclose(f1, kernels.eval_field_np(*args, c, xi, eta), atol=1e-13)
    i1, R1 = kernels.eval_basis_nb(*args, xi, eta)
    i2, R2 = kernels.eval_basis_np(*args, xi, eta)
    np.testing.assert_array_equal(i1, i2)
    np.testing.assert_allclose(R1, R2, atol=1e-14)
    np.testing.assert_allclose(kernels.gather_dot_nb(i1, R1, c), f1, atol=1e-13)
    np.testing.assert_allclose(kernels.gather_dot_np(i1, R1, c), f1, atol=1e-13)


def test_surface_and_inversion(setup):
    mesh, _, xi, eta, rng = setup
    g = mesh.geometry
    ga = g.kernel_args() + (g.P_flat,)
    X1, J1 = kernels.surface_eval_nb(*ga, xi, eta)
    X2, J2 = kernels.surface_eval_np(*ga, xi, eta)
    np.testing.assert_allclose(X1, X2, atol=1e-14)
    np.testing.assert_allclose(J1, J2, atol=1e-12)
    seeds = np.full((xi.size, 2), 0.5)
    X = np.ascontiguousarray(X1[3:])
    seeds = np.ascontiguousarray(seeds[3:])
    u1, s1 = kernels.invert_points_nb(*ga, X, seeds, 1e-12, 50, 30)
    u2, s2 = kernels.invert_points_np(*ga, X, seeds, 1e-12, 50, 30)
    np.testing.assert_array_equal(s1, s2)
    np.testing.assert_allclose(u1, u2, atol=1e-10)


def test_element_matrices_and_loads(setup):
    mesh, _, _, _, rng = setup
    w = np.ascontiguousarray(mesh.wdet)
    np.testing.assert_allclose(kernels.element_mass_nb(mesh.R, w), kernels.element_mass_np(mesh.R, w),
                               atol=1e-15)
    np.testing.assert_allclose(kernels.element_stiffness_nb(mesh.grad, w),
                               kernels.element_stiffness_np(mesh.grad, w), atol=1e-12)
    vals = rng.random((2,) + w.shape)
    np.testing.assert_allclose(kernels.element_load_nb(w, vals, mesh.R, mesh.dofs, mesh.ndof),
                               kernels.element_load_np(w, vals, mesh.R, mesh.dofs, mesh.ndof), atol=1e-14)
    idx = rng.integers(0, 50, 1000)
    v = rng.random(1000)
    np.testing.assert_allclose(kernels.scatter_add_nb(idx, v, 50), kernels.scatter_add_np(idx, v, 50),
                               atol=1e-12)


def test_set_backend_switches_dispatch():
    prev = _accel.set_backend("numpy")
    try:
        assert _accel.backend() == "numpy" and not _accel.use_numba()
    finally:
        _accel.set_backend(prev)
    with pytest.raises(ValueError):
        _accel.set_backend("cuda")


def test_thread_cap(monkeypatch):
    import numba
    before = numba.get_num_threads()
    monkeypatch.setenv("IGA_THREADS", "1")
    _accel.apply_thread_cap()
    try:
        assert numba.get_num_threads() == 1
    finally:
        numba.set_num_threads(before)
    monkeypatch.setenv("IGA_THREADS", "many")
    with pytest.raises(ValueError):
        _accel.apply_thread_cap()
