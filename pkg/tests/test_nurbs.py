import numpy as np
import pytest
from hypothesis import given, strategies as st

from igadr.nurbs import (
    DomainError, KnotVector, bspline_basis, curve_eval, degree_elevate, find_span,
    k_refine, knot_insert, nurbs_basis,
)

# nonuniform knot vector with a repeated interior knot
KV = KnotVector([0, 0, 0, 1, 2, 3, 4, 4, 5, 5, 5], 2)


def quarter_circle():
    kv = KnotVector([0, 0, 0, 1, 1, 1], 2)
    w = np.array([1.0, np.sqrt(0.5), 1.0])
    P = np.array([[1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    return kv, w, P


def test_find_span_hand_value():
    assert find_span(KV, 2.5) == 4


def test_basis_hand_values():
    b = bspline_basis(KV, 2.5)
    np.testing.assert_allclose(b.values[0], [1 / 8, 6 / 8, 1 / 8], rtol=0, atol=1e-15)
    np.testing.assert_array_equal(b.indices, [2, 3, 4])


def test_find_span_right_end_is_last_nonempty():
    assert find_span(KV, 5.0) == KV.n_basis - 1


def test_outside_domain_raises():
    with pytest.raises(DomainError):
        find_span(KV, 5.0001)
    with pytest.raises(DomainError):
        bspline_basis(KV, -0.1)


def test_rejects_non_open_knots():
    with pytest.raises(ValueError):
        KnotVector([0, 0, 1, 2, 2, 2], 2)


@given(st.integers(1, 6), st.integers(1, 7), st.floats(0, 1))
def test_partition_of_unity(p, n, xi):
    kv = KnotVector.uniform(p, n)
    b = bspline_basis(kv, xi, deriv_order=1)
    assert abs(b.values[0].sum() - 1.0) <= 1e-13
    assert abs(b.values[1].sum()) <= 1e-11
    assert np.all(b.values[0] >= -1e-15)


@given(st.floats(0.05, 4.95))
def test_nurbs_partition_of_unity(xi):
    w = np.linspace(0.5, 2.0, KV.n_basis)
    b = nurbs_basis(KV, w, xi)
    assert abs(b.values[0].sum() - 1.0) <= 1e-13


@given(st.floats(0.01, 0.99))
def test_nurbs_derivative_matches_finite_difference(xi):
    kv = KnotVector([0, 0, 0, 0.5, 1, 1, 1], 2)
    w = np.array([1.0, 0.7, 1.3, 1.0])
    eps = 1e-6
    d = nurbs_basis(kv, w, xi, 1).values[1]
    hi = nurbs_basis(kv, w, xi + eps).values[0]
    lo = nurbs_basis(kv, w, xi - eps).values[0]
    same = find_span(kv, xi + eps) == find_span(kv, xi - eps)
    if same:
        np.testing.assert_allclose(d, (hi - lo) / (2 * eps), rtol=0, atol=1e-6)


def test_quarter_circle_is_exact():
    kv, w, P = quarter_circle()
    xs = np.linspace(0, 1, 1000)
    r = np.linalg.norm(curve_eval(kv, w, P, xs), axis=1)
    assert np.max(np.abs(r - 1)) < 1e-14


@pytest.mark.parametrize("refine", [
    lambda kv, w, P: knot_insert(kv, w, P, 0.3),
    degree_elevate,
    lambda kv, w, P: k_refine(kv, w, P, 5, 7),
])
def test_refinement_preserves_curve(refine):
    kv, w, P = quarter_circle()
    kv2, w2, P2 = refine(kv, w, P)
    xs = np.linspace(0, 1, 401)
    assert np.max(np.abs(curve_eval(kv2, w2, P2, xs) - curve_eval(kv, w, P, xs))) <= 1e-12


def test_k_refine_keeps_maximal_continuity():
    kv, w, P = quarter_circle()
    kv2, _, _ = k_refine(kv, w, P, 4, 4)
    assert kv2.degree == 4
    np.testing.assert_allclose(kv2.knots[5:-5], [0.25, 0.5, 0.75])


def test_knot_insert_multiplicity_guard():
    kv = KnotVector([0, 0, 0, 0.5, 0.5, 1, 1, 1], 2)
    with pytest.raises(ValueError):
        knot_insert(kv, np.ones(5), np.zeros((5, 2)), 0.5)
