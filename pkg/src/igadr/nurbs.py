"""Univariate B-spline / NURBS bases and refinement.

Only open (clamped) knot vectors are supported.  Refinement routines work in
homogeneous coordinates ``(w * P, w)`` so rational geometry is preserved, and
accept control arrays with arbitrary trailing dimensions: a 2D control net
of shape ``(m_b, l_b, 2)`` is refined along its first axis unchanged.
"""

from dataclasses import dataclass
from math import comb

import numpy as np

from . import kernels


class DomainError(ValueError):
    """Parameter outside the knot range."""


@dataclass(frozen=True, eq=False)
class KnotVector:
    knots: np.ndarray
    degree: int

    def __post_init__(self):
        k = np.asarray(self.knots, dtype=float).copy()
        k.setflags(write=False)
        object.__setattr__(self, "knots", k)
        p = int(self.degree)
        object.__setattr__(self, "degree", p)
        if p < 0:
            raise ValueError("degree must be nonnegative")
        if k.ndim != 1 or k.size < 2 * p + 2:
            raise ValueError(f"need at least {2 * p + 2} knots for degree {p}")
        if np.any(np.diff(k) < 0):
            raise ValueError("knots must be non-decreasing")
        if k[0] == k[-1]:
            raise ValueError("knot vector spans an empty interval")
        first = int(np.sum(k == k[0]))
        last = int(np.sum(k == k[-1]))
        if first != p + 1 or last != p + 1:
            raise ValueError(
                f"knot vector must be open: end knots repeated exactly {p + 1} times"
            )
        inner = k[p + 1 : -p - 1]
        if inner.size:
            _, counts = np.unique(inner, return_counts=True)
            if counts.max() > p + 1:
                raise ValueError("interior knot multiplicity exceeds degree + 1")

    def __eq__(self, other):
        return (
            isinstance(other, KnotVector)
            and self.degree == other.degree
            and np.array_equal(self.knots, other.knots)
        )

    __hash__ = None

    @classmethod
    def uniform(cls, degree, n_spans, a=0.0, b=1.0):
        inner = np.linspace(a, b, n_spans + 1)[1:-1]
        return cls(np.r_[[a] * (degree + 1), inner, [b] * (degree + 1)], degree)

    @property
    def p(self):
        return self.degree

    @property
    def n_basis(self):
        return self.knots.size - self.degree - 1

    @property
    def domain(self):
        return float(self.knots[0]), float(self.knots[-1])

    @property
    def breaks(self):
        return np.unique(self.knots)

    @property
    def spans(self):
        """Indices ``i`` of the nonempty intervals ``[k_i, k_{i+1})``."""
        k = self.knots
        idx = np.arange(self.degree, self.n_basis)
        return idx[k[idx + 1] > k[idx]]

    def multiplicity(self, x):
        return int(np.sum(self.knots == x))

    def check_domain(self, xs):
        xs = np.asarray(xs, dtype=float)
        a, b = self.domain
        if np.any(xs < a) or np.any(xs > b) or not np.all(np.isfinite(xs)):
            raise DomainError(f"parameter outside knot range [{a}, {b}]")
        return xs


@dataclass(frozen=True)
class BasisValues:
    """The ``p+1`` possibly nonzero functions at one parameter.

    ``values[k]`` holds the k-th derivative of functions ``span-p .. span``.
    """

    span: int
    values: np.ndarray

    @property
    def first(self):
        return self.span - (self.values.shape[1] - 1)

    @property
    def indices(self):
        return np.arange(self.first, self.span + 1)


def find_span(kv, xi):
    xi = float(kv.check_domain(xi))
    return int(kernels.find_spans(kv.knots, kv.degree, np.array([xi]))[0])


def bspline_basis(kv, xi, deriv_order=0):
    if deriv_order < 0 or deriv_order > kv.degree:
        raise ValueError(f"deriv_order must be in [0, {kv.degree}]")
    xi = float(kv.check_domain(xi))
    spans, ders = kernels.basis_ders(kv.knots, kv.degree, np.array([xi]), int(deriv_order))
    return BasisValues(int(spans[0]), ders[0])


def rationalize(ders, w_local):
    """Quotient-rule derivatives of ``B_i w_i / W`` from B-spline derivatives.

    ``ders`` has shape ``(..., n+1, p+1)``, ``w_local`` ``(..., p+1)``.
    """
    n = ders.shape[-2] - 1
    A = ders * w_local[..., None, :]
    W = A.sum(axis=-1)
    R = np.empty_like(ders)
    for k in range(n + 1):
        acc = A[..., k, :].copy()
        for j in range(1, k + 1):
            acc -= comb(k, j) * W[..., j, None] * R[..., k - j, :]
        R[..., k, :] = acc / W[..., 0, None]
    return R


def _check_weights(kv, weights):
    w = np.asarray(weights, dtype=float)
    if w.shape[0] != kv.n_basis:
        raise ValueError(f"expected {kv.n_basis} weights, got {w.shape[0]}")
    if np.any(w <= 0) or not np.all(np.isfinite(w)):
        raise ValueError("weights must be strictly positive")
    return w


def nurbs_basis(kv, weights, xi, deriv_order=0):
    w = _check_weights(kv, weights)
    b = bspline_basis(kv, xi, deriv_order)
    return BasisValues(b.span, rationalize(b.values, w[b.indices]))


def curve_eval(kv, weights, control_points, xs):
    """Evaluate a NURBS curve at many parameters (used for checks and tests)."""
    w = _check_weights(kv, weights)
    P = np.asarray(control_points, dtype=float)
    xs = kv.check_domain(np.atleast_1d(xs))
    spans, ders = kernels.basis_ders(kv.knots, kv.degree, xs, 0)
    idx = (spans - kv.degree)[:, None] + np.arange(kv.degree + 1)
    bw = ders[:, 0, :] * w[idx]
    num = np.einsum("na,na...->n...", bw, P[idx])
    W = bw.sum(axis=1)
    return num / W.reshape((-1,) + (1,) * (num.ndim - 1))


# --------------------------------------------------------------------------
# refinement
# --------------------------------------------------------------------------


def _to_homogeneous(weights, control_points):
    w = np.asarray(weights, dtype=float)
    P = np.asarray(control_points, dtype=float)
    if P.shape[: w.ndim] != w.shape:
        raise ValueError("control points and weights disagree in shape")
    extra = P.ndim - w.ndim
    wb = w.reshape(w.shape + (1,) * extra)
    return np.concatenate([(P * wb).reshape(w.shape + (-1,)), w[..., None]], axis=-1), P.shape


def _from_homogeneous(H, pshape):
    w = H[..., -1]
    flat = H[..., :-1] / w[..., None]
    return w, flat.reshape(w.shape + pshape[w.ndim :])


def knot_insert(kv, weights, control_points, xi_new):
    """Insert one knot (Boehm's algorithm) along the first axis."""
    _check_weights(kv, weights)
    p = kv.degree
    a, b = kv.domain
    if not a < xi_new < b:
        raise ValueError("inserted knot must lie strictly inside the knot range")
    if kv.multiplicity(xi_new) + 1 > p:
        raise ValueError(f"knot {xi_new} would exceed multiplicity {p}")
    H, pshape = _to_homogeneous(weights, control_points)
    k = kv.knots
    s = int(kernels.find_spans_np(k, p, np.array([float(xi_new)]))[0])
    n = kv.n_basis
    Q = np.empty((n + 1,) + H.shape[1:])
    Q[: s - p + 1] = H[: s - p + 1]
    Q[s + 1 :] = H[s:]
    for i in range(s - p + 1, s + 1):
        alpha = (xi_new - k[i]) / (k[i + p] - k[i])
        Q[i] = alpha * H[i] + (1.0 - alpha) * H[i - 1]
    new_kv = KnotVector(np.insert(k, s + 1, xi_new), p)
    w, P = _from_homogeneous(Q, pshape)
    return new_kv, w, P


def _greville(kv):
    p, k = kv.degree, kv.knots
    if p == 0:
        return 0.5 * (k[:-1] + k[1:])
    return np.array([k[i + 1 : i + p + 1].mean() for i in range(kv.n_basis)])


def _collocation_matrix(kv, xs):
    spans, ders = kernels.basis_ders_np(kv.knots, kv.degree, xs, 0)
    B = np.zeros((xs.size, kv.n_basis))
    rows = np.repeat(np.arange(xs.size), kv.degree + 1)
    cols = ((spans - kv.degree)[:, None] + np.arange(kv.degree + 1)).ravel()
    B[rows, cols] = ders[:, 0, :].ravel()
    return B


def degree_elevate(kv, weights, control_points):
    """Raise the degree by one, every knot gaining one multiplicity.

    The homogeneous curve lies in the elevated spline space, so collocation at
    the Greville abscissae of that space (Schoenberg-Whitney holds) recovers
    its coefficients exactly up to rounding.
    """
    _check_weights(kv, weights)
    breaks, counts = np.unique(kv.knots, return_counts=True)
    new_kv = KnotVector(np.repeat(breaks, counts + 1), kv.degree + 1)
    H, pshape = _to_homogeneous(weights, control_points)
    g = _greville(new_kv)
    old = _collocation_matrix(kv, g)
    new = _collocation_matrix(new_kv, g)
    rhs = old @ H.reshape(H.shape[0], -1)
    Q = np.linalg.solve(new, rhs).reshape((new_kv.n_basis,) + H.shape[1:])
    w, P = _from_homogeneous(Q, pshape)
    return new_kv, w, P


def insert_knots(kv, weights, control_points, xs):
    for x in xs:
        kv, weights, control_points = knot_insert(kv, weights, control_points, float(x))
    return kv, weights, control_points


def k_refine(kv, weights, control_points, target_degree, n_subdivisions):
    """Elevate to ``target_degree`` first, then split every span uniformly.

    The order matters: elevating after insertion would repeat every new knot
    and leave only C^0 continuity across those lines.
    """
    if n_subdivisions < 1:
        raise ValueError("n_subdivisions must be >= 1")
    if target_degree < kv.degree:
        raise ValueError("target_degree is below the current degree")
    for _ in range(target_degree - kv.degree):
        kv, weights, control_points = degree_elevate(kv, weights, control_points)
    a, b = kv.domain
    new = a + (b - a) * np.arange(1, n_subdivisions) / n_subdivisions
    # knots already present (e.g. the quarter breaks of a circle) are kept as is
    new = [x for x in new if not np.any(np.isclose(kv.knots, x, rtol=0, atol=1e-14))]
    return insert_knots(kv, weights, control_points, new)
