"""Semi-Lagrangian transport: characteristic tracing, host search, projection loads."""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import kernels
from .assembly import NumericalError, load_vector
from .geometry import invert


class TransportError(RuntimeError):
    pass


def _velocity(velocity, x, t):
    a = np.asarray(velocity(x, t), dtype=float)
    a = np.broadcast_to(a, x.shape)
    if not np.all(np.isfinite(a)):
        bad = np.argwhere(~np.isfinite(a))[0][0]
        raise NumericalError(f"non-finite velocity at t={t}", tuple(x[bad]))
    return a


def trace_departure_rk3(x, velocity, t_arrival, dt):
    """Foot of the characteristic through ``x`` at ``t_arrival``, ``dt`` earlier.

    Three-stage strong-stability-preserving Runge-Kutta run backwards in time.
    Stage abscissae are ``t_arrival``, ``t_arrival - dt`` and
    ``t_arrival - dt/2``; for time-independent fields the order is immaterial.
    ``velocity(points, t)`` maps ``(n, 2)`` points to ``(n, 2)`` velocities.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    x = np.asarray(x, dtype=float)
    pts = x.reshape(-1, 2)
    k1 = pts - dt * _velocity(velocity, pts, t_arrival)
    k2 = 0.75 * pts + 0.25 * (k1 - dt * _velocity(velocity, k1, t_arrival - dt))
    y = pts / 3.0 + (2.0 / 3.0) * (k2 - dt * _velocity(velocity, k2, t_arrival - 0.5 * dt))
    return y.reshape(x.shape)


@dataclass
class DeparturePoints:
    """Feet of the characteristics for every Gauss point of a mesh."""

    points: np.ndarray  # (ne, nq, 2) physical, as traced
    param: np.ndarray  # (ne, nq, 2) after inversion and clamping
    host: np.ndarray  # (ne, nq) element index of the parametric point
    clamped: np.ndarray  # (ne, nq) bool: the trace left the domain
    _basis: tuple = field(default=None, repr=False, compare=False)
    _operator: object = field(default=None, repr=False, compare=False)

    @property
    def n_clamped(self):
        return int(self.clamped.sum())

    def basis(self, mesh):
        """Support indices and basis values at the feet, computed once."""
        if self._basis is None:
            sp = mesh.space
            uv = self.param.reshape(-1, 2)
            self._basis = kernels.eval_basis(sp.kv_u.knots, sp.kv_v.knots, mesh.p, mesh.q, mesh.mb,
                                             sp.w_flat, np.ascontiguousarray(uv[:, 0]),
                                             np.ascontiguousarray(uv[:, 1]))
        return self._basis

    def operator(self, mesh):
        """Sparse ``P`` with ``sl_rhs(c) = P @ c`` when no foot left the domain.

        Worth building only when the same feet are reused over many steps.
        """
        if self._operator is None:
            idx, R = self.basis(mesh)
            B = sp.csr_matrix((R.ravel(), idx.ravel(), np.arange(0, R.size + 1, R.shape[1])),
                              shape=(R.shape[0], mesh.ndof))
            self._operator = (test_matrix(mesh).T @ B).tocsr()
        return self._operator


def host_elements(mesh, uv):
    ku, kv = mesh.space.kv_u, mesh.space.kv_v
    su = kernels.find_spans(ku.knots, ku.degree, np.ascontiguousarray(uv[:, 0]))
    sv = kernels.find_spans(kv.knots, kv.degree, np.ascontiguousarray(uv[:, 1]))
    return su, sv


def locate(mesh, X, seeds=None):
    """Invert physical points; returns ``(uv, clamped, host)``."""
    X = np.ascontiguousarray(np.asarray(X, dtype=float).reshape(-1, 2))
    if seeds is not None:
        seeds = np.ascontiguousarray(np.asarray(seeds, dtype=float).reshape(-1, 2))
    try:
        uv, status = invert(mesh.geometry, X, seeds)
    except RuntimeError as exc:
        raise TransportError(str(exc)) from exc
    su, sv = host_elements(mesh, uv)
    return uv, status == kernels.CLAMPED, mesh.element_of(su, sv)


def evaluate_param(mesh, coeffs, uv):
    """Field values at parametric points from the locally supported coefficients."""
    c = np.atleast_2d(np.asarray(coeffs, dtype=float))
    sp = mesh.space
    return kernels.eval_field(sp.kv_u.knots, sp.kv_v.knots, mesh.p, mesh.q, mesh.mb, sp.w_flat,
                              np.ascontiguousarray(c), np.ascontiguousarray(uv[:, 0]),
                              np.ascontiguousarray(uv[:, 1]))


def support_indices(mesh, uv):
    """The ``(p+1)(q+1)`` global indices an evaluation at ``uv`` reads."""
    su, sv = host_elements(mesh, np.atleast_2d(uv))
    return kernels.local_indices(su, sv, mesh.p, mesh.q, mesh.mb).reshape(len(su), -1)


def locate_and_evaluate(coeffs, mesh, departure, seed=None):
    """Value of ``sum_l c_l N_l`` at physical point(s), clamping outside points."""
    X = np.asarray(departure, dtype=float)
    uv, _, _ = locate(mesh, X, seed)
    vals = evaluate_param(mesh, coeffs, uv)
    if np.ndim(coeffs) == 1:
        vals = vals[0]
    return vals[..., 0] if X.ndim == 1 else vals


def departure_points(mesh, velocity, t_arrival, dt):
    """Trace every Gauss point back by ``dt`` and locate the feet."""
    if velocity is None:
        ne, nq = mesh.wdet.shape
        return DeparturePoints(mesh.points, mesh.param, np.repeat(np.arange(ne), nq).reshape(ne, nq),
                               np.zeros((ne, nq), bool))
    Y = trace_departure_rk3(mesh.points, velocity, t_arrival, dt)
    uv, clamped, host = locate(mesh, Y, mesh.param)
    shape = mesh.wdet.shape
    return DeparturePoints(Y, uv.reshape(shape + (2,)), host.reshape(shape), clamped.reshape(shape))


def values_at_departure(mesh, coeffs, dep, exterior=None):
    """``(ncomp, ne, nq)`` field values at the feet.

    A foot outside the domain takes the value at its clamped boundary image.
    With a reference field ``exterior(points)`` (an exact solution, say) the
    increment ``exterior(Y) - exterior(P(Y))`` between the foot ``Y`` and that
    image ``P(Y)`` is added, which extends the discrete field outward while
    keeping its own error, so multistep combinations still cancel it.
    """
    c = np.ascontiguousarray(np.atleast_2d(coeffs), dtype=float)
    idx, R = dep.basis(mesh)
    vals = kernels.gather_dot(idx, R, c)
    if exterior is not None and dep.clamped.any():
        mask = dep.clamped.ravel()
        vals[:, mask] += exterior_increment(mesh, exterior, dep.points.reshape(-1, 2)[mask],
                                            dep.param.reshape(-1, 2)[mask], c.shape[0])
    return vals.reshape((c.shape[0],) + dep.clamped.shape)


def test_matrix(mesh):
    """``Q[(k, g), m] = w_kg |J_kg| N_m(x_kg)``, so ``Q.T @ vals`` is a load vector."""
    Q = getattr(mesh, "_test_matrix", None)
    if Q is None:
        ne, nq, nl = mesh.R.shape
        data = (mesh.R * mesh.wdet[:, :, None]).ravel()
        cols = np.repeat(mesh.dofs[:, None, :], nq, axis=1).ravel()
        Q = sp.csr_matrix((data, cols, np.arange(0, data.size + 1, nl)), shape=(ne * nq, mesh.ndof))
        mesh._test_matrix = Q
    return Q


def exterior_increment(mesh, exterior, Y, uv, ncomp):
    P, _ = kernels.surface_eval(*mesh.geometry.kernel_args(), mesh.geometry.P_flat,
                                np.ascontiguousarray(uv[:, 0]), np.ascontiguousarray(uv[:, 1]))
    inc = np.asarray(exterior(Y), dtype=float) - np.asarray(exterior(P), dtype=float)
    return inc.reshape(ncomp, -1)


def sl_rhs(mesh, coeffs, dep, exterior=None, reuse=False):
    """Projection loads ``H_m = sum_k sum_g w |J| u_h(Y_kg) N_m(x_kg)``.

    With ``reuse`` the map from coefficients to loads is assembled once and
    kept on ``dep``; only the boundary increments are recomputed.
    """
    c = np.asarray(coeffs, dtype=float)
    if dep is None:
        raise ValueError("departure points are required")
    if not reuse:
        out = load_vector(mesh, values_at_departure(mesh, c, dep, exterior))
        return out[0] if c.ndim == 1 else out
    c2 = np.atleast_2d(c)
    out = (dep.operator(mesh) @ c2.T).T
    if exterior is not None and dep.clamped.any():
        mask = dep.clamped.ravel()
        inc = exterior_increment(mesh, exterior, dep.points.reshape(-1, 2)[mask],
                                 dep.param.reshape(-1, 2)[mask], c2.shape[0])
        out += (test_matrix(mesh)[mask].T @ inc.T).T
    return out[0] if c.ndim == 1 else out
