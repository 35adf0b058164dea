"""Tensor-product NURBS patches, meshes and the parent -> physical map chain."""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import kernels
from .nurbs import KnotVector, k_refine
from .quadrature import tensor_rule


class GeometryError(ValueError):
    """Degenerate or inconsistent geometry."""


class InversionError(RuntimeError):
    def __init__(self, points):
        self.points = np.atleast_2d(points)
        super().__init__(f"point inversion did not converge for {len(self.points)} point(s), "
                         f"first {self.points[0].tolist()}")


@dataclass(frozen=True, eq=False)
class Patch:
    """Single NURBS patch; ``weights[i, j]`` and ``control_points[i, j]``.

    Flat arrays follow the global numbering ``m = i + j * m_b``.
    """

    kv_u: KnotVector
    kv_v: KnotVector
    weights: np.ndarray
    control_points: np.ndarray
    w_flat: np.ndarray = field(init=False, repr=False)
    P_flat: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        P = np.asarray(self.control_points, dtype=float)
        shape = (self.kv_u.n_basis, self.kv_v.n_basis)
        if w.shape != shape or P.shape != shape + (2,):
            raise GeometryError(f"control net must have shape {shape}")
        if np.any(w <= 0):
            raise GeometryError("weights must be strictly positive")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "control_points", P)
        object.__setattr__(self, "w_flat", np.ascontiguousarray(w.T).ravel())
        object.__setattr__(self, "P_flat", np.ascontiguousarray(P.transpose(1, 0, 2)).reshape(-1, 2))

    @property
    def degrees(self):
        return self.kv_u.degree, self.kv_v.degree

    @property
    def shape(self):
        return self.kv_u.n_basis, self.kv_v.n_basis

    @property
    def ndof(self):
        return self.kv_u.n_basis * self.kv_v.n_basis

    @property
    def diameter(self):
        lo = self.control_points.reshape(-1, 2).min(axis=0)
        hi = self.control_points.reshape(-1, 2).max(axis=0)
        return float(np.hypot(*(hi - lo)))

    @property
    def param_box(self):
        return self.kv_u.domain + self.kv_v.domain

    def kernel_args(self):
        return (self.kv_u.knots, self.kv_v.knots, self.kv_u.degree, self.kv_v.degree,
                self.kv_u.n_basis, self.w_flat)

    def refine(self, degree, n_u, n_v=None):
        """k-refinement in both directions (elevate, then insert)."""
        n_v = n_u if n_v is None else n_v
        kvu, w, P = k_refine(self.kv_u, self.weights, self.control_points, degree, n_u)
        wt, Pt = w.T, P.transpose(1, 0, 2)
        kvv, wt, Pt = k_refine(self.kv_v, wt, Pt, degree, n_v)
        return Patch(kvu, kvv, wt.T, Pt.transpose(1, 0, 2))


# --------------------------------------------------------------------------
# maps
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Element:
    index: int
    span_u: int
    span_v: int
    u0: float
    u1: float
    v0: float
    v1: float

    @property
    def scale(self):
        return 0.25 * (self.u1 - self.u0) * (self.v1 - self.v0)


def parent_to_param(element, xi_bar, eta_bar):
    u0, u1, v0, v1 = element.u0, element.u1, element.v0, element.v1
    xi = 0.5 * ((u1 - u0) * np.asarray(xi_bar) + (u1 + u0))
    eta = 0.5 * ((v1 - v0) * np.asarray(eta_bar) + (v1 + v0))
    return xi, eta


def _check_params(patch, xi, eta):
    xi = patch.kv_u.check_domain(np.atleast_1d(xi))
    eta = patch.kv_v.check_domain(np.atleast_1d(eta))
    xi, eta = np.broadcast_arrays(xi, eta)
    return np.ascontiguousarray(xi, dtype=float).ravel(), np.ascontiguousarray(eta, dtype=float).ravel()


def surface_eval(patch, xi, eta):
    """Physical point(s) ``S(xi, eta)``; scalar input gives shape ``(2,)``."""
    scalar = np.ndim(xi) == 0 and np.ndim(eta) == 0
    u, v = _check_params(patch, xi, eta)
    pts, _ = kernels.surface_eval(*patch.kernel_args(), patch.P_flat, u, v)
    return pts[0] if scalar else pts


def surface_jacobian(patch, xi, eta, check=True):
    """Jacobian ``[[x_xi, x_eta], [y_xi, y_eta]]`` and its determinant."""
    scalar = np.ndim(xi) == 0 and np.ndim(eta) == 0
    u, v = _check_params(patch, xi, eta)
    _, jac = kernels.surface_eval(*patch.kernel_args(), patch.P_flat, u, v)
    det = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
    if check and np.any(det <= 0):
        bad = int(np.argmin(det))
        raise GeometryError(f"nonpositive Jacobian determinant {det[bad]:.3e} at "
                            f"({u[bad]:.6g}, {v[bad]:.6g})")
    if scalar:
        return jac[0], float(det[0])
    return jac, det


def _grid_seeds(patch, X, n=8):
    u0, u1, v0, v1 = patch.param_box
    gu = u0 + (u1 - u0) * (np.arange(n) + 0.5) / n
    gv = v0 + (v1 - v0) * (np.arange(n) + 0.5) / n
    U, V = np.meshgrid(gu, gv)
    cand = np.column_stack([U.ravel(), V.ravel()])
    pts, _ = kernels.surface_eval(*patch.kernel_args(), patch.P_flat, cand[:, 0], cand[:, 1])
    best = np.empty(len(X), dtype=np.int64)
    for start in range(0, len(X), 4096):
        chunk = X[start:start + 4096]
        d = ((chunk[:, None, :] - pts[None, :, :]) ** 2).sum(axis=-1)
        best[start:start + 4096] = d.argmin(axis=1)
    return cand[best]


def invert(patch, X, seeds=None, rtol=1e-12, maxit=50, max_halvings=10):
    """Batch Newton inversion of ``S(xi, eta) = X``.

    Returns ``(params, status)`` with status codes from :mod:`igadr.kernels`.
    Points that fail from their given seed are retried from the best point
    of an 8x8 parametric grid; remaining failures raise :class:`InversionError`.
    """
    X = np.ascontiguousarray(np.atleast_2d(X), dtype=float)
    if seeds is None:
        seeds = _grid_seeds(patch, X)
    seeds = np.ascontiguousarray(np.broadcast_to(seeds, X.shape), dtype=float)
    tol = rtol * patch.diameter
    args = patch.kernel_args() + (patch.P_flat,)
    uv, status = kernels.invert_points(*args, X, seeds, tol, maxit, max_halvings)
    failed = np.flatnonzero(status == kernels.FAILED)
    if failed.size:
        retry = np.ascontiguousarray(_grid_seeds(patch, X[failed]))
        uv2, st2 = kernels.invert_points(*args, np.ascontiguousarray(X[failed]), retry,
                                         tol, maxit, max_halvings)
        uv[failed], status[failed] = uv2, st2
        still = failed[st2 == kernels.FAILED]
        if still.size:
            raise InversionError(X[still])
    return uv, status


def point_invert(patch, x_phys, seed=None):
    uv, _ = invert(patch, np.asarray(x_phys, dtype=float).reshape(1, 2),
                   None if seed is None else np.asarray(seed, dtype=float).reshape(1, 2))
    return float(uv[0, 0]), float(uv[0, 1])


# --------------------------------------------------------------------------
# presets
# --------------------------------------------------------------------------


def rectangle(a, b, c, d):
    """Bilinear patch for ``[a, b] x [c, d]``."""
    if not (b > a and d > c):
        raise ValueError("rectangle needs a < b and c < d")
    kv = KnotVector([0, 0, 1, 1], 1)
    P = np.array([[[a, c], [a, d]], [[b, c], [b, d]]], dtype=float)
    return Patch(kv, kv, np.ones((2, 2)), P)


def disk(center=(0.0, 0.0), radius=1.0):
    """Single-patch disk from four exact 90-degree arcs.

    The nine weights are the tensor product of ``(1, sqrt(2)/2, 1)``, so the
    rational basis factors into univariate NURBS.  The Jacobian vanishes only
    at the four parametric corners, which lie on the circle.
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    cx, cy = center
    a = radius / np.sqrt(2.0)
    b = radius * np.sqrt(2.0)
    P = np.array([
        [[-a, -a], [-b, 0.0], [-a, a]],
        [[0.0, -b], [0.0, 0.0], [0.0, b]],
        [[a, -a], [b, 0.0], [a, a]],
    ]) + np.array([cx, cy])
    w1 = np.array([1.0, np.sqrt(0.5), 1.0])
    kv = KnotVector([0, 0, 0, 1, 1, 1], 2)
    return Patch(kv, kv, np.outer(w1, w1), P)


def annulus(center=(0.0, 0.0), r_in=0.5, r_out=1.0):
    """Full annulus: linear in the radius, four quadratic arcs in the angle.

    The edges ``eta = 0`` and ``eta = 1`` meet at a seam on the positive x
    axis; a discrete space on this patch treats the seam as a boundary.
    """
    if not 0 < r_in < r_out:
        raise ValueError("annulus needs 0 < r_in < r_out")
    s = np.sqrt(0.5)
    unit = np.array([[1, 0], [1, 1], [0, 1], [-1, 1], [-1, 0], [-1, -1], [0, -1], [1, -1], [1, 0]],
                    dtype=float)
    wa = np.array([1, s, 1, s, 1, s, 1, s, 1])
    P = np.stack([r_in * unit, r_out * unit]) + np.asarray(center, dtype=float)
    kv_u = KnotVector([0, 0, 1, 1], 1)
    kv_v = KnotVector([0, 0, 0, .25, .25, .5, .5, .75, .75, 1, 1, 1], 2)
    return Patch(kv_u, kv_v, np.vstack([wa, wa]), P)


def preset_geometry(kind, **params):
    kind = kind.lower()
    if kind == "rectangle":
        bounds = params.get("bounds", (0.0, 1.0, 0.0, 1.0))
        return rectangle(*bounds)
    if kind == "disk":
        return disk(params.get("center", (0.0, 0.0)), params.get("radius", 1.0))
    if kind == "annulus":
        return annulus(params.get("center", (0.0, 0.0)), params.get("r_in", 0.5),
                       params.get("r_out", 1.0))
    raise ValueError(f"unknown geometry {kind!r}")


# --------------------------------------------------------------------------
# mesh with quadrature cache
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class EdgeQuadrature:
    """Gauss data on the patch boundary for natural boundary terms."""

    points: np.ndarray  # (n, 2) physical
    normals: np.ndarray  # (n, 2) outward unit normals
    weights: np.ndarray  # (n,) quadrature weight times line element
    dofs: np.ndarray  # (n, nloc)
    values: np.ndarray  # (n, nloc) basis values


class Mesh:
    """Elements of a refined patch plus everything assembly needs per Gauss point.

    ``space`` is the refined patch that defines the discrete basis; ``geometry``
    is the (coarse, equivalent) patch used to evaluate the map, its Jacobian and
    its inverse.  Per element ``k`` and Gauss point ``g``:

    ``param[k, g]``, ``points[k, g]`` (physical), ``R[k, g, a]`` rational basis
    values, ``grad[k, g, a, :]`` physical gradients, ``wdet[k, g]`` the
    quadrature weight times ``|J_k|`` including the parent-map scaling.
    """

    def __init__(self, space, geometry=None, quad_points=None):
        self.space = space
        self.geometry = space if geometry is None else geometry
        p, q = space.degrees
        self.p, self.q = p, q
        nq = p + 1 if quad_points is None else int(quad_points)
        self.rule = tensor_rule(nq, nq) if np.isscalar(nq) else tensor_rule(*nq)
        ku, kv = space.kv_u, space.kv_v
        self.spans_u, self.spans_v = ku.spans, kv.spans
        self.nel_u, self.nel_v = self.spans_u.size, self.spans_v.size
        self.n_elements = self.nel_u * self.nel_v
        self.mb, self.lb = space.shape
        self.ndof = space.ndof
        self.nloc = (p + 1) * (q + 1)

        self.span_to_el_u = np.full(ku.knots.size, -1, np.int64)
        self.span_to_el_u[self.spans_u] = np.arange(self.nel_u)
        self.span_to_el_v = np.full(kv.knots.size, -1, np.int64)
        self.span_to_el_v[self.spans_v] = np.arange(self.nel_v)

        su = np.tile(self.spans_u, self.nel_v)
        sv = np.repeat(self.spans_v, self.nel_u)
        self.element_spans = np.column_stack([su, sv])
        self.dofs = kernels.local_indices(su, sv, p, q, self.mb).reshape(self.n_elements, -1)
        iu = np.arange(self.ndof) % self.mb
        jv = np.arange(self.ndof) // self.mb
        self.boundary = (iu == 0) | (iu == self.mb - 1) | (jv == 0) | (jv == self.lb - 1)
        self._edges = None
        self._eval_matrix = None
        self._precompute()

    @classmethod
    def from_geometry(cls, geometry, degree, n_u, n_v=None, quad_points=None):
        if degree < max(geometry.degrees):
            raise GeometryError(f"degree {degree} cannot represent a degree "
                                f"{max(geometry.degrees)} geometry")
        return cls(geometry.refine(degree, n_u, n_v), geometry, quad_points)

    def element(self, k):
        eu, ev = k % self.nel_u, k // self.nel_u
        su, sv = self.spans_u[eu], self.spans_v[ev]
        ku, kv = self.space.kv_u.knots, self.space.kv_v.knots
        return Element(int(k), int(su), int(sv), ku[su], ku[su + 1], kv[sv], kv[sv + 1])

    @property
    def elements(self):
        return [self.element(k) for k in range(self.n_elements)]

    def element_of(self, spans_u, spans_v):
        return self.span_to_el_u[spans_u] + self.nel_u * self.span_to_el_v[spans_v]

    def _direction(self, kv, spans, nodes):
        k = kv.knots
        a, b = k[spans], k[spans + 1]
        xs = (0.5 * ((b - a)[:, None] * nodes[None, :] + (b + a)[:, None]))
        s, d = kernels.basis_ders(k, kv.degree, np.ascontiguousarray(xs.ravel()), 1)
        if not np.array_equal(s.reshape(xs.shape), np.repeat(spans[:, None], nodes.size, 1)):
            raise GeometryError("quadrature point fell outside its element")
        return xs, d.reshape(xs.shape + d.shape[1:]), b - a

    def _precompute(self):
        rule, p, q = self.rule, self.p, self.q
        xs_u, Du, hu = self._direction(self.space.kv_u, self.spans_u, rule.nodes_u)
        xs_v, Dv, hv = self._direction(self.space.kv_v, self.spans_v, rule.nodes_v)
        ne, nq, nl = self.n_elements, rule.size, self.nloc

        def tensor(bv, bu):
            return np.einsum("vgb,uha->vughba", bv, bu).reshape(ne, nq, nl)

        N = tensor(Dv[:, :, 0], Du[:, :, 0])
        Nu = tensor(Dv[:, :, 0], Du[:, :, 1])
        Nv = tensor(Dv[:, :, 1], Du[:, :, 0])
        wl = self.space.w_flat[self.dofs][:, None, :]
        bw, bwu, bwv = N * wl, Nu * wl, Nv * wl
        W = bw.sum(-1, keepdims=True)
        R = bw / W
        Ru = (bwu - R * bwu.sum(-1, keepdims=True)) / W
        Rv = (bwv - R * bwv.sum(-1, keepdims=True)) / W

        pu = np.broadcast_to(xs_u[None, :, None, :], (self.nel_v, self.nel_u, rule.n_v, rule.n_u))
        pv = np.broadcast_to(xs_v[:, None, :, None], (self.nel_v, self.nel_u, rule.n_v, rule.n_u))
        param = np.stack([pu.reshape(ne, nq), pv.reshape(ne, nq)], axis=-1)
        g = self.geometry
        pts, jac = kernels.surface_eval(*g.kernel_args(), g.P_flat,
                                        np.ascontiguousarray(param[..., 0].ravel()),
                                        np.ascontiguousarray(param[..., 1].ravel()))
        jac = jac.reshape(ne, nq, 2, 2)
        det = jac[..., 0, 0] * jac[..., 1, 1] - jac[..., 0, 1] * jac[..., 1, 0]
        if np.any(det <= 0):
            raise GeometryError(f"nonpositive Jacobian at a quadrature point (min {det.min():.3e})")
        x_u, x_v = jac[..., 0, 0, None], jac[..., 0, 1, None]
        y_u, y_v = jac[..., 1, 0, None], jac[..., 1, 1, None]
        dd = det[..., None]
        grad = np.stack([(y_v * Ru - y_u * Rv) / dd, (-x_v * Ru + x_u * Rv) / dd], axis=-1)

        scale = 0.25 * np.outer(hv, hu).ravel()
        self.param = param
        self.points = pts.reshape(ne, nq, 2)
        self.jac = jac
        self.detJ = det
        self.R = R
        self.grad = grad
        self.wdet = rule.weights[None, :] * det * scale[:, None]
        self.area = float(self.wdet.sum())

    # -- field helpers -----------------------------------------------------

    def values_at_quadrature(self, coeffs):
        """Field values at every Gauss point, shape ``coeffs.shape[:-1] + (ne, nq)``."""
        c = np.asarray(coeffs, dtype=float)
        if self._eval_matrix is None:
            ne, nq, nb = self.R.shape
            rows = np.repeat(np.arange(ne * nq), nb)
            cols = np.broadcast_to(self.dofs[:, None, :], self.R.shape).ravel()
            self._eval_matrix = sp.csr_matrix((self.R.ravel(), (rows, cols)),
                                              shape=(ne * nq, self.ndof))
        flat = c.reshape(-1, c.shape[-1])
        out = (self._eval_matrix @ flat.T).T
        return out.reshape(c.shape[:-1] + self.R.shape[:2])

    def gradients_at_quadrature(self, coeffs):
        c = np.asarray(coeffs)
        return np.einsum("kgad,...ka->...kgd", self.grad, c[..., self.dofs])

    def edge_quadrature(self):
        if self._edges is None:
            self._edges = self._build_edges()
        return self._edges

    def _build_edges(self):
        ku, kv = self.space.kv_u, self.space.kv_v
        (u0, u1), (v0, v1) = ku.domain, kv.domain
        nodes, weights = self.rule.nodes_u, self.rule.weights_u
        pts, nrm, wts, dofs, vals = [], [], [], [], []
        for fixed_dir, value, outward in ((1, v0, -1.0), (1, v1, 1.0), (0, u0, -1.0), (0, u1, 1.0)):
            kvar = ku if fixed_dir == 1 else kv
            k = kvar.knots
            spans = kvar.spans
            a, b = k[spans], k[spans + 1]
            s = (0.5 * ((b - a)[:, None] * nodes[None, :] + (b + a)[:, None])).ravel()
            wline = (0.5 * (b - a)[:, None] * weights[None, :]).ravel()
            t = np.full_like(s, value)
            u, v = (s, t) if fixed_dir == 1 else (t, s)
            x, jac = kernels.surface_eval(*self.geometry.kernel_args(), self.geometry.P_flat,
                                          np.ascontiguousarray(u), np.ascontiguousarray(v))
            tangent = jac[:, :, 0] if fixed_dir == 1 else jac[:, :, 1]
            across = jac[:, :, 1] if fixed_dir == 1 else jac[:, :, 0]
            ds = np.hypot(tangent[:, 0], tangent[:, 1])
            n = np.column_stack([tangent[:, 1], -tangent[:, 0]]) / ds[:, None]
            flip = np.sign((n * across).sum(axis=1)) != np.sign(outward)
            n[flip] *= -1
            ev = basis_at(self, u, v)
            pts.append(x)
            nrm.append(n)
            wts.append(wline * ds)
            dofs.append(ev[0])
            vals.append(ev[1])
        return EdgeQuadrature(np.vstack(pts), np.vstack(nrm), np.concatenate(wts),
                              np.vstack(dofs), np.vstack(vals))


def basis_at(mesh, xi, eta):
    """Supported global indices and rational basis values at parametric points."""
    sp = mesh.space
    su, Bu = kernels.basis_ders(sp.kv_u.knots, mesh.p, np.ascontiguousarray(xi, dtype=float), 0)
    sv, Bv = kernels.basis_ders(sp.kv_v.knots, mesh.q, np.ascontiguousarray(eta, dtype=float), 0)
    idx = kernels.local_indices(su, sv, mesh.p, mesh.q, mesh.mb)
    bw = Bv[:, 0, :, None] * Bu[:, 0, None, :] * sp.w_flat[idx]
    R = bw / bw.sum(axis=(1, 2), keepdims=True)
    n = len(su)
    return idx.reshape(n, -1), R.reshape(n, -1)
