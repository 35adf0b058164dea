"""Galerkin mass/stiffness matrices, load vectors and Dirichlet elimination.

All integrals run over the Gauss data cached on :class:`igadr.geometry.Mesh`.
Element matrices are merged through a symbolic pattern computed once per
mesh, so assembly is a single ``bincount`` and independent of traversal order.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import kernels


class NumericalError(FloatingPointError):
    """A non-finite value appeared; ``location`` says where."""

    def __init__(self, message, location=None):
        self.location = location
        super().__init__(message if location is None else f"{message} at {location}")


@dataclass(frozen=True)
class DofMap:
    element_dofs: np.ndarray  # (n_elements, (p+1)(q+1))
    boundary: np.ndarray  # (ndof,) bool

    @property
    def ndof(self):
        return self.boundary.size

    @classmethod
    def from_mesh(cls, mesh):
        return cls(mesh.dofs, mesh.boundary)


class _Pattern:
    def __init__(self, dofs, ndof):
        nl = dofs.shape[1]
        rows = np.repeat(dofs, nl, axis=1).ravel()
        cols = np.tile(dofs, (1, nl)).ravel()
        keys, self.inverse = np.unique(rows * ndof + cols, return_inverse=True)
        self.inverse = self.inverse.ravel()
        self.nnz = keys.size
        self.ndof = ndof
        self.indices = (keys % ndof).astype(np.int32)
        self.indptr = np.searchsorted(keys // ndof, np.arange(ndof + 1)).astype(np.int32)

    def build(self, element_matrices):
        data = kernels.scatter_add(self.inverse, element_matrices.ravel(), self.nnz)
        return sp.csr_matrix((data, self.indices.copy(), self.indptr.copy()),
                             shape=(self.ndof, self.ndof))


def pattern(mesh):
    pat = getattr(mesh, "_pattern", None)
    if pat is None:
        pat = _Pattern(mesh.dofs, mesh.ndof)
        mesh._pattern = pat
    return pat


def coefficient_at_quadrature(mesh, coefficient):
    """Broadcast a constant, an array of Gauss values, or ``f(points)`` to ``(ne, nq)``."""
    if callable(coefficient):
        c = np.asarray(coefficient(mesh.points.reshape(-1, 2)), dtype=float)
        c = c.reshape(mesh.wdet.shape)
    else:
        c = np.broadcast_to(np.asarray(coefficient, dtype=float), mesh.wdet.shape)
    if not np.all(np.isfinite(c)):
        k, g = np.argwhere(~np.isfinite(c))[0]
        raise NumericalError("non-finite coefficient", tuple(mesh.points[k, g]))
    return c


def assemble_mass(mesh, coefficient=None):
    w = mesh.wdet if coefficient is None else mesh.wdet * coefficient_at_quadrature(mesh, coefficient)
    return pattern(mesh).build(kernels.element_mass(mesh.R, np.ascontiguousarray(w)))


def assemble_stiffness(mesh, coefficient=1.0):
    """``K_ml = sum_k sum_g w d grad N_l . grad N_m |J|``.

    ``coefficient`` may be a constant, Gauss-point values of shape
    ``(n_elements, n_quad)`` or a callable of physical points.
    """
    w = mesh.wdet * coefficient_at_quadrature(mesh, coefficient)
    return pattern(mesh).build(kernels.element_stiffness(mesh.grad, np.ascontiguousarray(w)))


def load_vector(mesh, values):
    """``b_m = integral of values * N_m`` from Gauss-point values ``(..., ne, nq)``."""
    values = np.asarray(values, dtype=float)
    lead = values.shape[:-2]
    flat = np.ascontiguousarray(values.reshape((-1,) + mesh.wdet.shape))
    out = kernels.element_load(mesh.wdet, flat, mesh.R, mesh.dofs, mesh.ndof)
    return out.reshape(lead + (mesh.ndof,))


def integrate(mesh, values):
    return float(np.sum(mesh.wdet * values))


def assemble_reaction_load(mesh, coeffs, reaction, t=0.0):
    """Loads ``integral r_c(u_h, v_h, x, t) N_m`` for every component ``c``.

    ``coeffs`` has shape ``(ncomp, ndof)``; ``reaction(values, x, t)`` receives
    Gauss-point values ``(ncomp, ne, nq)`` and physical points ``(ne, nq, 2)``.
    """
    vals = mesh.values_at_quadrature(np.asarray(coeffs))
    r = np.asarray(reaction(vals, mesh.points, t), dtype=float)
    if not np.all(np.isfinite(r)):
        c, k, g = np.argwhere(~np.isfinite(r))[0]
        raise NumericalError(f"non-finite reaction in component {c}", tuple(mesh.points[k, g]))
    return load_vector(mesh, r)


def apply_dirichlet(matrix, rhs, dofmap):
    """Homogeneous Dirichlet by symmetric elimination: unit diagonal, zero rhs."""
    flags = dofmap.boundary if isinstance(dofmap, DofMap) else np.asarray(dofmap, dtype=bool)
    if not flags.any():
        return matrix, rhs
    keep = sp.diags((~flags).astype(float))
    A = (keep @ matrix @ keep + sp.diags(flags.astype(float))).tocsr()
    b = np.array(rhs, dtype=float, copy=True)
    b[..., flags] = 0.0
    return A, b


def edge_load(mesh, flux):
    """``integral over the boundary of flux(x, n) N_m ds``."""
    e = mesh.edge_quadrature()
    vals = np.asarray(flux(e.points, e.normals), dtype=float) * e.weights
    return kernels.scatter_add(e.dofs.ravel(), np.ascontiguousarray((vals[:, None] * e.values).ravel()),
                               mesh.ndof)
