"""Gauss-Legendre rules on [-1, 1] and their tensor products."""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np


@lru_cache(maxsize=None)
def _gauss_legendre(n):
    nodes, weights = np.polynomial.legendre.leggauss(n)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def gauss_legendre_1d(n):
    """Nodes (ascending) and weights of the n-point rule on [-1, 1].

    Exact for polynomials of degree ``2n - 1``.
    """
    n = int(n)
    if not 1 <= n <= 64:
        raise ValueError("number of Gauss points must be in [1, 64]")
    return _gauss_legendre(n)


@dataclass(frozen=True)
class QuadratureRule:
    """Tensor Gauss rule on the parent square.

    ``nodes`` has shape ``(n_u * n_v, 2)`` with the first coordinate varying
    fastest; the 1D factors are kept for tensor-structured evaluation.
    """

    n_u: int
    n_v: int
    nodes: np.ndarray
    weights: np.ndarray
    nodes_u: np.ndarray
    weights_u: np.ndarray
    nodes_v: np.ndarray
    weights_v: np.ndarray

    @property
    def size(self):
        return self.weights.size


def tensor_rule(n_u, n_v=None):
    n_v = n_u if n_v is None else n_v
    xu, wu = gauss_legendre_1d(n_u)
    xv, wv = gauss_legendre_1d(n_v)
    X, Y = np.meshgrid(xu, xv, indexing="xy")
    nodes = np.column_stack([X.ravel(), Y.ravel()])
    weights = np.outer(wv, wu).ravel()
    return QuadratureRule(n_u, n_v, nodes, weights, xu, wu, xv, wv)
