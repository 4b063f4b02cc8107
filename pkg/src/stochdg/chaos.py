"""Orthonormal Legendre chaos on [-sqrt3, sqrt3]^N and the stochastic Galerkin matrices."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import ContractViolation

SQRT3 = math.sqrt(3.0)
DROP_TOL = 1e-13


def basis_size(n_dim: int, order: int) -> int:
    return math.comb(n_dim + order, order)


def multi_index_set(n_dim: int, order: int) -> np.ndarray:
    """All multi-indices of total degree <= order.

    Graded: ascending total degree, and within one degree descending
    lexicographic order, so that for degree one row i holds the unit
    vector e_i and psi_i = xi_i.
    """
    if n_dim < 0 or order < 0:
        raise ContractViolation(f"need N >= 0 and Q >= 0, got N={n_dim}, Q={order}")
    rows = []
    for deg in range(order + 1):
        level = [c for c in itertools.product(range(deg, -1, -1), repeat=n_dim) if sum(c) == deg]
        rows.extend(sorted(level, reverse=True))
    return np.array(rows, dtype=np.int64).reshape(len(rows), n_dim)


def legendre_orthonormal(degree: int, t):
    """Legendre polynomial orthonormal for the uniform density on [-sqrt3, sqrt3]."""
    if degree < 0:
        raise ContractViolation(f"degree must be >= 0, got {degree}")
    s = np.asarray(t, dtype=float) / SQRT3
    p_prev, p = np.ones_like(s), s
    if degree == 0:
        return p_prev
    for n in range(1, degree):
        p_prev, p = p, ((2 * n + 1) * s * p - n * p_prev) / (n + 1)
    return math.sqrt(2 * degree + 1) * p


def uniform_gauss(n_points: int):
    """Gauss-Legendre rule for expectations under U[-sqrt3, sqrt3]."""
    x, w = np.polynomial.legendre.leggauss(n_points)
    return SQRT3 * x, 0.5 * w


@dataclass(frozen=True)
class ChaosBasis:
    n_dim: int
    order: int
    multi_indices: np.ndarray
    gram_diagonal: np.ndarray
    G: tuple     # G_0 .. G_N, sparse (J, J)
    g: tuple     # g_0 .. g_N, dense (J,)

    @property
    def size(self) -> int:
        return len(self.multi_indices)

    def evaluate(self, xi) -> np.ndarray:
        """psi_0..psi_{J-1} at samples ``xi`` of shape (n, N); returns (n, J)."""
        xi = np.atleast_2d(np.asarray(xi, dtype=float))
        out = np.ones((xi.shape[0], self.size))
        for d in range(self.n_dim):
            degs = self.multi_indices[:, d]
            table = np.stack([legendre_orthonormal(q, xi[:, d]) for q in range(self.order + 1)], axis=1)
            out *= table[:, degs]
        return out


def _one_dim_tables(order: int, n_points: int):
    t, w = uniform_gauss(n_points)
    P = np.stack([legendre_orthonormal(q, t) for q in range(order + 1)])
    T0 = (P * w) @ P.T
    T1 = (P * (w * t)) @ P.T
    return 0.5 * (T0 + T0.T), 0.5 * (T1 + T1.T)


def build_stochastic_matrices(n_dim: int, order: int, n_points: int | None = None):
    """G_i(r, s) = <xi_i psi_r psi_s> (G_0 = <psi_r psi_s>) by tensorized Gauss quadrature.

    Each entry factorizes over coordinates, so the tensor rule reduces to
    products of exact 1D tables. Returns (multi_indices, G list, g list, gram).
    """
    idx = multi_index_set(n_dim, order)
    J = len(idx)
    n_points = n_points or order + 2
    T0, T1 = _one_dim_tables(order, n_points)

    gram = np.ones(J)
    for d in range(n_dim):
        gram *= np.diag(T0)[idx[:, d]]
    base = np.ones((J, J))
    for d in range(n_dim):
        base *= T0[np.ix_(idx[:, d], idx[:, d])]
    if not np.allclose(base, np.eye(J), atol=1e-13, rtol=0):
        raise AssertionError("Legendre chaos is not orthonormal under the quadrature")

    G = [sp.identity(J, format="csr")]
    for i in range(n_dim):
        vals = T1[np.ix_(idx[:, i], idx[:, i])].copy()
        for d in range(n_dim):
            if d != i:
                vals *= T0[np.ix_(idx[:, d], idx[:, d])]
        vals[np.abs(vals) < DROP_TOL] = 0.0
        Gi = sp.csr_matrix(vals)
        Gi.eliminate_zeros()
        G.append(Gi)
    g = [np.asarray(Gi[:, 0].todense()).ravel() for Gi in G]
    return idx, G, g, gram


def build_basis(n_dim: int, order: int, n_points: int | None = None) -> ChaosBasis:
    idx, G, g, gram = build_stochastic_matrices(n_dim, order, n_points)
    return ChaosBasis(n_dim=n_dim, order=order, multi_indices=idx,
                      gram_diagonal=np.ones(len(idx)), G=tuple(G), g=tuple(g))


def build_gamma_diagonal(basis: ChaosBasis, gamma: float):
    """Diagonals of G_gamma = G_0 + gamma M_0 and M_0 = diag(0, <psi_1^2>, ...)."""
    if gamma < 0:
        raise ContractViolation(f"gamma must be >= 0, got {gamma}")
    m0 = basis.gram_diagonal.astype(float).copy()
    m0[0] = 0.0
    return basis.gram_diagonal + gamma * m0, m0
