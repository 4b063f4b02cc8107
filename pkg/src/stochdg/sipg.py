"""Symmetric interior penalty DG assembly with upwinding, linear nodal basis.

Matrices are stored as ``K[test, trial]`` so that the discrete state
equation reads ``K @ y = f``. Degree of freedom ``3 t + k`` is the nodal
value at local vertex ``k`` of triangle ``t``.

Coefficient callables take an (n, 2) point array: diffusion returns (n,),
convection returns (n, 2). ``None`` means the term is absent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import NumericFailure
from .mesh import Mesh, classify_inflow

SIGMA_INTERIOR = 6.0
SIGMA_BOUNDARY = 12.0

# degree-4, 6-point rule (barycentric, weights sum to one)
_A, _B = 0.445948490915965, 0.091576213509771
_WA, _WB = 0.223381589678011, 0.109951743655322
TRI_BARY = np.array([[_A, _A, 1 - 2 * _A], [_A, 1 - 2 * _A, _A], [1 - 2 * _A, _A, _A],
                     [_B, _B, 1 - 2 * _B], [_B, 1 - 2 * _B, _B], [1 - 2 * _B, _B, _B]])
TRI_W = np.array([_WA, _WA, _WA, _WB, _WB, _WB])

# 3-point Gauss on [0, 1]
EDGE_T = np.array([0.5 - 0.5 * math.sqrt(0.6), 0.5, 0.5 + 0.5 * math.sqrt(0.6)])
EDGE_W = np.array([5.0, 8.0, 5.0]) / 18.0


def _finite(values, points, what):
    bad = ~np.isfinite(values)
    if np.any(bad):
        loc = np.argwhere(bad.reshape(len(points), -1).any(axis=1))[0, 0]
        raise NumericFailure(f"non-finite {what} coefficient at point {tuple(points[loc])}")
    return values


def _eval_scalar(fun, points, what):
    pts = points.reshape(-1, 2)
    vals = np.broadcast_to(np.asarray(fun(pts), dtype=float), (len(pts),))
    return _finite(vals, pts, what).reshape(points.shape[:-1])


def _eval_vector(fun, points, what):
    pts = points.reshape(-1, 2)
    vals = np.broadcast_to(np.asarray(fun(pts), dtype=float), (len(pts), 2))
    return _finite(vals, pts, what).reshape(points.shape)


def basis_gradients(mesh: Mesh) -> np.ndarray:
    """Constant gradients of the three barycentric functions, shape (nt, 3, 2)."""
    p = mesh.triangle_coords()
    x, y = p[..., 0], p[..., 1]
    area2 = (x[:, 1] - x[:, 0]) * (y[:, 2] - y[:, 0]) - (x[:, 2] - x[:, 0]) * (y[:, 1] - y[:, 0])
    g = np.empty((len(p), 3, 2))
    for k in range(3):
        k1, k2 = (k + 1) % 3, (k + 2) % 3
        g[:, k, 0] = (y[:, k1] - y[:, k2]) / area2
        g[:, k, 1] = (x[:, k2] - x[:, k1]) / area2
    return g


def triangle_quadrature(mesh: Mesh):
    """Physical points (nt, 6, 2) and weights (nt, 6) including the element area."""
    pts = np.einsum("qk,tkd->tqd", TRI_BARY, mesh.triangle_coords())
    return pts, mesh.areas[:, None] * TRI_W[None, :]


def _edge_points(mesh, v0, v1):
    a, b = mesh.vertices[v0], mesh.vertices[v1]
    return (1 - EDGE_T)[None, :, None] * a[:, None, :] + EDGE_T[None, :, None] * b[:, None, :]


def _trace_values(local, n_edges):
    """Basis values (ne, nq, 3) of one owner along the edge from its local slots."""
    vals = np.zeros((n_edges, len(EDGE_T), 3))
    rows = np.arange(n_edges)
    vals[rows, :, local[:, 0]] = 1 - EDGE_T
    vals[rows, :, local[:, 1]] = EDGE_T
    return vals


def _scatter(shape, dofs, local):
    rows = np.broadcast_to(dofs[:, :, None], local.shape).ravel()
    cols = np.broadcast_to(dofs[:, None, :], local.shape).ravel()
    return sp.coo_matrix((local.ravel(), (rows, cols)), shape=shape).tocsr()


def _triangle_dofs(tris):
    return 3 * np.asarray(tris)[:, None] + np.arange(3)[None, :]


def assemble_mass(mesh: Mesh) -> sp.csr_matrix:
    ref = (np.ones((3, 3)) + np.eye(3)) / 12.0
    local = mesh.areas[:, None, None] * ref[None]
    n = mesh.n_dofs
    return _scatter((n, n), _triangle_dofs(np.arange(mesh.n_triangles)), local)


def assemble_load_vector(mesh: Mesh, fun) -> np.ndarray:
    """Entries int_K fun * phi_s over every element."""
    pts, w = triangle_quadrature(mesh)
    vals = _eval_scalar(fun, pts, "load")
    local = np.einsum("tq,qs->ts", w * vals, TRI_BARY)
    return local.ravel()


def assemble_stiffness(mesh: Mesh, diffusion=None, convection=None,
                       sigma_interior: float = SIGMA_INTERIOR,
                       sigma_boundary: float = SIGMA_BOUNDARY,
                       inflow_velocity=None, penalty: bool = True) -> sp.csr_matrix:
    """SIPG + upwind bilinear form for one coefficient pair.

    ``inflow_velocity`` decides which element sides are upwind (defaults to
    ``convection``); the flux itself always uses ``convection``. Set
    ``penalty=False`` to omit the sigma / h_E jump terms.
    """
    n = mesh.n_dofs
    grads = basis_gradients(mesh)
    pieces = []

    # ---- volume terms
    pts, w = triangle_quadrature(mesh)
    local = np.zeros((mesh.n_triangles, 3, 3))
    if diffusion is not None:
        a_int = (w * _eval_scalar(diffusion, pts, "diffusion")).sum(axis=1)
        local += a_int[:, None, None] * np.einsum("trd,tsd->tsr", grads, grads)
    if convection is not None:
        b = _eval_vector(convection, pts, "convection")
        bg = np.einsum("tqd,trd->tqr", b, grads)
        local += np.einsum("tq,qs,tqr->tsr", w, TRI_BARY, bg)
    pieces.append(_scatter((n, n), _triangle_dofs(np.arange(mesh.n_triangles)), local))

    inflow = None
    if convection is not None:
        inflow = classify_inflow(mesh, inflow_velocity if inflow_velocity is not None else convection)

    # ---- interior edges
    e = mesh.interior_edges
    ni = len(e)
    if ni:
        xq = _edge_points(mesh, e[:, 2], e[:, 3])
        hE = mesh.interior_lengths
        wq = hE[:, None] * EDGE_W[None, :]
        nrm = mesh.interior_normals
        va = _trace_values(mesh.interior_local[:, 0], ni)
        vb = _trace_values(mesh.interior_local[:, 1], ni)
        jump = np.concatenate([va, -vb], axis=2)                       # (ni, nq, 6)
        local = np.zeros((ni, 6, 6))
        if diffusion is not None:
            aq = _eval_scalar(diffusion, xq, "diffusion")
            gn = np.concatenate([grads[e[:, 0]] @ nrm[:, :, None],
                                 grads[e[:, 1]] @ nrm[:, :, None]], axis=1)[..., 0]  # (ni, 6)
            flux = 0.5 * aq[:, :, None] * gn[:, None, :]               # (ni, nq, 6)
            cons = np.einsum("eq,eqr,eqs->esr", wq, flux, jump)
            local -= cons + cons.transpose(0, 2, 1)
        if penalty:
            local += sigma_interior * np.einsum("q,eqs,eqr->esr", EDGE_W, jump, jump)
        if convection is not None:
            bn = np.einsum("eqd,ed->eq", _eval_vector(convection, xq, "convection"), nrm)
            zeros = np.zeros_like(va)
            test_a = np.concatenate([va, zeros], axis=2)
            test_b = np.concatenate([zeros, vb], axis=2)
            # inflow for a: int (b.n_a)(y_b - y_a) v_a ; for b: int (b.n_b)(y_a - y_b) v_b
            ua = np.einsum("eq,eqs,eqr->esr", wq * bn, test_a, -jump)
            ub = np.einsum("eq,eqs,eqr->esr", -wq * bn, test_b, jump)
            local += inflow.interior_a[:, None, None] * ua + inflow.interior_b[:, None, None] * ub
        dofs = np.concatenate([_triangle_dofs(e[:, 0]), _triangle_dofs(e[:, 1])], axis=1)
        pieces.append(_scatter((n, n), dofs, local))

    # ---- boundary edges
    e = mesh.boundary_edges
    nb = len(e)
    if nb:
        xq = _edge_points(mesh, e[:, 1], e[:, 2])
        wq = mesh.boundary_lengths[:, None] * EDGE_W[None, :]
        nrm = mesh.boundary_normals
        val = _trace_values(mesh.boundary_local, nb)
        local = np.zeros((nb, 3, 3))
        if diffusion is not None:
            aq = _eval_scalar(diffusion, xq, "diffusion")
            gn = (grads[e[:, 0]] @ nrm[:, :, None])[..., 0]            # (nb, 3)
            flux = aq[:, :, None] * gn[:, None, :]
            cons = np.einsum("eq,eqr,eqs->esr", wq, flux, val)
            local -= cons + cons.transpose(0, 2, 1)
        if penalty:
            local += sigma_boundary * np.einsum("q,eqs,eqr->esr", EDGE_W, val, val)
        if convection is not None:
            bn = np.einsum("eqd,ed->eq", _eval_vector(convection, xq, "convection"), nrm)
            term = np.einsum("eq,eqs,eqr->esr", wq * bn, val, val)
            local -= inflow.boundary[:, None, None] * term
        pieces.append(_scatter((n, n), _triangle_dofs(e[:, 0]), local))

    K = pieces[0]
    for P in pieces[1:]:
        K = K + P
    return K.tocsr()


def assemble_loads(mesh: Mesh, dirichlet=None, source=None, diffusion=None, convection=None,
                   sigma_boundary: float = SIGMA_BOUNDARY, inflow_velocity=None,
                   penalty: bool = True) -> np.ndarray:
    """Right-hand side: volume source plus weak Dirichlet terms on boundary edges."""
    f = np.zeros(mesh.n_dofs)
    if source is not None:
        f += assemble_load_vector(mesh, source)
    if dirichlet is None:
        return f
    e = mesh.boundary_edges
    nb = len(e)
    xq = _edge_points(mesh, e[:, 1], e[:, 2])
    wq = mesh.boundary_lengths[:, None] * EDGE_W[None, :]
    nrm = mesh.boundary_normals
    val = _trace_values(mesh.boundary_local, nb)
    g = _eval_scalar(dirichlet, xq, "Dirichlet")
    local = np.zeros((nb, 3))
    if penalty:
        local += sigma_boundary * np.einsum("q,eq,eqs->es", EDGE_W, g, val)
    if diffusion is not None:
        grads = basis_gradients(mesh)
        aq = _eval_scalar(diffusion, xq, "diffusion")
        gn = (grads[e[:, 0]] @ nrm[:, :, None])[..., 0]
        local -= np.einsum("eq,eq,es->es", wq * aq, g, gn)
    if convection is not None:
        inflow = classify_inflow(mesh, inflow_velocity if inflow_velocity is not None else convection)
        bn = np.einsum("eqd,ed->eq", _eval_vector(convection, xq, "convection"), nrm)
        local -= inflow.boundary[:, None] * np.einsum("eq,eq,eqs->es", wq * bn, g, val)
    np.add.at(f, _triangle_dofs(e[:, 0]).ravel(), local.ravel())
    return f


def adjoint_blocks(K):
    """Discrete adjoint of a stiffness matrix: its transpose."""
    if isinstance(K, (list, tuple)):
        return type(K)(adjoint_blocks(k) for k in K)
    return K.T.tocsr()


def interpolate(mesh: Mesh, fun) -> np.ndarray:
    """Nodal DG interpolant coefficients of a scalar function."""
    return _eval_scalar(fun, mesh.dof_coords(), "interpolated")


@dataclass(frozen=True)
class DeterministicBlocks:
    mesh: Mesh
    M: sp.csr_matrix
    K: tuple
    f: tuple
    yd_load: np.ndarray
    yd_coeff: np.ndarray
    sigma_interior: float = SIGMA_INTERIOR
    sigma_boundary: float = SIGMA_BOUNDARY
    viscosity: float = 1.0

    @property
    def n_dofs(self) -> int:
        return self.M.shape[0]

    @property
    def n_modes(self) -> int:
        return len(self.K)

    def with_target(self, yd_load, yd_coeff) -> "DeterministicBlocks":
        from dataclasses import replace
        return replace(self, yd_load=np.asarray(yd_load, float), yd_coeff=np.asarray(yd_coeff, float))
