"""Moments, the discrete cost functional, and error norms."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import sipg
from .chaos import ChaosBasis, uniform_gauss
from .mesh import Mesh
from .sipg import DeterministicBlocks

VARIANCE_FLOOR = -1e-14


@dataclass(frozen=True)
class MomentFields:
    mean: np.ndarray
    variance: np.ndarray
    std: np.ndarray
    peak_variance: float


def moments(Y, basis: Optional[ChaosBasis] = None) -> MomentFields:
    """Mean and pointwise variance of a chaos expansion given its (N_d x J) mode matrix."""
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    gram = np.ones(Y.shape[1]) if basis is None else basis.gram_diagonal
    var = (Y[:, 1:] ** 2) @ gram[1:]
    var = np.where((var < 0) & (var >= VARIANCE_FLOOR), 0.0, var)
    return MomentFields(mean=Y[:, 0].copy(), variance=var, std=np.sqrt(np.maximum(var, 0.0)),
                        peak_variance=float(var.max()) if var.size else 0.0)


@dataclass(frozen=True)
class CostBreakdown:
    total: float
    tracking: float
    variance: float
    control: float


def _mnorm2(M, X):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    return float(np.sum(X * (M @ X)))


def cost_functional(Y, U, blocks: DeterministicBlocks, mu: float, gamma: float,
                    yd_coeff=None, strict: bool = False) -> CostBreakdown:
    """J = tracking / 2 + gamma * variance / 2 + mu * control / 2, all in the M-norm.

    ``yd_coeff`` defaults to the target coefficients stored in ``blocks``;
    ``strict`` measures only the mean control mode.
    """
    M = blocks.M
    Y = np.atleast_2d(np.asarray(Y, dtype=float).T).T
    yd = blocks.yd_coeff if yd_coeff is None else np.asarray(yd_coeff, dtype=float)
    E = Y.copy()
    E[:, 0] -= yd
    tracking = _mnorm2(M, E)
    variance = _mnorm2(M, Y[:, 1:]) if Y.shape[1] > 1 else 0.0
    U = np.atleast_2d(np.asarray(U, dtype=float).T).T
    control = _mnorm2(M, U[:, 0] if strict else U)
    total = 0.5 * tracking + 0.5 * gamma * variance + 0.5 * mu * control
    return CostBreakdown(total=total, tracking=tracking, variance=variance, control=control)


def _edge_geometry(mesh, which):
    if which == "interior":
        e = mesh.interior_edges
        v0, v1 = e[:, 2], e[:, 3]
        n, h = mesh.interior_normals, mesh.interior_lengths
    else:
        e = mesh.boundary_edges
        v0, v1 = e[:, 1], e[:, 2]
        n, h = mesh.boundary_normals, mesh.boundary_lengths
    a, b = mesh.vertices[v0], mesh.vertices[v1]
    t = sipg.EDGE_T
    pts = (1 - t)[None, :, None] * a[:, None, :] + t[None, :, None] * b[:, None, :]
    return e, pts, h[:, None] * sipg.EDGE_W[None, :], n


def _trace(coeffs, tri, local):
    """Values of the DG function of ``tri`` along an edge from its local slots."""
    c = coeffs.reshape(-1, 3)[tri]
    rows = np.arange(len(tri))
    t = sipg.EDGE_T[None, :]
    return c[rows, local[:, 0]][:, None] * (1 - t) + c[rows, local[:, 1]][:, None] * t


def energy_norm_error(mesh: Mesh, coeffs, exact: Callable, exact_grad: Callable,
                      diffusion: Callable, convection: Optional[Callable] = None,
                      sigma_interior: float = sipg.SIGMA_INTERIOR,
                      sigma_boundary: float = sipg.SIGMA_BOUNDARY) -> float:
    """Broken energy norm of (y_h - y): diffusion-weighted gradient, jump penalty and
    convective jump terms weighted by |b . n| / 2."""
    coeffs = np.asarray(coeffs, dtype=float)
    grads = sipg.basis_gradients(mesh)
    gh = np.einsum("tk,tkd->td", coeffs.reshape(-1, 3), grads)
    pts, w = sipg.triangle_quadrature(mesh)
    flat = pts.reshape(-1, 2)
    ge = np.asarray(exact_grad(flat), dtype=float).reshape(pts.shape)
    a = sipg._eval_scalar(diffusion, pts, "diffusion")
    total = float(np.sum(w * a * np.sum((gh[:, None, :] - ge) ** 2, axis=2)))

    e, xq, wq, n = _edge_geometry(mesh, "interior")
    jump = _trace(coeffs, e[:, 0], mesh.interior_local[:, 0]) - _trace(coeffs, e[:, 1], mesh.interior_local[:, 1])
    total += sigma_interior * float(np.sum(sipg.EDGE_W[None, :] * jump ** 2))
    if convection is not None:
        bn = np.abs(np.einsum("eqd,ed->eq", sipg._eval_vector(convection, xq, "convection"), n))
        total += 0.5 * float(np.sum(wq * bn * jump ** 2))

    e, xq, wq, n = _edge_geometry(mesh, "boundary")
    err = _trace(coeffs, e[:, 0], mesh.boundary_local) - np.asarray(exact(xq.reshape(-1, 2))).reshape(xq.shape[:2])
    total += sigma_boundary * float(np.sum(sipg.EDGE_W[None, :] * err ** 2))
    if convection is not None:
        bn = np.abs(np.einsum("eqd,ed->eq", sipg._eval_vector(convection, xq, "convection"), n))
        total += 0.5 * float(np.sum(wq * bn * err ** 2))
    return float(np.sqrt(total))


def stochastic_energy_norm_error(mesh: Mesh, Y, basis: ChaosBasis, exact: Callable,
                                 exact_grad: Callable, diffusion: Callable,
                                 convection: Optional[Callable] = None, n_points: int | None = None,
                                 **sigma) -> float:
    """Energy-norm error averaged over xi by tensor Gauss quadrature.

    ``exact``, ``exact_grad``, ``diffusion`` and ``convection`` take
    (points, xi); Y is the (N_d x J) mode matrix of the discrete solution.
    """
    n_points = n_points or basis.order + 2
    t, w = uniform_gauss(n_points)
    total = 0.0
    for combo in itertools.product(range(n_points), repeat=basis.n_dim):
        xi = t[list(combo)]
        weight = float(np.prod(w[list(combo)]))
        yh = np.asarray(Y) @ basis.evaluate(xi[None, :])[0]
        conv = None if convection is None else (lambda p, xi=xi: convection(p, xi))
        err = energy_norm_error(mesh, yh, lambda p: exact(p, xi), lambda p: exact_grad(p, xi),
                                lambda p: diffusion(p, xi), conv, **sigma)
        total += weight * err ** 2
    return float(np.sqrt(total))


def l2_error(mesh: Mesh, coeffs, exact: Callable) -> float:
    """L2 norm of (y_h - y) with the element quadrature rule."""
    pts, w = sipg.triangle_quadrature(mesh)
    yh = np.einsum("qk,tk->tq", sipg.TRI_BARY, np.asarray(coeffs, float).reshape(-1, 3))
    ye = np.asarray(exact(pts.reshape(-1, 2)), dtype=float).reshape(yh.shape)
    return float(np.sqrt(np.sum(w * (yh - ye) ** 2)))


def convergence_rates(errors) -> np.ndarray:
    """log2 ratios of successive errors (uniform refinement halves h)."""
    e = np.asarray(errors, dtype=float)
    return np.log2(e[:-1] / e[1:])


def field_table(mesh: Mesh, Y, U=None) -> np.ndarray:
    """Per-DOF rows (x, y, mean, variance, control mean)."""
    mom = moments(Y)
    xy = mesh.dof_coords()
    u = np.zeros(len(xy)) if U is None else np.atleast_2d(np.asarray(U).T).T[:, 0]
    return np.column_stack([xy, mom.mean, mom.variance, u])
