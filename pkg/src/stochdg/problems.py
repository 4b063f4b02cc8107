"""Problem data (coefficients, boundary data, target) and the three benchmark setups."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
import scipy.sparse.linalg as spla

from . import sipg
from .errors import ContractViolation
from .kl_field import KLField, build_2d_field, check_positivity
from .mesh import Mesh

EXAMPLES = ("6.1", "6.2", "6.3")


def constant(value: float) -> Callable:
    def fun(points):
        return np.full(len(np.asarray(points).reshape(-1, 2)), float(value))
    return fun


def constant_vector(vec) -> Callable:
    vec = np.asarray(vec, dtype=float)

    def fun(points):
        return np.tile(vec, (len(np.asarray(points).reshape(-1, 2)), 1))
    return fun


@dataclass(frozen=True)
class ProblemData:
    """Deterministic data plus optional KL-driven randomness.

    Random diffusion: a(x, xi) = diffusion_scale * eta(x, xi), where
    ``diffusion`` must equal diffusion_scale * mean(eta).
    Random convection: b(x, xi) = convection_direction * eta(x, xi), with
    ``convection`` equal to the direction times mean(eta).
    Both fields share the same xi when both are present.
    ``target`` is the desired state; None means "mean of the uncontrolled
    stochastic state", resolved by the benchmark driver.
    """
    name: str
    domain: tuple
    diffusion: Callable
    convection: Optional[Callable] = None
    source: Optional[Callable] = None
    dirichlet: Optional[Callable] = None
    target: Optional[Callable] = None
    random_diffusion: Optional[KLField] = None
    diffusion_scale: float = 1.0
    random_convection: Optional[KLField] = None
    convection_direction: tuple = (1.0, 1.0)
    u_a: float = -math.inf
    u_b: float = math.inf
    meta: dict = field(default_factory=dict)

    @property
    def n_terms(self) -> int:
        counts = {f.n_terms for f in (self.random_diffusion, self.random_convection) if f is not None}
        if len(counts) > 1:
            raise ContractViolation(f"random fields disagree on the number of KL terms: {sorted(counts)}")
        return counts.pop() if counts else 0

    def mode_fields(self, k: int):
        """Diffusion and convection callables of KL mode k (k >= 1); None where absent."""
        a = b = None
        if self.random_diffusion is not None:
            fld, s = self.random_diffusion, self.diffusion_scale
            a = lambda p, fld=fld, s=s, k=k: s * fld.fluctuation(k, p)
        if self.random_convection is not None:
            fld, d = self.random_convection, np.asarray(self.convection_direction, float)
            b = lambda p, fld=fld, d=d, k=k: fld.fluctuation(k, p)[:, None] * d[None, :]
        return a, b


def assemble_blocks(mesh: Mesh, problem: ProblemData, mode_penalty: bool = False,
                    sigma_interior: float = sipg.SIGMA_INTERIOR,
                    sigma_boundary: float = sipg.SIGMA_BOUNDARY) -> sipg.DeterministicBlocks:
    """M, K_0..K_N, f_0..f_N and the target load for ``problem`` on ``mesh``.

    Upwind sides are fixed by the mean velocity for every mode. Mode
    matrices (k >= 1) carry the sigma / h_E jump penalty only when
    ``mode_penalty`` is set.
    """
    if problem.random_diffusion is not None:
        pts, _ = sipg.triangle_quadrature(mesh)
        scaled = replace(problem.random_diffusion,
                         mean_field=lambda p: problem.diffusion(p) / problem.diffusion_scale)
        check_positivity(scaled, pts.reshape(-1, 2))

    M = sipg.assemble_mass(mesh)
    inflow_v = problem.convection
    K = [sipg.assemble_stiffness(mesh, problem.diffusion, problem.convection,
                                 sigma_interior, sigma_boundary)]
    f = [sipg.assemble_loads(mesh, problem.dirichlet, problem.source, problem.diffusion,
                             problem.convection, sigma_boundary)]
    for k in range(1, problem.n_terms + 1):
        a_k, b_k = problem.mode_fields(k)
        K.append(sipg.assemble_stiffness(mesh, a_k, b_k, sigma_interior, sigma_boundary,
                                         inflow_velocity=inflow_v, penalty=mode_penalty))
        f.append(sipg.assemble_loads(mesh, problem.dirichlet, None, a_k, b_k, sigma_boundary,
                                     inflow_velocity=inflow_v, penalty=mode_penalty))

    if problem.target is not None:
        yd_load = sipg.assemble_load_vector(mesh, problem.target)
        yd_coeff = spla.spsolve(M.tocsc(), yd_load)
    else:
        yd_load = np.zeros(mesh.n_dofs)
        yd_coeff = np.zeros(mesh.n_dofs)
    visc = float(problem.meta.get("nu", problem.diffusion_scale))
    return sipg.DeterministicBlocks(mesh=mesh, M=M, K=tuple(K), f=tuple(f), yd_load=yd_load,
                                    yd_coeff=yd_coeff, sigma_interior=sigma_interior,
                                    sigma_boundary=sigma_boundary, viscosity=visc)


# ---------------------------------------------------------------- benchmarks

def _dirichlet_6_1(domain):
    x0, x1, y0, y1 = domain
    tol = 1e-12 * max(x1 - x0, y1 - y0)

    def g(points):
        p = np.asarray(points, dtype=float).reshape(-1, 2)
        x, y = p[:, 0], p[:, 1]
        out = np.zeros(len(p))
        # sides checked in order bottom, top, left, right; corners take the later side
        out[np.abs(y - y0) < tol] = x[np.abs(y - y0) < tol]
        out[np.abs(y - y1) < tol] = 0.0
        out[np.abs(x - x0) < tol] = -1.0
        out[np.abs(x - x1) < tol] = 1.0
        return out
    return g


def gaussian_bump(points):
    p = np.asarray(points, dtype=float).reshape(-1, 2)
    return np.exp(-64.0 * ((p[:, 0] - 0.5) ** 2 + (p[:, 1] - 0.5) ** 2))


def example_problem(example: str, nu: float = 1.0, kappa: Optional[float] = None,
                    n_terms: int = 3, ell: float = 1.0, mean: float = 1.0,
                    domain=(-1.0, 1.0, -1.0, 1.0)) -> ProblemData:
    """Benchmark data. 6.1: random diffusion; 6.2: random convection; 6.3: 6.2 with u <= 100."""
    example = str(example)
    if example not in EXAMPLES:
        raise ContractViolation(f"unknown example id {example!r}; expected one of {EXAMPLES}")
    if n_terms < 1:
        raise ContractViolation(f"n_terms must be >= 1, got {n_terms}")
    domain = tuple(float(v) for v in domain)
    meta = dict(example=example, nu=float(nu), ell=float(ell), mean=float(mean))
    if example == "6.1":
        kappa = 0.5 if kappa is None else kappa
        fld = build_2d_field(mean, kappa, ell, ell, n_terms, domain)
        meta["kappa"] = float(kappa)
        return ProblemData(name="6.1", domain=domain, diffusion=constant(nu * mean),
                           convection=constant_vector((0.0, 1.0)), source=None,
                           dirichlet=_dirichlet_6_1(domain), target=None,
                           random_diffusion=fld, diffusion_scale=float(nu), meta=meta)
    kappa = 0.05 if kappa is None else kappa
    fld = build_2d_field(mean, kappa, ell, ell, n_terms, domain)
    meta["kappa"] = float(kappa)
    u_b = 100.0 if example == "6.3" else math.inf
    return ProblemData(name=example, domain=domain, diffusion=constant(nu),
                       convection=constant_vector((mean, mean)), source=None, dirichlet=None,
                       target=gaussian_bump, random_convection=fld,
                       convection_direction=(1.0, 1.0), diffusion_scale=float(nu),
                       u_b=u_b, meta=meta)


# ---------------------------------------------------------------- manufactured solutions

@dataclass(frozen=True)
class Manufactured:
    """Deterministic problem with known state (and, for control problems, control)."""
    problem: ProblemData
    state: Callable
    state_grad: Callable
    control: Optional[Callable] = None
    mu: float = 1.0


def _bump(p):
    return (1 - p[:, 0] ** 2) * (1 - p[:, 1] ** 2)


def _bump_grad(p):
    x, y = p[:, 0], p[:, 1]
    return np.column_stack([-2 * x * (1 - y ** 2), -2 * y * (1 - x ** 2)])


def _bump_neg_laplacian(p):
    return 2 * (1 - p[:, 1] ** 2) + 2 * (1 - p[:, 0] ** 2)


def _mms_state(points):
    p = np.asarray(points, dtype=float).reshape(-1, 2)
    return _bump(p) + p[:, 0] * p[:, 1]


def _mms_state_grad(points):
    p = np.asarray(points, dtype=float).reshape(-1, 2)
    return _bump_grad(p) + p[:, ::-1]


def manufactured_state(nu: float = 1.0, velocity=(1.0, 0.5)) -> Manufactured:
    """-nu lap y + b . grad y = f on [-1,1]^2 with y = (1 - x^2)(1 - y^2) + x y."""
    b = np.asarray(velocity, dtype=float)

    def source(points):
        p = np.asarray(points, dtype=float).reshape(-1, 2)
        return nu * _bump_neg_laplacian(p) + _mms_state_grad(p) @ b

    prob = ProblemData(name="mms-state", domain=(-1.0, 1.0, -1.0, 1.0), diffusion=constant(nu),
                       convection=constant_vector(b), source=source, dirichlet=_mms_state,
                       target=constant(0.0), diffusion_scale=nu, meta=dict(nu=nu))
    return Manufactured(prob, _mms_state, _mms_state_grad)


def manufactured_control(nu: float = 1.0, velocity=(1.0, 0.5), mu: float = 1.0) -> Manufactured:
    """Unconstrained control problem whose optimum is y = (1 - x^2)(1 - y^2) + x y,
    p = (1 - x^2)(1 - y^2), u = -p / mu; source and target are derived from them."""
    b = np.asarray(velocity, dtype=float)

    def control(points):
        return -_bump(np.asarray(points, dtype=float).reshape(-1, 2)) / mu

    def source(points):
        p = np.asarray(points, dtype=float).reshape(-1, 2)
        return nu * _bump_neg_laplacian(p) + _mms_state_grad(p) @ b - control(p)

    def target(points):
        # adjoint: -nu lap p - b . grad p = y - y^d
        p = np.asarray(points, dtype=float).reshape(-1, 2)
        return _mms_state(p) - (nu * _bump_neg_laplacian(p) - _bump_grad(p) @ b)

    prob = ProblemData(name="mms-control", domain=(-1.0, 1.0, -1.0, 1.0), diffusion=constant(nu),
                       convection=constant_vector(b), source=source, dirichlet=_mms_state,
                       target=target, diffusion_scale=nu, meta=dict(nu=nu))
    return Manufactured(prob, _mms_state, _mms_state_grad, control=control, mu=mu)
