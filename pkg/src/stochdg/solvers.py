"""Full-rank direct baseline, low-rank preconditioned GMRES, and the active-set outer loop."""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ContractViolation, NumericFailure, ResourceLimitError
from .kkt import (KKTSystem, MATERIALIZE_LIMIT, apply_full, build_rhs, rhs_vector,
                  stochastic_stiffness, update_active_sets)
from .lowrank import (BlockTriple, MeanPreconditioner, apply_operator, combine, trprod)

METHODS = ("direct", "fullrank", "lrpgmres")
DIRECT_LIMIT = 20_000   # reduced order above which sparse LU fill is impractical


@dataclass(frozen=True)
class SolverConfig:
    tol: float = 5e-3
    maxit: int = 250
    trunc: float = 1e-8
    method: str = "direct"
    pdas_max: int = 30
    modewise_active_sets: bool = False
    fullrank_tol: float = 1e-10

    def __post_init__(self):
        if self.method not in METHODS:
            raise ContractViolation(f"method must be one of {METHODS}, got {self.method!r}")
        if not (self.tol > 0 and self.trunc > 0):
            raise ContractViolation(f"tolerances must be positive, got tol={self.tol}, trunc={self.trunc}")
        if self.trunc > self.tol:
            raise ContractViolation(f"truncation tolerance {self.trunc} must not exceed tol {self.tol}")
        if int(self.maxit) != self.maxit or self.maxit < 1:
            raise ContractViolation(f"maxit must be a positive integer, got {self.maxit}")
        if int(self.pdas_max) != self.pdas_max or self.pdas_max < 1:
            raise ContractViolation(f"pdas_max must be a positive integer, got {self.pdas_max}")


@dataclass
class SolverReport:
    method: str
    converged: bool
    iterations: int
    residual: float
    residual_estimate: float = float("nan")
    history: list = field(default_factory=list)
    ranks: tuple = ()
    wall_time: float = 0.0
    memory_kb: float = 0.0
    pdas_iterations: int = 1
    active_set_sizes: list = field(default_factory=list)

    @property
    def total_rank(self) -> int:
        return int(sum(self.ranks))

    def record(self) -> dict:
        out = asdict(self)
        out.pop("history")
        out["ranks"] = "/".join(str(r) for r in self.ranks)
        out["total_rank"] = self.total_rank
        out["active_set_sizes"] = ";".join(f"{a}:{b}" for a, b in self.active_set_sizes)
        return out


def true_residual(system: KKTSystem, theta: BlockTriple, rhs: BlockTriple | None = None) -> float:
    """||B - L theta||_F / ||B||_F with the untruncated operator."""
    rhs = build_rhs(system) if rhs is None else rhs
    bnorm = rhs.norm()
    R = rhs - apply_operator(system, theta)
    r = math.sqrt(max(trprod(R, R), 0.0))
    return r / bnorm if bnorm > 0 else r


# ---------------------------------------------------------------- direct

def _reduced_matrix(system: KKTSystem):
    """Eliminate the control (its block is a scaled identity) before factorizing."""
    n, J = system.n_dofs, system.J
    A = stochastic_stiffness(system)
    Mg = sp.kron(sp.diags(system.gamma_diag), system.M, format="csr")
    mask = system.inactive.astype(float)
    if system.strict:
        e0 = sp.csr_matrix(([1.0], ([0], [0])), shape=(1, J))
        D = sp.kron(e0, sp.diags(mask), format="csr")
        C = sp.kron(sp.csr_matrix(system.basis.g[0][:, None]), system.M, format="csr")
    else:
        full = np.broadcast_to(mask[:, None] if mask.ndim == 1 else mask, (n, J))
        D = sp.diags(np.ravel(full, order="F"), format="csr")
        C = sp.kron(sp.identity(J), system.M, format="csr")
    S = sp.bmat([[Mg, -A.T], [-A, -(C @ D) / system.mu]], format="csc")
    return S, C, D


def solve_direct(system: KKTSystem, limit: int = MATERIALIZE_LIMIT, lu_limit: int = DIRECT_LIMIT):
    """Sparse LU solve of the full-rank system. Returns ((Y, U, P), report).

    The control block is a scaled identity and is eliminated first; the
    remaining (y, p) system must have order at most ``lu_limit``.
    """
    t0 = time.perf_counter()
    if system.order > limit:
        raise ResourceLimitError(f"KKT order {system.order} exceeds the direct-solve limit {limit}")
    reduced = system.sizes[0] + system.sizes[2]
    if reduced > lu_limit:
        raise ResourceLimitError(f"reduced KKT order {reduced} exceeds the sparse LU limit {lu_limit}; "
                                 "use the full-rank Krylov solver")
    b = rhs_vector(system)
    ny, nu, npp = system.sizes
    b1, b2, b3 = b[:ny], b[ny:ny + nu], b[ny + nu:]
    S, C, D = _reduced_matrix(system)
    try:
        lu = spla.splu(S, permc_spec="COLAMD")
    except RuntimeError as exc:
        raise NumericFailure(f"sparse LU of the KKT matrix failed: {exc}") from exc
    yp = lu.solve(np.concatenate([b1, b3 - C @ b2 / system.mu]))
    y, p = yp[:ny], yp[ny:]
    u = (b2 - D @ p) / system.mu
    x = np.concatenate([y, u, p])
    if not np.all(np.isfinite(x)):
        raise NumericFailure("direct solve produced non-finite values")
    res = np.linalg.norm(b - apply_full(system, x)) / max(np.linalg.norm(b), np.finfo(float).tiny)
    Y, U, P = system.split(x)
    report = SolverReport(method="direct", converged=True, iterations=1, residual=float(res),
                          ranks=tuple(int(np.linalg.matrix_rank(Z)) if Z.size else 0 for Z in (Y, U, P)),
                          wall_time=time.perf_counter() - t0,
                          memory_kb=system.order * 8 / 1024.0)
    return (Y, U, P), report


# ---------------------------------------------------------------- full-rank Krylov

def krylov_right(matvec, precond, b, rtol: float, restart: int = 300, maxiter: int = 20):
    """Right-preconditioned restarted GMRES; returns (x, converged, iterations, relres)."""
    n = len(b)
    count = [0]

    def cb(_):
        count[0] += 1

    op = spla.LinearOperator((n, n), matvec=lambda z: matvec(precond(z)), dtype=float)
    z, info = spla.gmres(op, b, rtol=rtol, atol=0.0, restart=restart, maxiter=maxiter,
                         callback=cb, callback_type="pr_norm")
    x = precond(z)
    bn = np.linalg.norm(b)
    rel = np.linalg.norm(b - matvec(x)) / bn if bn > 0 else 0.0
    if not np.all(np.isfinite(x)):
        raise NumericFailure("Krylov solve produced non-finite values")
    return x, info == 0, count[0], float(rel)


def solve_fullrank(system: KKTSystem, config: SolverConfig = SolverConfig()):
    """Full-rank baseline: GMRES on the unfactored system with the mean-based
    preconditioner, iterated to ``config.fullrank_tol``. Returns ((Y, U, P), report)."""
    t0 = time.perf_counter()
    pre = MeanPreconditioner(system)
    b = rhs_vector(system)
    if not np.any(b):
        Z = np.zeros((system.n_dofs, system.J))
        return (Z, Z.copy(), Z.copy()), SolverReport("fullrank", True, 0, 0.0)

    def precond(z):
        return system.stack(*pre.apply_dense(*system.split(z)))

    x, ok, its, rel = krylov_right(lambda v: apply_full(system, v), precond, b,
                                   config.fullrank_tol, restart=min(500, system.order),
                                   maxiter=max(1, 5000 // min(500, system.order)))
    Y, U, P = system.split(x)
    report = SolverReport(method="fullrank", converged=bool(ok and rel <= 10 * config.fullrank_tol),
                          iterations=its, residual=rel,
                          ranks=tuple(int(np.linalg.matrix_rank(Z)) for Z in (Y, U, P)),
                          wall_time=time.perf_counter() - t0, memory_kb=system.order * 8 / 1024.0)
    return (Y, U, P), report


# ---------------------------------------------------------------- low-rank GMRES

class _Identity:
    def apply(self, theta, eps=None):
        return theta.truncated(eps) if eps is not None else theta


def lrpgmres(system: KKTSystem, rhs: BlockTriple | None = None, config: SolverConfig = SolverConfig(),
             x0: BlockTriple | None = None, preconditioner="mean"):
    """Right-preconditioned GMRES on factor pairs with truncation after every step.

    Returns (theta, report). Hitting ``maxit`` is reported through
    ``report.converged = False``.
    """
    if system.modewise:
        raise ContractViolation("modewise active sets are only supported by the direct solver")
    t0 = time.perf_counter()
    eps = config.trunc
    rhs = build_rhs(system) if rhs is None else rhs
    bnorm = rhs.norm()
    n, J = system.n_dofs, system.J
    if preconditioner == "mean":
        pre = MeanPreconditioner(system)
    elif preconditioner is None:
        pre = _Identity()
    else:
        pre = preconditioner

    x0 = BlockTriple.zeros(n, J) if x0 is None else x0
    if bnorm == 0.0:
        rep = SolverReport("lrpgmres", True, 0, 0.0, 0.0, [0.0], x0.ranks,
                           time.perf_counter() - t0, x0.memory_kb())
        return x0, rep

    R0 = (rhs - apply_operator(system, x0)).truncated(eps)
    beta = R0.norm()
    basis = [R0.scaled(1.0 / beta)] if beta > 0 else []
    m = config.maxit
    H = np.zeros((m + 1, m))
    cs, sn = np.zeros(m), np.zeros(m)
    g = np.zeros(m + 1)
    g[0] = beta
    history = [beta / bnorm]
    converged = beta <= config.tol * bnorm
    k = 0
    while not converged and k < m:
        Z = pre.apply(basis[k], eps)
        w = apply_operator(system, Z, eps)
        for j in range(k + 1):
            H[j, k] = trprod(w, basis[j])
            w = (w - basis[j].scaled(H[j, k])).truncated(eps)
        H[k + 1, k] = w.norm()
        # rotate the new column
        for j in range(k):
            a, b = H[j, k], H[j + 1, k]
            H[j, k], H[j + 1, k] = cs[j] * a + sn[j] * b, -sn[j] * a + cs[j] * b
        r = math.hypot(H[k, k], H[k + 1, k])
        cs[k], sn[k] = (1.0, 0.0) if r == 0 else (H[k, k] / r, H[k + 1, k] / r)
        H[k, k], H[k + 1, k] = r, 0.0
        g[k + 1] = -sn[k] * g[k]
        g[k] = cs[k] * g[k]
        history.append(abs(g[k + 1]) / bnorm)
        breakdown = w.norm() <= 1e-14 * bnorm
        k += 1
        converged = abs(g[k]) <= config.tol * bnorm
        if converged or breakdown or k == m:
            break
        basis.append(w.scaled(1.0 / w.norm()))

    if k > 0:
        coef = np.linalg.solve(np.triu(H[:k, :k]), g[:k]) if np.all(np.diag(H[:k, :k]) != 0) \
            else np.linalg.lstsq(np.triu(H[:k, :k]), g[:k], rcond=None)[0]
        corr = combine(coef, basis[:k]).truncated(eps)
        x = (x0 + pre.apply(corr, eps)).truncated(eps)
    else:
        x = x0
    res = true_residual(system, x, rhs)
    report = SolverReport(method="lrpgmres", converged=bool(converged), iterations=k,
                          residual=res, residual_estimate=abs(g[k]) / bnorm, history=history,
                          ranks=x.ranks, wall_time=time.perf_counter() - t0, memory_kb=x.memory_kb())
    return x, report


# ---------------------------------------------------------------- PDAS

def solve(system: KKTSystem, config: SolverConfig = SolverConfig()):
    """Single inner solve with the configured method; returns (theta, report)."""
    if config.method in ("direct", "fullrank"):
        fn = solve_direct if config.method == "direct" else (lambda s: solve_fullrank(s, config))
        (Y, U, P), rep = fn(system)
        return BlockTriple.from_dense(Y, U, P, eps=1e-14), rep
    return lrpgmres(system, config=config)


def solve_constrained(system: KKTSystem, config: SolverConfig = SolverConfig()):
    """Primal-dual active set loop, stopped at an active-set fixed point.

    Returns (theta, final system, report); ``report.converged`` is False when
    the outer loop hits ``pdas_max`` or the last inner solve did not converge.
    """
    t0 = time.perf_counter()
    modewise = config.modewise_active_sets
    n, J = system.n_dofs, system.J
    p0 = np.zeros((n, J)) if modewise else np.zeros(n)
    minus, plus, _ = update_active_sets(p0, system.mu, system.u_a, system.u_b, modewise)
    current = system.with_active_sets(minus, plus)
    sizes = []
    fixed = False
    for it in range(1, config.pdas_max + 1):
        theta, rep = solve(current, config)
        sizes.append((int(current.active_minus.sum()), int(current.active_plus.sum())))
        if not current.constrained:
            fixed = True
            break
        P = theta.P.dense()
        minus, plus, _ = update_active_sets(P, system.mu, system.u_a, system.u_b, modewise)
        if np.array_equal(minus, current.active_minus) and np.array_equal(plus, current.active_plus):
            fixed = True
            break
        current = current.with_active_sets(minus, plus)
    rep = replace(rep, converged=bool(rep.converged and fixed), pdas_iterations=it,
                  active_set_sizes=sizes, wall_time=time.perf_counter() - t0)
    return theta, current, rep
