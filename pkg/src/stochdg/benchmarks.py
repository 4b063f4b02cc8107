"""Benchmark cases: build, solve, evaluate, and tabulate."""

from __future__ import annotations

import csv
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
import scipy.sparse.linalg as spla

from . import sipg
from .chaos import ChaosBasis, build_basis
from .errors import ContractViolation, NumericFailure
from .kkt import KKTSystem, make_system
from .lowrank import BlockTriple
from .mesh import build_uniform
from .postproc import (CostBreakdown, MomentFields, convergence_rates, cost_functional,
                       energy_norm_error, l2_error, moments)
from .problems import (EXAMPLES, assemble_blocks, example_problem, manufactured_control,
                       manufactured_state)
from .solvers import SolverConfig, SolverReport, krylov_right, solve_constrained, solve_direct

CSV_COLUMNS = ("example", "nu", "mu", "gamma", "kappa", "N", "Q", "N_d", "J_cost", "tracking",
               "peak_variance", "iters", "rank", "residual", "cpu_s", "memory_kb")

# per-example defaults: (kappa, mu, gamma, u_a, u_b)
EXAMPLE_DEFAULTS = {
    "6.1": dict(kappa=0.5, mu=1.0, gamma=1.0, u_a=-math.inf, u_b=math.inf),
    "6.2": dict(kappa=0.05, mu=1.0, gamma=0.0, u_a=-math.inf, u_b=math.inf),
    "6.3": dict(kappa=0.05, mu=1e-6, gamma=0.0, u_a=-math.inf, u_b=100.0),
}


@dataclass(frozen=True)
class CaseSpec:
    example: str = "6.1"
    level: int = 5
    n_terms: int = 3
    order: int = 3
    kappa: Optional[float] = None
    nu: float = 1.0
    mu: Optional[float] = None
    gamma: Optional[float] = None
    ell: float = 1.0
    mean: float = 1.0
    u_a: Optional[float] = None
    u_b: Optional[float] = None
    formulation: str = "verbatim"
    mode_penalty: bool = False
    sigma_interior: float = sipg.SIGMA_INTERIOR
    sigma_boundary: float = sipg.SIGMA_BOUNDARY
    domain: tuple = (-1.0, 1.0, -1.0, 1.0)
    solver: SolverConfig = field(default_factory=SolverConfig)

    def resolved(self) -> "CaseSpec":
        """Fill example-dependent defaults."""
        ex = str(self.example)
        if ex not in EXAMPLES:
            raise ContractViolation(f"unknown example id {ex!r}; expected one of {EXAMPLES}")
        d = EXAMPLE_DEFAULTS[ex]
        vals = {k: (d[k] if getattr(self, k) is None else getattr(self, k)) for k in d}
        return replace(self, example=ex, **vals)


@dataclass
class CaseResult:
    spec: CaseSpec
    system: KKTSystem
    theta: BlockTriple
    report: SolverReport
    cost: CostBreakdown
    moments: MomentFields
    Y: np.ndarray
    U: np.ndarray
    P: np.ndarray

    def row(self) -> dict:
        s = self.spec
        return dict(example=s.example, nu=s.nu, mu=s.mu, gamma=s.gamma, kappa=s.kappa,
                    N=s.n_terms, Q=s.order, N_d=self.system.n_dofs, J_cost=self.cost.total,
                    tracking=self.cost.tracking, peak_variance=self.moments.peak_variance,
                    iters=self.report.iterations, rank=self.report.total_rank,
                    residual=self.report.residual, cpu_s=self.report.wall_time,
                    memory_kb=self.report.memory_kb)


def forward_solve(blocks: sipg.DeterministicBlocks, basis: ChaosBasis, control=None,
                  tol: float = 1e-12) -> np.ndarray:
    """Stochastic Galerkin state (N_d x J) for a deterministic control (default zero)."""
    n, J = blocks.n_dofs, basis.size
    F = sum(np.outer(fi, gi) for fi, gi in zip(blocks.f, basis.g))
    if control is not None:
        F = F + np.outer(blocks.M @ control, basis.g[0])
    if J == 1:
        return spla.splu(blocks.K[0].tocsc()).solve(F)
    lu = spla.splu(blocks.K[0].tocsc())

    def matvec(v):
        Y = v.reshape((n, J), order="F")
        out = sum((Gi @ (Ki @ Y).T).T for Ki, Gi in zip(blocks.K, basis.G))
        return out.ravel(order="F")

    def precond(v):
        return lu.solve(v.reshape((n, J), order="F")).ravel(order="F")

    y, ok, its, rel = krylov_right(matvec, precond, F.ravel(order="F"), rtol=tol,
                                   restart=min(300, n * J), maxiter=20)
    if not ok:
        raise NumericFailure(f"forward stochastic solve stalled at relative residual {rel:.3e} "
                             f"after {its} iterations")
    return y.reshape((n, J), order="F")


_TARGET_CACHE: dict = {}


def _target_key(spec: CaseSpec):
    return (spec.example, spec.level, spec.n_terms, spec.order, spec.kappa, spec.nu, spec.ell,
            spec.mean, spec.mode_penalty, spec.sigma_interior, spec.sigma_boundary, spec.domain)


def build_case(spec: CaseSpec):
    """Mesh, blocks (with the target resolved) and chaos basis for a case."""
    spec = spec.resolved()
    mesh = build_uniform(spec.domain, spec.level)
    problem = example_problem(spec.example, nu=spec.nu, kappa=spec.kappa, n_terms=spec.n_terms,
                              ell=spec.ell, mean=spec.mean, domain=spec.domain)
    blocks = assemble_blocks(mesh, problem, mode_penalty=spec.mode_penalty,
                             sigma_interior=spec.sigma_interior, sigma_boundary=spec.sigma_boundary)
    basis = build_basis(spec.n_terms, spec.order)
    if problem.target is None:
        key = _target_key(spec)
        if key not in _TARGET_CACHE:
            _TARGET_CACHE[key] = forward_solve(blocks, basis)[:, 0].copy()
        y0 = _TARGET_CACHE[key]
        blocks = blocks.with_target(blocks.M @ y0, y0)
    return spec, mesh, problem, blocks, basis


def run_case(spec: CaseSpec) -> CaseResult:
    t0 = time.perf_counter()
    spec, mesh, problem, blocks, basis = build_case(spec)
    system = make_system(blocks, basis, spec.mu, spec.gamma, spec.u_a, spec.u_b, spec.formulation)
    theta, system, report = solve_constrained(system, spec.solver)
    Y, U, P = theta.dense()
    cost = cost_functional(Y, U, blocks, spec.mu, spec.gamma, strict=system.strict)
    report.wall_time = time.perf_counter() - t0
    return CaseResult(spec=spec, system=system, theta=theta, report=report, cost=cost,
                      moments=moments(Y, basis), Y=Y, U=U, P=P)


# default sweep matrices mirroring the published tables
SWEEPS = {
    "6.1": [dict(nu=nu, mu=mu) for nu in (1.0, 1e-2, 1e-4) for mu in (1.0, 1e-2, 1e-4, 1e-6)]
           + [dict(gamma=g, kappa=k, mu=1.0, nu=1.0) for k in (0.05, 0.25, 0.5) for g in range(5)],
    "6.2": [dict(mu=mu) for mu in (1.0, 1e-2, 1e-4, 1e-6)],
    "6.3": [dict()],
}


def _sweep_specs(example: str, overrides: Optional[dict], sweep):
    example = str(example)
    if example not in EXAMPLES:
        raise ContractViolation(f"unknown example id {example!r}; expected one of {EXAMPLES}")
    overrides = dict(overrides or {})
    points = SWEEPS[example] if sweep is None else sweep
    specs, seen = [], set()
    for point in points:
        params = {**point, **overrides}
        key = tuple(sorted(params.items(), key=lambda kv: kv[0]))
        if key not in seen:
            seen.add(key)
            specs.append(CaseSpec(example=example, **params))
    return specs


def _row_and_flag(spec: CaseSpec):
    res = run_case(spec)
    return res.row(), res.report.converged


def run_benchmark(example: str, overrides: Optional[dict] = None, sweep=None, workers: int = 1):
    """Rows for the sweep of ``example``; ``overrides`` fix parameters for every row.

    Returns (rows, converged flags). With ``workers > 1`` the sweep points are
    solved in separate processes; row order follows the sweep either way.
    """
    specs = _sweep_specs(example, overrides, sweep)
    if workers > 1 and len(specs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            out = list(pool.map(_row_and_flag, specs))
    else:
        out = [_row_and_flag(s) for s in specs]
    return [r for r, _ in out], [c for _, c in out]


def write_csv(rows, path, append: bool = False, columns=CSV_COLUMNS) -> None:
    mode = "a" if append else "w"
    try:
        with open(path, mode, newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=columns, extrasaction="ignore")
            if not append or fh.tell() == 0:
                writer.writeheader()
            for r in rows:
                writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    except OSError as exc:
        raise OSError(f"cannot write CSV report to {path}: {exc}") from exc


CONVERGENCE_COLUMNS = ("level", "N_d", "h", "state_energy_error", "state_rate", "control_l2_error",
                       "control_rate")


def convergence_study(levels=(2, 3, 4, 5), nu: float = 1.0, velocity=(1.0, 0.5), mu: float = 1.0):
    """Mesh-refinement study on manufactured solutions.

    Per level: the energy-norm error of the SIPG state solve and the L2 error
    of the control of a constructed unconstrained control problem, plus the
    rates between successive levels (blank on the first row).
    """
    levels = sorted(int(L) for L in levels)
    if len(levels) < 2:
        raise ContractViolation("a convergence study needs at least two levels")
    ms = manufactured_state(nu, velocity)
    mc = manufactured_control(nu, velocity, mu)
    rows = []
    for L in levels:
        mesh = build_uniform(ms.problem.domain, L)
        blocks = assemble_blocks(mesh, ms.problem)
        y = spla.splu(blocks.K[0].tocsc()).solve(blocks.f[0])
        e_state = energy_norm_error(mesh, y, ms.state, ms.state_grad, ms.problem.diffusion,
                                    ms.problem.convection)
        blocks = assemble_blocks(mesh, mc.problem)
        (_, U, _), _ = solve_direct(make_system(blocks, build_basis(0, 1), mc.mu))
        e_ctrl = l2_error(mesh, U[:, 0], mc.control)
        rows.append(dict(level=L, N_d=mesh.n_dofs, h=2.0 ** (1 - L), state_energy_error=e_state,
                         control_l2_error=e_ctrl, state_rate="", control_rate=""))
    for key, rate_key in (("state_energy_error", "state_rate"), ("control_l2_error", "control_rate")):
        rates = convergence_rates([r[key] for r in rows])
        for r, q in zip(rows[1:], rates):
            r[rate_key] = float(q)
    return rows
