"""Robust optimal control of convection-diffusion equations with random coefficients:
stochastic Galerkin in the random variables, SIPG in space, low-rank preconditioned GMRES
on the Kronecker-structured KKT system."""

from .benchmarks import CaseSpec, convergence_study, run_benchmark, run_case
from .chaos import ChaosBasis, basis_size, build_basis
from .errors import (ContractViolation, InvalidDomainError, NumericFailure, ResourceLimitError,
                     StochDGError)
from .kkt import KKTSystem, build_rhs, make_system, update_active_sets
from .kl_field import KLField, build_2d_field, solve_1d_eigenpairs
from .lowrank import BlockTriple, LowRankBlock, apply_operator, apply_preconditioner, trprod, truncate
from .mesh import Mesh, build_uniform
from .problems import example_problem
from .solvers import SolverConfig, SolverReport, lrpgmres, solve, solve_constrained, solve_direct

__version__ = "0.1.0"

__all__ = [
    "BlockTriple", "CaseSpec", "ChaosBasis", "ContractViolation", "InvalidDomainError", "KKTSystem",
    "KLField", "LowRankBlock", "Mesh", "NumericFailure", "ResourceLimitError", "SolverConfig",
    "SolverReport", "StochDGError", "apply_operator", "apply_preconditioner", "basis_size",
    "build_2d_field", "build_basis", "build_rhs", "build_uniform", "convergence_study",
    "example_problem", "lrpgmres", "make_system", "run_benchmark", "run_case", "solve",
    "solve_1d_eigenpairs", "solve_constrained", "solve_direct", "trprod", "truncate",
    "update_active_sets",
]
