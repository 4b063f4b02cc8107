import math

import numpy as np
import pytest
import scipy.sparse.linalg as spla
from hypothesis import given, strategies as st

from stochdg.errors import ContractViolation, ResourceLimitError
from stochdg.kkt import (apply_full, build_rhs, make_system, materialize_full, rhs_vector,
                         stochastic_stiffness, update_active_sets)
from stochdg.postproc import cost_functional
from stochdg.solvers import solve_direct

from oracles import dense_kron_operator, random_system, rel_err


@pytest.mark.parametrize("seed", range(4))
def test_materialized_matrix_matches_kronecker_oracle(seed):
    system = random_system(np.random.default_rng(seed))
    np.testing.assert_allclose(materialize_full(system).toarray(), dense_kron_operator(system),
                               atol=1e-12)


def test_rhs_blocks(system_61):
    # [DERIVED] y^d enters mode 0 of the adjoint row, sources enter every chaos column
    s = system_61
    Y, U, P = build_rhs(s).dense()
    np.testing.assert_allclose(Y[:, 0], s.blocks.yd_load)
    assert not np.any(Y[:, 1:]) and not np.any(U)
    F = sum(np.outer(f, g) for f, g in zip(s.blocks.f, s.basis.g))
    np.testing.assert_allclose(P, -F, atol=1e-13)


def test_rhs_bounds_on_active_sets(system_62):
    n = system_62.n_dofs
    minus = np.zeros(n, bool); minus[:3] = True
    plus = np.zeros(n, bool); plus[5:7] = True
    s = make_system(system_62.blocks, system_62.basis, 0.5, 0.0, -1.0, 2.0).with_active_sets(minus, plus)
    U = build_rhs(s).U.dense()
    np.testing.assert_allclose(U[:3, 0], -0.5)
    np.testing.assert_allclose(U[5:7, 0], 1.0)
    assert not np.any(U[:, 1:]) and not np.any(U[7:, 0])


@given(seed=st.integers(0, 10 ** 6), mu=st.floats(1e-6, 10), lo=st.floats(-5, 0), width=st.floats(0, 5))
def test_active_sets_partition(seed, mu, lo, width):
    # [DERIVED] A-, A+ and I are disjoint and cover all DOFs; I is where the projection is inactive
    p = np.random.default_rng(seed).standard_normal(50) * 3
    hi = lo + width
    minus, plus, inactive = update_active_sets(p, mu, lo, hi)
    assert not np.any(minus & plus) and np.all(minus | plus | inactive)
    u = -p / mu
    assert np.array_equal(minus, u < lo)
    assert np.array_equal(plus, (u > hi) & ~minus)


def test_unconstrained_sets_empty():
    minus, plus, inactive = update_active_sets(np.ones(5), 1.0)
    assert not minus.any() and not plus.any() and inactive.all()


def test_modewise_uses_all_columns():
    p = np.array([[0.0, -5.0], [-5.0, 0.0]])
    minus, plus, _ = update_active_sets(p, 1.0, -1.0, 1.0, modewise=True)
    assert plus.shape == (2, 2) and plus[0, 1] and plus[1, 0]
    minus0, plus0, _ = update_active_sets(p, 1.0, -1.0, 1.0)
    assert plus0.shape == (2,) and list(plus0) == [False, True]


@pytest.mark.parametrize("formulation", ["verbatim", "deterministic"])
def test_solution_minimizes_discrete_cost(system_61, formulation):
    # [DERIVED] zero first variation and positive second variation of the reduced cost
    s = make_system(system_61.blocks, system_61.basis, 1e-2, 0.7, formulation=formulation)
    (Y, U, P), rep = solve_direct(s)
    A = stochastic_stiffness(s).tocsc()
    F = sum(np.outer(f, g) for f, g in zip(s.blocks.f, s.basis.g)).ravel("F")
    lu = spla.splu(A)

    def cost(Uc):
        y = lu.solve(F + (s.M @ Uc).ravel("F")).reshape(Uc.shape, order="F")
        return cost_functional(y, Uc, s.blocks, s.mu, s.gamma, strict=s.strict).total

    rng = np.random.default_rng(4)
    j0 = cost(U)
    for _ in range(3):
        D = rng.standard_normal(U.shape)
        if s.strict:
            D[:, 1:] = 0
        t = 1e-3
        jp, jm = cost(U + t * D), cost(U - t * D)
        assert jp > j0 and jm > j0
        assert abs(jp - jm) / (2 * t) < 1e-6 * (jp + jm - 2 * j0) / t ** 2 + 1e-10


def test_validation_errors(system_61):
    b, c = system_61.blocks, system_61.basis
    with pytest.raises(ContractViolation, match="mu"):
        make_system(b, c, 0.0)
    with pytest.raises(ContractViolation, match="gamma"):
        make_system(b, c, 1.0, -1.0)
    with pytest.raises(ContractViolation, match="exceeds"):
        make_system(b, c, 1.0, 0.0, 2.0, 1.0)
    with pytest.raises(ContractViolation, match="formulation"):
        make_system(b, c, 1.0, formulation="other")
    s = make_system(b, c, 1.0, 0.0, -1.0, 1.0)
    both = np.zeros(b.n_dofs, bool); both[0] = True
    with pytest.raises(ContractViolation, match="both"):
        s.with_active_sets(both, both)
    with pytest.raises(ContractViolation, match="infinite"):
        make_system(b, c, 1.0).with_active_sets(both, np.zeros_like(both))
    with pytest.raises(ContractViolation, match="shape"):
        s.with_active_sets(np.zeros(3, bool), np.zeros(3, bool))
    with pytest.raises(ContractViolation):
        s.split(np.zeros(5))


def test_split_stack_roundtrip(system_61):
    s = make_system(system_61.blocks, system_61.basis, 1.0, formulation="deterministic")
    x = np.random.default_rng(0).standard_normal(s.order)
    assert np.array_equal(s.stack(*s.split(x)), x)
    assert s.sizes[1] == s.n_dofs


def test_materialize_limit(system_61):
    with pytest.raises(ResourceLimitError):
        materialize_full(system_61, limit=10)


def test_apply_full_linear(system_62):
    rng = np.random.default_rng(2)
    x, z = rng.standard_normal((2, system_62.order))
    assert rel_err(apply_full(system_62, 2 * x - z), 2 * apply_full(system_62, x) - apply_full(system_62, z)) < 1e-13
    assert rhs_vector(system_62).shape == (system_62.order,)
