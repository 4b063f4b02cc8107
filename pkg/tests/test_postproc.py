import numpy as np
import pytest
from hypothesis import given, strategies as st

from stochdg import sipg
from stochdg.chaos import build_basis
from stochdg.mesh import build_uniform
from stochdg.postproc import (convergence_rates, cost_functional, energy_norm_error, field_table,
                              l2_error, moments, stochastic_energy_norm_error)
from stochdg.problems import constant, constant_vector

from conftest import small_blocks

MESH = build_uniform((-1, 1, -1, 1), 2)


@given(seed=st.integers(0, 10 ** 6))
def test_variance_matches_sampling_of_expansion(seed):
    # [DERIVED] Var = sum_{j>=1} Y_j^2 for an orthonormal chaos; checked by quadrature over xi
    rng = np.random.default_rng(seed)
    basis = build_basis(2, 2)
    Y = rng.standard_normal((5, basis.size))
    t, w = np.polynomial.legendre.leggauss(4)
    T1, T2 = np.meshgrid(np.sqrt(3) * t, np.sqrt(3) * t)
    xi = np.column_stack([T1.ravel(), T2.ravel()])
    W = np.outer(w / 2, w / 2).ravel()
    vals = basis.evaluate(xi) @ Y.T
    mean = W @ vals
    var = W @ (vals - mean) ** 2
    mom = moments(Y, basis)
    np.testing.assert_allclose(mom.mean, mean, atol=1e-12)
    np.testing.assert_allclose(mom.variance, var, atol=1e-11)
    assert mom.peak_variance == pytest.approx(var.max())
    np.testing.assert_allclose(mom.std ** 2, mom.variance)


def test_cost_terms():
    # [DERIVED] J = tracking/2 + gamma var/2 + mu |u|^2/2 in the mass norm
    bl = small_blocks("6.2", level=1, n_terms=1)
    n = bl.n_dofs
    rng = np.random.default_rng(0)
    Y, U = rng.standard_normal((n, 3)), rng.standard_normal((n, 3))
    M = bl.M.toarray()
    e0 = Y[:, 0] - bl.yd_coeff
    var = sum(Y[:, j] @ M @ Y[:, j] for j in (1, 2))
    c = cost_functional(Y, U, bl, 0.1, 2.0)
    assert c.variance == pytest.approx(var)
    assert c.tracking == pytest.approx(e0 @ M @ e0 + var)
    assert c.control == pytest.approx(sum(U[:, j] @ M @ U[:, j] for j in range(3)))
    assert c.total == pytest.approx(0.5 * c.tracking + var + 0.05 * c.control)
    strict = cost_functional(Y, U, bl, 0.1, 2.0, strict=True)
    assert strict.control == pytest.approx(U[:, 0] @ M @ U[:, 0])


def test_energy_error_vanishes_on_linears():
    u = lambda p: 1 + 2 * p[:, 0] - p[:, 1]
    grad = lambda p: np.tile([2.0, -1.0], (len(p), 1))
    c = sipg.interpolate(MESH, u)
    assert energy_norm_error(MESH, c, u, grad, constant(1.0), constant_vector((1, 1))) < 1e-12
    assert l2_error(MESH, c, u) < 1e-13


def test_energy_error_of_constant_shift():
    # [DERIVED] y_h = y + 1 has zero gradient error and no interior jumps: only sigma |boundary|
    u = lambda p: p[:, 0] * 0.0
    grad = lambda p: np.zeros((len(p), 2))
    c = np.ones(MESH.n_dofs)
    e = energy_norm_error(MESH, c, u, grad, constant(1.0))
    n_boundary = len(MESH.boundary_edges)
    assert e ** 2 == pytest.approx(sipg.SIGMA_BOUNDARY * n_boundary)


def test_stochastic_energy_error_reduces_to_deterministic():
    u = lambda p: p[:, 0] ** 2
    grad = lambda p: np.column_stack([2 * p[:, 0], 0 * p[:, 0]])
    c = sipg.interpolate(MESH, lambda p: 0.9 * p[:, 0] ** 2)
    basis = build_basis(1, 1)
    Y = np.column_stack([c, np.zeros_like(c)])
    det = energy_norm_error(MESH, c, u, grad, constant(1.0))
    sto = stochastic_energy_norm_error(MESH, Y, basis, lambda p, xi: u(p), lambda p, xi: grad(p),
                                       lambda p, xi: np.ones(len(p)))
    assert sto == pytest.approx(det, rel=1e-12)


def test_rates():
    np.testing.assert_allclose(convergence_rates([1.0, 0.5, 0.125]), [1.0, 2.0])


def test_field_table():
    Y = np.random.default_rng(1).standard_normal((MESH.n_dofs, 3))
    tab = field_table(MESH, Y)
    assert tab.shape == (MESH.n_dofs, 5)
    np.testing.assert_allclose(tab[:, 3], (Y[:, 1:] ** 2).sum(axis=1))
