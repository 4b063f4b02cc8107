import csv
import warnings

import numpy as np
import pytest
import scipy.sparse.linalg as spla

from stochdg import sipg
from stochdg.benchmarks import (CSV_COLUMNS, CaseSpec, convergence_study, forward_solve,
                                run_benchmark, run_case, write_csv)
from stochdg.chaos import build_basis
from stochdg.errors import ContractViolation
from stochdg.mesh import build_uniform
from stochdg.problems import assemble_blocks, example_problem
from stochdg.solvers import SolverConfig


def test_forward_solve_matches_collocation():
    # [DERIVED] SG mean/variance vs tensor Gauss collocation of deterministic solves
    mesh = build_uniform((-1, 1, -1, 1), 2)
    prob = example_problem("6.1", n_terms=2, kappa=0.2)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        blocks = assemble_blocks(mesh, prob)
    basis = build_basis(2, 4)
    Y = forward_solve(blocks, basis)
    t, w = np.polynomial.legendre.leggauss(6)
    sols, weights = [], []
    for i, t1 in enumerate(np.sqrt(3) * t):
        for j, t2 in enumerate(np.sqrt(3) * t):
            a = lambda p: prob.random_diffusion.evaluate(p, [t1, t2])
            K = sipg.assemble_stiffness(mesh, a, prob.convection)
            f = sipg.assemble_loads(mesh, prob.dirichlet, None, a, prob.convection)
            sols.append(spla.spsolve(K.tocsc(), f))
            weights.append(w[i] * w[j] / 4)
    S, W = np.array(sols), np.array(weights)
    mean = W @ S
    var = W @ (S - mean) ** 2
    np.testing.assert_allclose(Y[:, 0], mean, atol=1e-5)
    np.testing.assert_allclose((Y[:, 1:] ** 2).sum(axis=1), var, atol=1e-5 * var.max() + 1e-8)


def test_run_case_small():
    res = run_case(CaseSpec(example="6.2", level=2, n_terms=2, order=2))
    assert res.report.converged
    row = res.row()
    assert set(row) == set(CSV_COLUMNS)
    assert row["N_d"] == 96 and row["mu"] == 1.0 and row["gamma"] == 0.0


def test_example_63_defaults_and_bound():
    res = run_case(CaseSpec(example="6.3", level=2, n_terms=2, order=2))
    assert res.spec.mu == 1e-6 and res.spec.u_b == 100.0
    assert res.U[:, 0].max() <= 100.0 + 1e-6
    assert res.report.converged


def test_benchmark_sweep_and_csv(tmp_path):
    rows, flags = run_benchmark("6.2", dict(level=1, n_terms=1, order=2),
                                sweep=[dict(mu=1.0), dict(mu=1e-2), dict(mu=1.0)])
    assert len(rows) == 2 and all(flags)
    path = tmp_path / "t.csv"
    write_csv(rows, path)
    with open(path) as fh:
        back = list(csv.DictReader(fh))
    assert tuple(back[0]) == CSV_COLUMNS
    assert float(back[1]["mu"]) == 1e-2
    write_csv(rows, path, append=True)
    assert len(path.read_text().splitlines()) == 5


def test_benchmark_unknown_example():
    with pytest.raises(ContractViolation):
        run_benchmark("7.1")


def test_write_csv_reports_path(tmp_path):
    with pytest.raises(OSError, match="nonexistent"):
        write_csv([], tmp_path / "nonexistent" / "x.csv")


def test_convergence_study_rows():
    rows = convergence_study((1, 2, 3))
    assert [r["level"] for r in rows] == [1, 2, 3]
    assert rows[0]["state_rate"] == "" and rows[2]["state_rate"] > 0.8
    with pytest.raises(ContractViolation):
        convergence_study((2,))
