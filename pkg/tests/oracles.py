"""Independent reference computations shared by the unit and acceptance tests."""

import numpy as np


def _lagrange(nodes, x):
    L = np.ones((len(nodes), len(x)))
    for a in range(len(nodes)):
        for b in range(len(nodes)):
            if a != b:
                L[a] *= (x - nodes[b]) / (nodes[a] - nodes[b])
    return L


def nystrom_eigenvalues(half_width, ell, n=400, count=5, degree=3):
    """Product-integration Nystrom for exp(-|x-y|/ell) on [-a, a].

    The eigenfunction is interpolated by piecewise polynomials of ``degree``
    on ``n`` uniform nodes; kernel-times-basis integrals are done by Gauss
    rules split at the kink, so the only error is the interpolation.
    """
    if (n - 1) % degree:
        raise ValueError("n - 1 must be a multiple of degree")
    t = np.linspace(-half_width, half_width, n)
    gx, gw = np.polynomial.legendre.leggauss(10)
    A = np.zeros((n, n))
    for k in range(0, n - 1, degree):
        idx = np.arange(k, k + degree + 1)
        lo, hi = t[idx[0]], t[idx[-1]]
        for i in range(n):
            cuts = [lo, t[i], hi] if lo < t[i] < hi else [lo, hi]
            for plo, phi in zip(cuts[:-1], cuts[1:]):
                q = 0.5 * (phi - plo) * gx + 0.5 * (phi + plo)
                w = 0.5 * (phi - plo) * gw
                A[i, idx] += _lagrange(t[idx], q) @ (w * np.exp(-np.abs(t[i] - q) / ell))
    lam = np.linalg.eigvals(A).real
    return np.sort(lam)[::-1][:count]


def dense_kron_operator(system):
    """Dense KKT matrix assembled from explicit Kronecker products (column-major vec)."""
    n, J = system.n_dofs, system.J
    M = system.M.toarray()
    A = sum(np.kron(G.toarray(), K.toarray()) for G, K in zip(system.G, system.K))
    Mg = np.kron(np.diag(system.gamma_diag), M)
    mask = np.diag(system.inactive.astype(float))
    if system.strict:
        e0 = np.zeros((1, J)); e0[0, 0] = 1.0
        D = np.kron(e0, mask)
        C = np.kron(system.basis.g[0][:, None], M)
        Iu = np.eye(n)
    else:
        D = np.kron(np.eye(J), mask)
        C = np.kron(np.eye(J), M)
        Iu = np.eye(n * J)
    nu = Iu.shape[0]
    Z = np.zeros
    return np.block([[Mg, Z((n * J, nu)), -A.T],
                     [Z((nu, n * J)), system.mu * Iu, D],
                     [-A, C, Z((n * J, n * J))]])


def dense_preconditioner(system):
    """Dense block-diagonal mean preconditioner inverse, built from explicit inverses."""
    n, J = system.n_dofs, system.J
    M = system.M.toarray()
    Kt = system.K[0].toarray() + np.sqrt((1 + system.gamma) / system.mu) * M @ np.diag(
        system.inactive.astype(float))
    Kti = np.linalg.inv(Kt)
    gd = system.gamma_diag
    B1 = np.kron(np.diag(1 / gd), np.linalg.inv(M))
    B3 = np.kron(np.diag(gd), Kti.T @ M @ Kti)
    nu = n if system.strict else n * J
    B2 = np.eye(nu) / system.mu
    out = np.zeros((2 * n * J + nu,) * 2)
    out[:n * J, :n * J] = B1
    out[n * J:n * J + nu, n * J:n * J + nu] = B2
    out[n * J + nu:, n * J + nu:] = B3
    return out


def tiny_mesh(n_dofs):
    """Meshes with 6, 12 or 24 DG unknowns."""
    from stochdg.mesh import build_uniform, from_triangles
    if n_dofs == 6:
        return build_uniform((-1, 1, -1, 1), 0)
    if n_dofs == 12:
        v = np.array([[-1, -1], [1, -1], [1, 1], [-1, 1], [0, 0.0]])
        return from_triangles(v, [[0, 1, 4], [1, 2, 4], [2, 3, 4], [3, 0, 4]], (-1, 1, -1, 1))
    if n_dofs == 24:
        return build_uniform((-1, 1, -1, 1), 1)
    raise ValueError(n_dofs)


CHAOS_FOR_J = {3: [(1, 2), (2, 1)], 6: [(1, 5), (2, 2)], 10: [(1, 9), (2, 3)]}


def random_system(rng, n_dofs=None, J=None, formulation=None, active=None):
    """A KKT system on a tiny mesh with random parameters and (optionally) active sets."""
    import warnings
    from stochdg.chaos import build_basis
    from stochdg.kkt import make_system
    from stochdg.problems import assemble_blocks, example_problem

    n_dofs = n_dofs or int(rng.choice([6, 12, 24]))
    J = J or int(rng.choice([3, 6, 10]))
    N, Q = CHAOS_FOR_J[J][int(rng.integers(2))]
    example = str(rng.choice(["6.1", "6.2"]))
    mesh = tiny_mesh(n_dofs)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        blocks = assemble_blocks(mesh, example_problem(example, n_terms=N, kappa=0.2))
    yd = rng.standard_normal(mesh.n_dofs)
    blocks = blocks.with_target(blocks.M @ yd, yd)
    formulation = formulation or str(rng.choice(["verbatim", "deterministic"]))
    mu = float(10.0 ** rng.uniform(-4, 0))
    gamma = float(rng.uniform(0, 3))
    system = make_system(blocks, build_basis(N, Q), mu, gamma, -2.0, 3.0, formulation)
    if active is None:
        active = bool(rng.integers(2))
    if active:
        r = rng.integers(3, size=mesh.n_dofs)
        system = system.with_active_sets(r == 1, r == 2)
    return system


def random_triple(rng, system, ranks=(2, 1, 3)):
    from stochdg.lowrank import BlockTriple, LowRankBlock
    n, J = system.n_dofs, system.J
    blocks = []
    for i, r in enumerate(ranks):
        W, V = rng.standard_normal((n, r)), rng.standard_normal((J, r))
        if i == 1 and system.strict:
            V = np.zeros((J, r)); V[0] = rng.standard_normal(r)
        blocks.append(LowRankBlock(W, V))
    return BlockTriple(*blocks)


def rel_err(a, b):
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))
