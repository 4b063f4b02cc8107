"""Block KKT saddle-point system of the stochastic Galerkin optimal control problem.

Unknowns are (Y, U, P), each an (N_d x J) mode matrix; the full-rank vector
is the column-major stack [vec Y; vec U; vec P]. Block rows:

    M_gamma y - A^T p             = g_0 (x) y^d
    mu u + (I (x) diag(1_I)) p    = mu g_0 (x) (1_{A-} u_a + 1_{A+} u_b)
    -A y + (I (x) M) u            = -sum_i g_i (x) f_i

with A = sum_i G_i (x) K_i and M_gamma = G_gamma (x) M. In the
"deterministic" formulation the control is a single spatial vector u: the
state row couples it through g_0 (x) M and the gradient row reads
mu u + diag(1_I) p_0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp

from .chaos import ChaosBasis, build_gamma_diagonal
from .errors import ContractViolation, ResourceLimitError
from .lowrank import BlockTriple, LowRankBlock
from .sipg import DeterministicBlocks

FORMULATIONS = ("verbatim", "deterministic")
MATERIALIZE_LIMIT = 500_000


def _bound_values(minus, plus, u_a, u_b):
    out = np.zeros(minus.shape)
    out[minus] = u_a
    out[plus] = u_b
    return out


@dataclass(frozen=True)
class KKTSystem:
    blocks: DeterministicBlocks
    basis: ChaosBasis
    mu: float
    gamma: float = 0.0
    u_a: float = -math.inf
    u_b: float = math.inf
    formulation: str = "verbatim"
    active_minus: np.ndarray | None = None
    active_plus: np.ndarray | None = None

    def __post_init__(self):
        if not (np.isfinite(self.mu) and self.mu > 0):
            raise ContractViolation(f"mu must be a positive finite number, got {self.mu}")
        if not (np.isfinite(self.gamma) and self.gamma >= 0):
            raise ContractViolation(f"gamma must be finite and >= 0, got {self.gamma}")
        if self.u_a > self.u_b:
            raise ContractViolation(f"lower bound {self.u_a} exceeds upper bound {self.u_b}")
        if self.formulation not in FORMULATIONS:
            raise ContractViolation(f"formulation must be one of {FORMULATIONS}, got {self.formulation!r}")
        if self.blocks.n_modes != self.basis.n_dim + 1:
            raise ContractViolation(f"{self.blocks.n_modes} spatial modes but chaos dimension "
                                    f"{self.basis.n_dim}")
        n = self.blocks.n_dofs
        for name in ("active_minus", "active_plus"):
            m = getattr(self, name)
            m = np.zeros(n, bool) if m is None else np.asarray(m, bool)
            if m.shape not in ((n,), (n, self.basis.size)):
                raise ContractViolation(f"{name} has shape {m.shape}, expected ({n},) or ({n}, {self.basis.size})")
            object.__setattr__(self, name, m)
        if self.active_minus.shape != self.active_plus.shape:
            raise ContractViolation("active set masks differ in shape")
        if np.any(self.active_minus & self.active_plus):
            raise ContractViolation("a DOF cannot be in both active sets")
        if np.any(self.active_minus) and not math.isfinite(self.u_a):
            raise ContractViolation("lower active set is non-empty but u_a is infinite")
        if np.any(self.active_plus) and not math.isfinite(self.u_b):
            raise ContractViolation("upper active set is non-empty but u_b is infinite")
        if self.modewise and self.strict:
            raise ContractViolation("modewise active sets need the verbatim formulation")
        gd, m0 = build_gamma_diagonal(self.basis, self.gamma)
        object.__setattr__(self, "gamma_diag", gd)
        object.__setattr__(self, "KT", tuple(k.T.tocsr() for k in self.blocks.K))

    # convenient views
    @property
    def M(self):
        return self.blocks.M

    @property
    def K(self):
        return self.blocks.K

    @property
    def G(self):
        return self.basis.G

    @property
    def n_dofs(self) -> int:
        return self.blocks.n_dofs

    @property
    def J(self) -> int:
        return self.basis.size

    @property
    def strict(self) -> bool:
        return self.formulation == "deterministic"

    @property
    def modewise(self) -> bool:
        return self.active_minus.ndim == 2

    @property
    def inactive(self) -> np.ndarray:
        return ~(self.active_minus | self.active_plus)

    @property
    def constrained(self) -> bool:
        return math.isfinite(self.u_a) or math.isfinite(self.u_b)

    @property
    def sizes(self):
        n, J = self.n_dofs, self.J
        return (n * J, n if self.strict else n * J, n * J)

    @property
    def order(self) -> int:
        return sum(self.sizes)

    def with_active_sets(self, minus, plus) -> "KKTSystem":
        return replace(self, active_minus=np.asarray(minus, bool), active_plus=np.asarray(plus, bool))

    # vector <-> mode matrices
    def split(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.order,):
            raise ContractViolation(f"vector has shape {x.shape}, system order is {self.order}")
        n, J = self.n_dofs, self.J
        ny, nu, _ = self.sizes
        Y = x[:ny].reshape((n, J), order="F")
        P = x[ny + nu:].reshape((n, J), order="F")
        if self.strict:
            U = np.zeros((n, J))
            U[:, 0] = x[ny:ny + nu]
        else:
            U = x[ny:ny + nu].reshape((n, J), order="F")
        return Y, U, P

    def stack(self, Y, U, P) -> np.ndarray:
        u = U[:, 0] if self.strict else U.ravel(order="F")
        return np.concatenate([Y.ravel(order="F"), u, P.ravel(order="F")])

    def to_triple(self, x, eps: float = 1e-14) -> BlockTriple:
        return BlockTriple.from_dense(*self.split(x), eps=eps)

    def from_triple(self, theta: BlockTriple) -> np.ndarray:
        return self.stack(*theta.dense())


def make_system(blocks, basis, mu, gamma=0.0, u_a=-math.inf, u_b=math.inf,
                formulation="verbatim") -> KKTSystem:
    return KKTSystem(blocks=blocks, basis=basis, mu=float(mu), gamma=float(gamma),
                     u_a=float(u_a), u_b=float(u_b), formulation=formulation)


def update_active_sets(p, mu: float, u_a: float = -math.inf, u_b: float = math.inf,
                       modewise: bool = False):
    """Masks (A-, A+, I) from the adjoint.

    ``p`` is either the mean mode p_0 (length N_d) or the (N_d x J) mode
    matrix, in which case only column 0 is used unless ``modewise``.
    """
    if not mu > 0:
        raise ContractViolation(f"mu must be > 0, got {mu}")
    if u_a > u_b:
        raise ContractViolation(f"lower bound {u_a} exceeds upper bound {u_b}")
    p = np.asarray(p, dtype=float)
    if p.ndim == 2 and not modewise:
        p = p[:, 0]
    with np.errstate(invalid="ignore"):
        minus = (-p - mu * u_a < 0) if math.isfinite(u_a) else np.zeros(p.shape, bool)
        plus = (-p - mu * u_b > 0) if math.isfinite(u_b) else np.zeros(p.shape, bool)
    plus &= ~minus
    return minus, plus, ~(minus | plus)


def build_rhs(system: KKTSystem) -> BlockTriple:
    """Right-hand side as factor pairs: ranks 1, <= 1 and <= N + 1."""
    n, J = system.n_dofs, system.J
    g = system.basis.g
    yd = system.blocks.yd_load
    B1 = LowRankBlock(yd[:, None].copy(), g[0][:, None].copy()) if np.any(yd) else LowRankBlock.zeros(n, J)

    minus, plus = system.active_minus, system.active_plus
    if minus.ndim == 2:
        minus, plus = minus[:, 0], plus[:, 0]
    b2 = system.mu * _bound_values(minus, plus, system.u_a, system.u_b)
    B2 = LowRankBlock(b2[:, None], g[0][:, None].copy()) if np.any(b2) else LowRankBlock.zeros(n, J)

    F = np.column_stack(system.blocks.f)
    keep = np.any(F != 0, axis=0)
    if np.any(keep):
        B3 = LowRankBlock(-F[:, keep], np.column_stack(g)[:, keep])
    else:
        B3 = LowRankBlock.zeros(n, J)
    return BlockTriple(B1, B2, B3)


def rhs_vector(system: KKTSystem) -> np.ndarray:
    return system.from_triple(build_rhs(system))


def _mode_mult(A, X, G):
    """A X G^T for sparse A (n x n), dense X (n x J), sparse G (J x J)."""
    return (G @ (A @ X).T).T


def apply_full(system: KKTSystem, x) -> np.ndarray:
    Y, U, P = system.split(x)
    gd = system.gamma_diag
    r1 = (system.M @ Y) * gd[None, :]
    r3 = system.M @ U
    for Ki, KTi, Gi in zip(system.K, system.KT, system.G):
        r1 -= _mode_mult(KTi, P, Gi.T)
        r3 -= _mode_mult(Ki, Y, Gi)
    mask = system.inactive
    if system.strict:
        r2 = np.zeros_like(U)
        r2[:, 0] = system.mu * U[:, 0] + mask * P[:, 0]
    else:
        r2 = system.mu * U + (mask[:, None] if mask.ndim == 1 else mask) * P
    return system.stack(r1, r2, r3)


def stochastic_stiffness(system: KKTSystem) -> sp.csr_matrix:
    """A = sum_i G_i (x) K_i as an explicit sparse matrix."""
    A = None
    for Ki, Gi in zip(system.K, system.G):
        term = sp.kron(Gi, Ki, format="csr")
        A = term if A is None else A + term
    return A.tocsr()


def materialize_full(system: KKTSystem, limit: int = MATERIALIZE_LIMIT) -> sp.csr_matrix:
    """Explicit sparse KKT matrix, same action as :func:`apply_full`."""
    if system.order > limit:
        raise ResourceLimitError(f"KKT order {system.order} exceeds the materialization limit {limit}")
    n, J = system.n_dofs, system.J
    A = stochastic_stiffness(system)
    Mg = sp.kron(sp.diags(system.gamma_diag), system.M, format="csr")
    mask = system.inactive
    if system.strict:
        e0 = sp.csr_matrix(([1.0], ([0], [0])), shape=(1, J))
        D = sp.kron(e0, sp.diags(mask.astype(float)), format="csr")       # n x nJ
        C = sp.kron(sp.csr_matrix(system.basis.g[0][:, None]), system.M, format="csr")  # nJ x n
        Iu = sp.identity(n, format="csr")
    else:
        D = sp.diags(np.ravel(np.broadcast_to(mask[:, None] if mask.ndim == 1 else mask, (n, J)),
                              order="F").astype(float), format="csr")
        C = sp.kron(sp.identity(J), system.M, format="csr")
        Iu = sp.identity(n * J, format="csr")
    return sp.bmat([[Mg, None, -A.T],
                    [None, system.mu * Iu, D],
                    [-A, C, None]], format="csr")
