"""Matrices held as factor pairs W V^T, and the KKT operator/preconditioner acting on them.

A solution triple stores state, control and adjoint as (N_d x J) matrices
whose column j is the spatial coefficient vector of chaos mode j; the
stacked column-major vectorization is the unknown of the full-rank system.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ContractViolation, NumericFailure, ResourceLimitError

MAX_RANK = 500


@dataclass(frozen=True)
class LowRankBlock:
    W: np.ndarray   # (n, r)
    V: np.ndarray   # (J, r)

    def __post_init__(self):
        if self.W.ndim != 2 or self.V.ndim != 2 or self.W.shape[1] != self.V.shape[1]:
            raise ContractViolation(f"factor shapes {self.W.shape} and {self.V.shape} do not pair")

    @classmethod
    def zeros(cls, n: int, J: int) -> "LowRankBlock":
        return cls(np.zeros((n, 0)), np.zeros((J, 0)))

    @classmethod
    def from_dense(cls, X, eps: float = 1e-14) -> "LowRankBlock":
        X = np.asarray(X, dtype=float)
        return truncate(cls(X, np.eye(X.shape[1])), eps)

    @property
    def shape(self):
        return self.W.shape[0], self.V.shape[0]

    @property
    def rank(self) -> int:
        return self.W.shape[1]

    def dense(self) -> np.ndarray:
        return self.W @ self.V.T

    def __add__(self, other):
        return add(self, other)

    def __neg__(self):
        return scale(self, -1.0)

    def __sub__(self, other):
        return add(self, scale(other, -1.0))


def truncate(X: LowRankBlock, eps: float, max_rank: int = MAX_RANK) -> LowRankBlock:
    """Drop singular values below eps * sigma_1 (QR of both factors, SVD of the core)."""
    if not eps > 0:
        raise ContractViolation(f"truncation tolerance must be > 0, got {eps}")
    n, J = X.shape
    if X.rank == 0:
        return X
    Q1, R1 = np.linalg.qr(X.W)
    Q2, R2 = np.linalg.qr(X.V)
    try:
        B, s, Ct = np.linalg.svd(R1 @ R2.T)
    except np.linalg.LinAlgError as exc:
        raise NumericFailure(f"SVD of the {R1.shape[0]}x{R2.shape[0]} core failed") from exc
    if not np.all(np.isfinite(s)):
        raise NumericFailure("non-finite singular values in truncation")
    if s.size == 0 or s[0] == 0.0:
        return LowRankBlock.zeros(n, J)
    r = int(np.count_nonzero(s >= eps * s[0]))
    if r > max_rank:
        raise ResourceLimitError(f"truncated rank {r} exceeds the cap {max_rank}")
    return LowRankBlock(Q1 @ (B[:, :r] * s[:r]), Q2 @ Ct[:r].T)


def add(X: LowRankBlock, Y: LowRankBlock) -> LowRankBlock:
    if X.shape != Y.shape:
        raise ContractViolation(f"cannot add blocks of shape {X.shape} and {Y.shape}")
    return LowRankBlock(np.hstack([X.W, Y.W]), np.hstack([X.V, Y.V]))


def scale(X: LowRankBlock, c: float) -> LowRankBlock:
    return LowRankBlock(c * X.W, X.V)


def inner(X: LowRankBlock, Y: LowRankBlock) -> float:
    """Frobenius inner product via r x r intermediates."""
    if X.shape != Y.shape:
        raise ContractViolation(f"shape mismatch {X.shape} vs {Y.shape}")
    if X.rank == 0 or Y.rank == 0:
        return 0.0
    return float(np.sum((X.W.T @ Y.W) * (X.V.T @ Y.V)))


@dataclass(frozen=True)
class BlockTriple:
    Y: LowRankBlock
    U: LowRankBlock
    P: LowRankBlock

    def __post_init__(self):
        if not (self.Y.shape == self.U.shape == self.P.shape):
            raise ContractViolation(
                f"inconsistent block shapes {self.Y.shape}, {self.U.shape}, {self.P.shape}")

    @classmethod
    def zeros(cls, n: int, J: int) -> "BlockTriple":
        z = LowRankBlock.zeros(n, J)
        return cls(z, z, z)

    @classmethod
    def from_dense(cls, Y, U, P, eps: float = 1e-14) -> "BlockTriple":
        return cls(LowRankBlock.from_dense(Y, eps), LowRankBlock.from_dense(U, eps),
                   LowRankBlock.from_dense(P, eps))

    @property
    def blocks(self):
        return (self.Y, self.U, self.P)

    @property
    def ranks(self):
        return tuple(b.rank for b in self.blocks)

    @property
    def total_rank(self) -> int:
        return sum(self.ranks)

    @property
    def shape(self):
        return self.Y.shape

    def dense(self):
        return tuple(b.dense() for b in self.blocks)

    def vec(self) -> np.ndarray:
        return np.concatenate([b.dense().ravel(order="F") for b in self.blocks])

    def norm(self) -> float:
        return float(np.sqrt(max(trprod(self, self), 0.0)))

    def memory_kb(self) -> float:
        """Factor storage in KB, 8 bytes per entry."""
        n, J = self.shape
        return self.total_rank * (n + J) * 8 / 1024.0

    def __add__(self, other):
        return BlockTriple(*(add(a, b) for a, b in zip(self.blocks, other.blocks)))

    def __sub__(self, other):
        return self + other.scaled(-1.0)

    def scaled(self, c: float) -> "BlockTriple":
        return BlockTriple(*(scale(b, c) for b in self.blocks))

    def truncated(self, eps: float) -> "BlockTriple":
        return BlockTriple(*(truncate(b, eps) for b in self.blocks))


def trprod(A: BlockTriple, B: BlockTriple) -> float:
    return sum(inner(a, b) for a, b in zip(A.blocks, B.blocks))


def combine(coeffs, triples) -> BlockTriple:
    """sum_k c_k T_k by concatenation (untruncated)."""
    out = None
    for c, t in zip(coeffs, triples):
        term = t.scaled(float(c))
        out = term if out is None else out + term
    return out


def _mode0_projector(V):
    out = np.zeros_like(V)
    out[0] = V[0]
    return out


def apply_operator(system, theta: BlockTriple, eps: float | None = None) -> BlockTriple:
    """KKT operator on factor pairs; truncated with ``eps`` when given.

    ``system`` supplies M, K, KT (transposes), G (chaos matrices), gamma_diag,
    mu, inactive (spatial mask) and ``strict`` (deterministic control).
    """
    if theta.shape != (system.n_dofs, system.J):
        raise ContractViolation(f"triple shape {theta.shape} does not match system "
                                f"({system.n_dofs}, {system.J})")
    if getattr(system, "modewise", False):
        raise ContractViolation("modewise active sets have no factored form")
    Y, U, P = theta.blocks
    M, K, KT, G = system.M, system.K, system.KT, system.G
    gd = system.gamma_diag[:, None]
    mask = system.inactive.astype(float)[:, None]

    W1 = [M @ Y.W] + [-(KTi @ P.W) for KTi in KT]
    V1 = [gd * Y.V] + [Gi @ P.V for Gi in G]
    VP2 = _mode0_projector(P.V) if system.strict else P.V
    W2 = [system.mu * U.W, mask * P.W]
    V2 = [U.V, VP2]
    W3 = [-(Ki @ Y.W) for Ki in K] + [M @ U.W]
    V3 = [Gi @ Y.V for Gi in G] + [U.V]

    out = BlockTriple(LowRankBlock(np.hstack(W1), np.hstack(V1)),
                      LowRankBlock(np.hstack(W2), np.hstack(V2)),
                      LowRankBlock(np.hstack(W3), np.hstack(V3)))
    return out.truncated(eps) if eps is not None else out


class MeanPreconditioner:
    """Block-diagonal mean-based preconditioner with an approximate Schur complement.

    Factorizations of M and K0 + sqrt((1 + gamma)/mu) M diag(1_I) are built
    once and reused for every application.
    """

    def __init__(self, system):
        self.system = system
        self._M = spla.splu(system.M.tocsc())
        Kt = system.K[0] + np.sqrt((1.0 + system.gamma) / system.mu) * (
            system.M @ sp.diags(system.inactive.astype(float)))
        try:
            self._K = spla.splu(Kt.tocsc())
        except RuntimeError as exc:
            raise NumericFailure(f"factorization of the Schur-complement matrix failed: {exc}") from exc

    def solve_mass(self, W):
        return self._M.solve(W) if W.shape[1] else W

    def schur_inverse(self, W):
        if W.shape[1] == 0:
            return W
        Z = self._K.solve(W)
        return self._K.solve(self.system.M @ Z, trans="T")

    def apply_dense(self, Y, U, P):
        """Same map on full (N_d x J) mode matrices."""
        gd = self.system.gamma_diag[None, :]
        U = U / self.system.mu
        if self.system.strict:
            U = _mode0_projector(U.T).T
        return self.solve_mass(Y) / gd, U, self.schur_inverse(P) * gd

    def apply(self, theta: BlockTriple, eps: float | None = None) -> BlockTriple:
        sysm = self.system
        Y, U, P = theta.blocks
        gd = sysm.gamma_diag[:, None]
        VU = _mode0_projector(U.V) if sysm.strict else U.V
        out = BlockTriple(LowRankBlock(self.solve_mass(Y.W), Y.V / gd),
                          LowRankBlock(U.W / sysm.mu, VU),
                          LowRankBlock(self.schur_inverse(P.W), gd * P.V))
        return out.truncated(eps) if eps is not None else out


def apply_preconditioner(system, theta: BlockTriple, eps: float | None = None,
                         preconditioner: MeanPreconditioner | None = None) -> BlockTriple:
    pre = preconditioner or MeanPreconditioner(system)
    return pre.apply(theta, eps)

