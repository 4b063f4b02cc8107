"""Truncated Karhunen-Loeve expansions for the separable exponential covariance.

The 1D kernel exp(-|x - y| / l) on [c - a, c + a] has closed-form
eigenpairs. With w the frequency, even modes cos(w (x - c)) satisfy
1/l - w tan(w a) = 0 and odd modes sin(w (x - c)) satisfy
w + tan(w a) / l = 0; both share the eigenvalue (2/l) / (w^2 + 1/l^2).
The 2D kernel is the product of two 1D kernels, so its eigenpairs are
products of 1D eigenpairs.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import brentq

from .errors import ContractViolation, NumericFailure

SQRT3 = math.sqrt(3.0)


@dataclass(frozen=True)
class Eigenpair1D:
    omega: float
    eigenvalue: float
    even: bool
    half_width: float
    center: float = 0.0

    @property
    def norm(self) -> float:
        w, a = self.omega, self.half_width
        s = math.sin(2 * w * a) / (2 * w)
        return math.sqrt(a + s if self.even else a - s)

    def __call__(self, x):
        t = np.asarray(x, dtype=float) - self.center
        if self.even:
            return np.cos(self.omega * t) / self.norm
        return np.sin(self.omega * t) / self.norm


def _root(fun, lo, hi, label):
    flo, fhi = fun(lo), fun(hi)
    if not (np.isfinite(flo) and np.isfinite(fhi)) or flo * fhi > 0:
        raise NumericFailure(
            f"{label}: no sign change on bracket [{lo!r}, {hi!r}] (f = {flo!r}, {fhi!r})")
    root = brentq(fun, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    if abs(fun(root)) > 1e-12 * max(1.0, abs(root)):
        raise NumericFailure(f"{label}: residual {fun(root)!r} at root {root!r} on [{lo!r}, {hi!r}]")
    return root


def solve_1d_eigenpairs(half_width: float, correlation_length: float, count: int,
                        center: float = 0.0) -> list[Eigenpair1D]:
    """The ``count`` largest eigenpairs of exp(-|x-y|/l) on [center-a, center+a]."""
    a, ell = float(half_width), float(correlation_length)
    if not (a > 0 and ell > 0):
        raise ContractViolation(f"half_width and correlation_length must be positive, got {a}, {ell}")
    if count < 1:
        raise ContractViolation(f"count must be >= 1, got {count}")
    c = 1.0 / ell

    # sign-regular forms of the two transcendental equations (no tan poles)
    def even_eq(w):
        return c * math.cos(w * a) - w * math.sin(w * a)

    def odd_eq(w):
        return w * math.cos(w * a) + c * math.sin(w * a)

    pairs = []
    for k in range(count):
        lo, hi = k * math.pi / a, (k + 0.5) * math.pi / a
        w = _root(even_eq, lo, hi, f"even root {k}")
        pairs.append(Eigenpair1D(w, 2 * c / (w * w + c * c), True, a, center))
        lo, hi = (k + 0.5) * math.pi / a, (k + 1) * math.pi / a
        w = _root(odd_eq, lo, hi, f"odd root {k}")
        pairs.append(Eigenpair1D(w, 2 * c / (w * w + c * c), False, a, center))
    pairs.sort(key=lambda p: p.omega)
    return pairs[:count]


@dataclass(frozen=True)
class KLMode:
    eigenvalue: float
    x_pair: Eigenpair1D
    y_pair: Eigenpair1D
    index: tuple

    def __call__(self, points):
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        return self.x_pair(pts[:, 0]) * self.y_pair(pts[:, 1])


@dataclass(frozen=True)
class KLField:
    """eta_N(x, xi) = mean(x) + kappa * sum_k sqrt(lambda_k) phi_k(x) xi_k."""
    mean_field: Callable
    kappa: float
    correlation_lengths: tuple
    modes: tuple = field(default_factory=tuple)

    @property
    def n_terms(self) -> int:
        return len(self.modes)

    def mean(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        return np.broadcast_to(np.asarray(self.mean_field(pts), dtype=float), (len(pts),)).copy()

    def fluctuation(self, k: int, points) -> np.ndarray:
        """kappa sqrt(lambda_k) phi_k at ``points`` for 1-based mode index k."""
        mode = self.modes[k - 1]
        return self.kappa * math.sqrt(mode.eigenvalue) * mode(points)

    def evaluate(self, points, xi) -> np.ndarray:
        xi = np.asarray(xi, dtype=float).ravel()
        if xi.size != self.n_terms:
            raise ContractViolation(f"xi has length {xi.size}, field has {self.n_terms} terms")
        val = self.mean(points)
        for k, x in enumerate(xi, start=1):
            if x != 0.0:
                val = val + x * self.fluctuation(k, points)
        return val

    def worst_case_minimum(self, points) -> float:
        """min over points of the field when every xi_k = -/+sqrt(3) opposes the mode sign."""
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        spread = np.zeros(len(pts))
        for k in range(1, self.n_terms + 1):
            spread += np.abs(self.fluctuation(k, pts))
        return float(np.min(self.mean(pts) - SQRT3 * spread))


def evaluate_field(field_: KLField, x, xi) -> float:
    val = field_.evaluate(np.atleast_2d(np.asarray(x, dtype=float)), xi)
    return float(val[0]) if val.size == 1 else val


def _constant(value):
    def mean(points):
        return np.full(len(np.asarray(points).reshape(-1, 2)), float(value))
    return mean


def build_2d_field(mean_field, kappa: float, ell_1: float, ell_2: float, n_terms: int,
                   domain: Sequence[float] = (-1.0, 1.0, -1.0, 1.0)) -> KLField:
    """Top ``n_terms`` product eigenpairs of the separable exponential kernel on a rectangle.

    ``mean_field`` may be a number or a callable on (n, 2) point arrays.
    Ties in the product spectrum are broken by the (i, j) index pair.
    """
    if n_terms < 1:
        raise ContractViolation(f"n_terms must be >= 1, got {n_terms}")
    if kappa < 0:
        raise ContractViolation(f"kappa must be >= 0, got {kappa}")
    if not callable(mean_field):
        mean_field = _constant(mean_field)
    x0, x1, y0, y1 = (float(v) for v in domain)
    ax, cx = 0.5 * (x1 - x0), 0.5 * (x1 + x0)
    ay, cy = 0.5 * (y1 - y0), 0.5 * (y1 + y0)

    m = math.ceil(math.sqrt(n_terms)) + 3
    while True:
        px = solve_1d_eigenpairs(ax, ell_1, m + 1, cx)
        py = solve_1d_eigenpairs(ay, ell_2, m + 1, cy)
        cand = [(px[i].eigenvalue * py[j].eigenvalue, i, j) for i in range(m) for j in range(m)]
        cand.sort(key=lambda t: (-t[0], t[1], t[2]))
        kept = cand[:n_terms]
        # every product outside the m x m pool is bounded by these two
        outside = max(px[m].eigenvalue * py[0].eigenvalue, px[0].eigenvalue * py[m].eigenvalue)
        if len(kept) == n_terms and kept[-1][0] > outside:
            break
        m *= 2
    modes = tuple(KLMode(lam, px[i], py[j], (i, j)) for lam, i, j in kept)
    return KLField(mean_field=mean_field, kappa=float(kappa),
                   correlation_lengths=(float(ell_1), float(ell_2)), modes=modes)


def check_positivity(field_: KLField, points, label: str = "diffusion") -> float:
    """Warn when the worst-case realization of ``field_`` is not positive at ``points``."""
    low = field_.worst_case_minimum(points)
    if low <= 0:
        warnings.warn(f"{label} field can become non-positive: worst-case minimum {low:.3e}",
                      RuntimeWarning, stacklevel=2)
    return low
