"""Matrix Bernstein tail function and its equivalent certificate forms.

For a sum of independent random symmetric ``d x d`` matrices whose deviations
are bounded by ``delta`` almost surely and whose summed variance has norm at
most ``sigma2``, the probability that the top eigenvalue exceeds its mean value
by ``a`` is below ``kappa(a) = d exp(-a^2 / (2 sigma2 + 2 delta a / 3))``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .linalg import sym_eig_min


@dataclass(frozen=True)
class TailParams:
    delta: float
    sigma2: float
    dim: int = 1

    def __post_init__(self):
        if not (math.isfinite(self.delta) and self.delta >= 0):
            raise ValueError("delta must be finite and nonnegative")
        if not (math.isfinite(self.sigma2) and self.sigma2 >= 0):
            raise ValueError("sigma2 must be finite and nonnegative")
        if int(self.dim) != self.dim or self.dim < 1:
            raise ValueError("dim must be a positive integer")


def kappa(tp: TailParams, a: float) -> float:
    if a < 0:
        raise ValueError("a must be nonnegative")
    if a == 0:
        return float(tp.dim)
    denom = 2.0 * tp.sigma2 + 2.0 * tp.delta * a / 3.0
    if denom == 0.0:
        return 0.0  # no randomness: the tail vanishes for every a > 0
    return tp.dim * math.exp(-a * a / denom)


def rho_of_eps(eps: float, n: int, N: int) -> float:
    """rho = log(nN / eps)."""
    if not (0 < eps <= 1):
        raise ValueError(f"eps must lie in (0, 1], got {eps!r}")
    return math.log(n * N) - math.log(eps)


def eps_of_rho(rho: float, n: int, N: int) -> float:
    return n * N * math.exp(-rho)


def lemma1_lhs(delta: float, sigma: float, a: float, rho: float) -> float:
    """2 rho delta / a + 6 rho sigma^2 / a^2."""
    if a <= 0:
        raise ValueError("a must be positive")
    return 2.0 * rho * delta / a + 6.0 * rho * sigma * sigma / (a * a)


def lemma1_scalar(delta: float, sigma: float, a: float, rho: float) -> bool:
    return lemma1_lhs(delta, sigma, a, rho) < 3.0


def lemma1_matrix(delta: float, sigma: float, a: float, rho: float) -> np.ndarray:
    d = a - rho * delta / 3.0
    c = math.sqrt(2.0 * rho) * sigma
    e = rho * delta / 3.0
    return np.array([[d, c, e], [c, d, 0.0], [e, 0.0, d]])


def lemma1_lmi(delta: float, sigma: float, a: float, rho: float) -> bool:
    """Positive definiteness of the 3x3 certificate matrix."""
    if a <= 0:
        raise ValueError("a must be positive")
    return sym_eig_min(lemma1_matrix(delta, sigma, a, rho)) > 0.0


def lemma1_lmi_margin(delta: float, sigma: float, a: float, rho: float) -> float:
    return sym_eig_min(lemma1_matrix(delta, sigma, a, rho))
