"""Numeric tolerances shared by every module.

All defaults live here so a single record documents what "equal", "feasible"
and "converged" mean throughout the package.
"""
from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class NumericPolicy:
    # symmetric input check: ||M - M^T||_max <= sym_tol * max(1, ||M||_max)
    sym_tol: float = 1e-10
    # PSD checks: lambda_min >= -psd_tol * ||M||
    psd_tol: float = 1e-10
    # psd_sqrt rank threshold relative to lambda_max
    rank_tol: float = 1e-12
    # absolute accuracy target of eigenvalue kernels, scaled by max(1, ||M||)
    eig_tol: float = 1e-9
    # off-diagonal slack tolerated when checking the Metzler property
    metzler_tol: float = 1e-12
    perron_max_iter: int = 5000
    # distribution weights must sum to one within this
    weight_tol: float = 1e-12
    # margin on strict certificate inequalities
    strict_margin: float = 1e-9
    # A1 -> A2 product-support cap and brute-force enumeration cap
    support_cap: int = 10**6
    # reported floor for a zero minimum unreliability
    eps_floor: float = 1e-300
    bisect_rtol: float = 1e-3
    bisect_max_iter: int = 60
    gp_tol: float = 1e-7
    gp_max_newton: int = 500
    gp_feas_tol: float = 1e-8


DEFAULT = NumericPolicy()
