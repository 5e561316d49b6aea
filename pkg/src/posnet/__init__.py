"""Probabilistic stability certificates for random positive networks."""
from .certify import (CertificateParams, CertResult, MomentTable, check_certificate, min_unreliability,
                      search_certificate)
from .design import DesignFamily, DesignResult, solve_design
from .gpsolve import GeometricProgram, gp_solve
from .model import FiniteMatrixDistribution, NetworkModel, load_model, save_model
from .montecarlo import brute_force_prob, estimate_instability_prob, stable_with_rate

__all__ = [
    "CertificateParams", "CertResult", "MomentTable", "check_certificate", "min_unreliability",
    "search_certificate", "DesignFamily", "DesignResult", "solve_design", "GeometricProgram", "gp_solve",
    "FiniteMatrixDistribution", "NetworkModel", "load_model", "save_model", "brute_force_prob",
    "estimate_instability_prob", "stable_with_rate",
]
__version__ = "0.1.0"
