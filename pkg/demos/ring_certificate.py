"""Certify a 3-node ring with random couplings and compare against exact and sampled failure rates.

    python demos/ring_certificate.py
"""
import numpy as np

from posnet import FiniteMatrixDistribution, NetworkModel, brute_force_prob, estimate_instability_prob
from posnet import min_unreliability


def ring(r=0.05, hi=0.6, lo=0.1, N=3):
    blocks = {(i, i): FiniteMatrixDistribution.constant([[-1.0]]) for i in range(N)}
    for i in range(N):
        blocks[(i, (i + 1) % N)] = FiniteMatrixDistribution.bernoulli(r, [[hi]], [[lo]])
    return NetworkModel(N, 1, "a1", blocks)


def main():
    model = ring()
    print(f"{'lambda':>7} {'eps*':>10} {'exact':>10} {'MC p_hat':>10} {'MC upper':>10}")
    for lam in np.linspace(0.0, 1.0, 6):
        cert = min_unreliability(model, lam)
        exact = brute_force_prob(model, lam)
        mc = estimate_instability_prob(model, lam, samples=20000, seed=1)
        print(f"{lam:7.2f} {cert.eps_star:10.4g} {exact:10.4g} {mc.p_hat:10.4g} {mc.ci_upper:10.4g}")


if __name__ == "__main__":
    main()
