import itertools
import math

import numpy as np
import pytest
from scipy.stats import binomtest

from posnet.linalg import NotMetzlerError
from posnet.model import FiniteMatrixDistribution, NetworkModel, SupportOverflowError
from posnet.montecarlo import (McReport, Sampler, brute_force_prob, clopper_pearson, estimate_instability_curve,
                               estimate_instability_prob, sample_realization, stable_with_rate)

from conftest import ring_model


def test_stable_with_rate_boundary():
    assert stable_with_rate(-np.eye(2), 1.0)
    assert not stable_with_rate(-np.eye(2), 2.0)  # -1 is not < -1
    assert stable_with_rate(-np.eye(2), 1.0, "state") is False
    with pytest.raises(NotMetzlerError):
        stable_with_rate([[0.0, -1.0], [0.0, 0.0]], 0.0)
    with pytest.raises(ValueError):
        stable_with_rate(-np.eye(2), 0.0, "norm")


def test_stable_with_rate_matches_lyapunov_lmi():
    # for Metzler A with Perron value < 0, P = diag(w_i / v_i) built from left/right Perron
    # vectors makes A^T P + P A negative definite; shift by lambda/2 to test the rate
    rng = np.random.default_rng(2)
    for _ in range(100):
        A = rng.uniform(0, 1, (4, 4)) - rng.uniform(1, 3) * np.eye(4)
        lam = rng.uniform(0, 2)
        ev, V = np.linalg.eig(A)
        k = np.argmax(ev.real)
        evl, W = np.linalg.eig(A.T)
        kl = np.argmax(evl.real)
        v, w = np.abs(V[:, k].real), np.abs(W[:, kl].real)
        P = np.diag(w / v)
        M = A.T @ P + P @ A + lam * P
        lmi = np.linalg.eigvalsh(M).max() < 0
        if abs(ev.real.max() + lam / 2) > 1e-9:
            assert stable_with_rate(A, lam) == lmi


def test_clopper_pearson_reference():
    lo, hi = clopper_pearson(0, 100)
    assert lo == 0.0 and hi == pytest.approx(1 - 0.05 ** (1 / 100), rel=1e-10)
    lo, hi = clopper_pearson(7, 50)
    ref = binomtest(7, 50).proportion_ci(0.90, method="exact")
    assert lo == pytest.approx(ref.low, rel=1e-8) and hi == pytest.approx(ref.high, rel=1e-8)
    assert clopper_pearson(50, 50)[1] == 1.0


def test_deterministic_models():
    stable = NetworkModel(1, 1, "a1", {(0, 0): FiniteMatrixDistribution.constant([[-1.0]])})
    assert estimate_instability_prob(stable, 0.5, 100, 0).p_hat == 0.0
    assert estimate_instability_prob(stable, 3.0, 100, 0).p_hat == 1.0
    assert brute_force_prob(stable, 0.5) == 0.0 and brute_force_prob(stable, 3.0) == 1.0
    np.testing.assert_array_equal(sample_realization(stable, 9), [[-1.0]])


def test_single_bernoulli_block():
    m = NetworkModel(1, 1, "a1", {(0, 0): FiniteMatrixDistribution.bernoulli(0.3, [[1.0]], [[-1.0]])})
    assert brute_force_prob(m, 0.0) == pytest.approx(0.3)
    s = Sampler(m)
    hits = sum(s.draw(4, k)[0, 0] == 1.0 for k in range(100000))
    assert abs(hits - 30000) < 3 * math.sqrt(100000 * 0.3 * 0.7)


def test_ring_enumeration_by_hand():
    # 3-cycle with weights x, y, z and diagonal -1: Perron value -1 + (xyz)^(1/3)
    m = ring_model(0.3, 1.5, 0.1)
    for lam in (0.0, 0.5, 1.0, 1.5):
        ref = 0.0
        for combo in itertools.product([(0.3, 1.5), (0.7, 0.1)], repeat=3):
            w = math.prod(c[0] for c in combo)
            g = math.prod(c[1] for c in combo) ** (1 / 3)
            if -1 + g >= -lam / 2:
                ref += w
        assert brute_force_prob(m, lam) == pytest.approx(ref, abs=1e-12)


def test_mc_agrees_with_enumeration_and_threads():
    m = ring_model(0.3, 1.5, 0.1)
    reps = estimate_instability_curve(m, [0.0, 1.0], 4000, seed=12)
    for rep, lam in zip(reps, (0.0, 1.0)):
        exact = brute_force_prob(m, lam)
        assert rep.ci_lower <= exact <= rep.ci_upper
    again = estimate_instability_curve(m, [0.0, 1.0], 4000, seed=12, threads=3)
    assert [r.to_json() for r in reps] == [r.to_json() for r in again]


def test_report_formats():
    rep = McReport.from_counts(3, 10, 5, 0.25)
    assert 0 <= rep.p_hat <= rep.ci_upper <= 1 and rep.ci_lower <= rep.p_hat
    lines = rep.csv_row(header=True).splitlines()
    assert lines[0].startswith("samples,failures,p_hat") and lines[1].startswith("10,3,0.3,")


def test_support_overflow():
    m = ring_model()
    with pytest.raises(SupportOverflowError) as exc:
        brute_force_prob(m, 0.0, cap=4)
    assert exc.value.size == 8


def test_a2_sampling_matches_row_support():
    m = ring_model().to_a2()
    s = Sampler(m)
    seen = {tuple(s.draw(1, k).ravel()) for k in range(200)}
    assert len(seen) == 8
    assert brute_force_prob(m, 0.0) == pytest.approx(brute_force_prob(ring_model(), 0.0))
