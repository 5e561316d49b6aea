import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from posnet.bernstein import (TailParams, eps_of_rho, kappa, lemma1_lhs, lemma1_lmi, lemma1_lmi_margin,
                              lemma1_scalar, rho_of_eps)

pos = st.floats(1e-3, 1e3)


def test_kappa_values():
    tp = TailParams(delta=1.0, sigma2=1.0, dim=4)
    # a = 3: exponent 9 / (2 + 2) = 2.25
    assert kappa(tp, 3.0) == pytest.approx(4 * math.exp(-2.25), rel=1e-14)
    assert kappa(tp, 0.0) == 4.0
    assert kappa(TailParams(0.0, 0.0, 2), 1.0) == 0.0
    with pytest.raises(ValueError):
        kappa(tp, -1.0)
    with pytest.raises(ValueError):
        TailParams(-1.0, 1.0)


def test_rho_eps_roundtrip():
    assert rho_of_eps(1.0, 1, 1) == 0.0
    assert rho_of_eps(0.2, 1, 200) == pytest.approx(math.log(1000.0))
    assert eps_of_rho(rho_of_eps(0.03, 2, 5), 2, 5) == pytest.approx(0.03, rel=1e-13)
    for bad in (0.0, -1.0, 1.5):
        with pytest.raises(ValueError):
            rho_of_eps(bad, 1, 1)


def test_lmi_boundary_example():
    # delta = 0, sigma = 1, rho = 1: scalar condition 6 / a^2 < 3, i.e. a > sqrt(2)
    assert lemma1_scalar(0.0, 1.0, 1.5, 1.0) and lemma1_lmi(0.0, 1.0, 1.5, 1.0)
    assert not lemma1_scalar(0.0, 1.0, 1.4, 1.0) and not lemma1_lmi(0.0, 1.0, 1.4, 1.0)


@settings(max_examples=300, deadline=None)
@given(pos, pos, pos, st.floats(1e-2, 50), st.integers(1, 4), st.integers(1, 50))
def test_three_forms_agree_away_from_boundary(delta, sigma, a, rho, n, N):
    lhs = lemma1_lhs(delta, sigma, a, rho)
    if abs(lhs - 3.0) < 1e-6 * max(1.0, lhs):
        return
    eps = eps_of_rho(rho, n, N)
    tail = kappa(TailParams(delta, sigma * sigma, n * N), a) < eps
    assert lemma1_scalar(delta, sigma, a, rho) == tail == lemma1_lmi(delta, sigma, a, rho)


@settings(max_examples=200, deadline=None)
@given(pos, pos, pos, st.floats(1e-2, 50), st.floats(1e-3, 1e3))
def test_scale_invariance(delta, sigma, a, rho, c):
    assert lemma1_lhs(c * delta, c * sigma, c * a, rho) == pytest.approx(lemma1_lhs(delta, sigma, a, rho),
                                                                         rel=1e-12)
    m = lemma1_lmi_margin(delta, sigma, a, rho)
    assert lemma1_lmi_margin(c * delta, c * sigma, c * a, rho) == pytest.approx(c * m, rel=1e-8,
                                                                                abs=1e-9 * c * a)


@settings(max_examples=200, deadline=None)
@given(pos, pos, pos, st.floats(1e-2, 50))
def test_monotone_in_a_and_rho(delta, sigma, a, rho):
    if lemma1_scalar(delta, sigma, a, rho):
        assert lemma1_scalar(delta, sigma, 2 * a, rho)
        assert lemma1_scalar(delta, sigma, a, rho / 2)
