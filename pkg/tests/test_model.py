import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from posnet.model import (FiniteMatrixDistribution, NetworkModel, SupportOverflowError, block_esssup_dev,
                          block_mean, block_w, check_positivity, load_model, neighborhoods,
                          positivity_violations, row_var_s, save_model)

from conftest import random_positive_model, ring_model


def test_distribution_validation_and_merge():
    d = FiniteMatrixDistribution([0.25, 0.75], [[[1.0]], [[1.0]]])
    assert d.is_deterministic and d.weights[0] == 1.0
    with pytest.raises(ValueError):
        FiniteMatrixDistribution([0.5, 0.6], [[[1.0]], [[2.0]]])
    with pytest.raises(ValueError):
        FiniteMatrixDistribution([1.0], [[[np.inf]]])
    with pytest.raises(ValueError):
        FiniteMatrixDistribution([0.0, 1.0], [[[1.0]], [[2.0]]])
    assert FiniteMatrixDistribution.bernoulli(1.0, [[2.0]], [[0.0]]).is_deterministic


def test_bernoulli_moments():
    r, hi, lo = 0.3, 1.5, 0.1
    d = FiniteMatrixDistribution.bernoulli(r, [[hi]], [[lo]])
    assert block_mean(d)[0, 0] == pytest.approx(r * hi + (1 - r) * lo)
    assert block_w(d)[0, 0] == pytest.approx(r * (1 - r) * (hi - lo) ** 2)
    assert block_esssup_dev(d) == pytest.approx(max(r, 1 - r) * (hi - lo))


def test_w_sides_for_rectangular_support():
    rng = np.random.default_rng(0)
    mats = rng.normal(size=(3, 2, 2))
    d = FiniteMatrixDistribution([0.2, 0.3, 0.5], mats)
    E = block_mean(d)
    EMtM = sum(w * m.T @ m for w, m in zip(d.weights, mats))
    EMMt = sum(w * m @ m.T for w, m in zip(d.weights, mats))
    np.testing.assert_allclose(block_w(d), EMtM - E.T @ E, atol=1e-12)
    np.testing.assert_allclose(block_w(d, "transposed"), EMMt - E @ E.T, atol=1e-12)
    with pytest.raises(ValueError):
        block_w(d, "sideways")


def test_json_roundtrip(tmp_path):
    m = random_positive_model(np.random.default_rng(1), N=3, n=2)
    path = tmp_path / "m.json"
    save_model(m, path)
    back = load_model(path)
    assert back == m
    doc = json.loads(path.read_text())
    assert min(b["i"] for b in doc["blocks"]) == 1  # 1-based on disk


def test_malformed_documents():
    with pytest.raises(ValueError):
        NetworkModel.from_json({"N": 2})
    with pytest.raises(ValueError):
        NetworkModel.from_json({"N": 2, "n": 1, "blocks": [{"i": 3, "j": 1, "support": [{"w": 1, "m": [[1]]}]}]})
    with pytest.raises(ValueError):
        NetworkModel(2, 1, "a3")


def test_a2_conversion_preserves_rows():
    m = ring_model()
    a2 = m.to_a2()
    assert a2.mode == "a2"
    np.testing.assert_allclose(a2.mean_matrix(), m.mean_matrix())
    assert a2.rows[0].size == 2
    with pytest.raises(SupportOverflowError):
        m.row_distribution(0, cap=1)


def test_row_var_matches_dense_definition():
    m = random_positive_model(np.random.default_rng(4), N=3, n=2)
    for i in range(3):
        d = m.row_distribution(i)
        dim = m.dim
        Ss = []
        for R in d.matrices:
            C = np.zeros((dim, dim))
            C[2 * i:2 * i + 2, :] = R
            Ss.append(C + C.T)
        Ss = np.array(Ss)
        ES = np.tensordot(d.weights, Ss, axes=1)
        V = np.tensordot(d.weights, np.einsum("kab,kbc->kac", Ss, Ss), axes=1) - ES @ ES
        np.testing.assert_allclose(row_var_s(m, i), V, atol=1e-10)


def test_positivity_and_neighborhoods():
    m = ring_model()
    assert check_positivity(m)
    nin, nout, deg = neighborhoods(m)
    assert nin[0] == [0, 1] and list(deg) == [2, 2, 2]
    bad = NetworkModel(2, 1, "a1", {(0, 1): FiniteMatrixDistribution([0.5, 0.5], [[[1.0]], [[-1.0]]])})
    msgs = positivity_violations(bad)
    assert len(msgs) == 1 and "(1,2)" in msgs[0]


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6))
def test_mean_matrix_is_expected_realization(seed):
    m = random_positive_model(np.random.default_rng(seed))
    E = np.zeros((m.dim, m.dim))
    for (i, j), d in m.blocks.items():
        E[i, j] = float(d.weights @ d.matrices[:, 0, 0])
    np.testing.assert_allclose(m.mean_matrix(), E, atol=1e-12)
    assert check_positivity(m)
