import numpy as np
import pytest

from posnet.model import FiniteMatrixDistribution, NetworkModel


def ring_model(r=0.3, hi=1.5, lo=0.1, diag=-1.0, N=3):
    blocks = {(i, i): FiniteMatrixDistribution.constant([[diag]]) for i in range(N)}
    for i in range(N):
        blocks[(i, (i + 1) % N)] = FiniteMatrixDistribution.bernoulli(r, [[hi]], [[lo]])
    return NetworkModel(N, 1, "a1", blocks)


def random_positive_model(rng, N=None, max_support=1024, n=1):
    """Random Metzler-valued a1 model with small joint support."""
    N = N or int(rng.integers(2, 5))
    blocks = {}
    size = 1
    for i in range(N):
        blocks[(i, i)] = FiniteMatrixDistribution.constant(-rng.uniform(1.0, 3.0) * np.eye(n))
    pairs = [(i, j) for i in range(N) for j in range(N) if i != j]
    rng.shuffle(pairs)
    for i, j in pairs[: int(rng.integers(1, len(pairs) + 1))]:
        k = int(rng.integers(1, 4))
        if size * k > max_support:
            k = 1
        size *= k
        w = rng.dirichlet(np.ones(k))
        mats = rng.uniform(0.0, 1.2, size=(k, n, n))
        blocks[(i, j)] = FiniteMatrixDistribution(w / w.sum(), mats)
    return NetworkModel(N, n, "a1", blocks)


@pytest.fixture
def ring():
    return ring_model()


def rare_spike_model(rng, max_support=1024):
    """Random a1 model whose edges jump to a large gain with small probability.

    Some realizations are unstable, so exact failure probabilities are positive.
    """
    N = int(rng.integers(2, 5))
    blocks = {(i, i): FiniteMatrixDistribution.constant([[-rng.uniform(0.8, 1.5)]]) for i in range(N)}
    pairs = [(i, j) for i in range(N) for j in range(N) if i != j]
    rng.shuffle(pairs)
    size = 1
    for i, j in pairs[: int(rng.integers(N, len(pairs) + 1))]:
        if size * 2 > max_support:
            break
        size *= 2
        r = 10 ** rng.uniform(-3, -1)
        blocks[(i, j)] = FiniteMatrixDistribution.bernoulli(r, [[rng.uniform(1.0, 4.0)]], [[rng.uniform(0.0, 0.3)]])
    return NetworkModel(N, 1, "a1", blocks)
