"""Sampling-based and exhaustive checks of certified failure probabilities.

A realization fails at rate lambda when its Perron value is at least -lambda/2
(``lyapunov`` convention: some diagonal P gives A^T P + P A + lambda P < 0) or
at least -lambda (``state`` convention: the state norm decays at rate lambda).
For Metzler matrices the first event is exactly the non-existence of a
diagonal Lyapunov function with decay rate lambda.

Random streams: draw k of a run with seed s uses a Philox generator keyed by
``SeedSequence([s, k])``.  It produces one uniform per random block (a1) or
block-row (a2), consumed in sorted index order, and each uniform selects a
support point by inverse CDF.  Results therefore do not depend on how draws
are split across threads.
"""
from __future__ import annotations

import csv
import io
import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np
from scipy.stats import beta

from .linalg import check_metzler, perron_classify, perron_value, perron_vector
from .model import NetworkModel, SupportOverflowError
from .policy import DEFAULT

CONVENTIONS = ("lyapunov", "state")


def rate_threshold(lam: float, convention: str = "lyapunov") -> float:
    if convention == "lyapunov":
        return -lam / 2.0
    if convention == "state":
        return -lam
    raise ValueError(f"rate convention must be one of {CONVENTIONS}, got {convention!r}")


def stable_with_rate(A, lam: float, convention: str = "lyapunov") -> bool:
    """True iff perron_value(A) < -lam/2 (or < -lam for the state convention)."""
    A = check_metzler(A)
    return bool(perron_classify(A, [rate_threshold(lam, convention)])[0][0])


def clopper_pearson(failures: int, samples: int, level: float = 0.95) -> tuple[float, float]:
    """One-sided exact bounds (lower, upper), each at confidence ``level``."""
    a = 1.0 - level
    lo = 0.0 if failures == 0 else float(beta.ppf(a, failures, samples - failures + 1))
    hi = 1.0 if failures == samples else float(beta.ppf(level, failures + 1, samples - failures))
    return lo, hi


@dataclass
class McReport:
    samples: int
    failures: int
    p_hat: float
    ci_upper: float
    ci_lower: float
    seed: int
    lam: float
    convention: str = "lyapunov"

    @classmethod
    def from_counts(cls, failures, samples, seed, lam, convention="lyapunov") -> "McReport":
        lo, hi = clopper_pearson(failures, samples)
        return cls(samples, failures, failures / samples, hi, lo, seed, lam, convention)

    def to_json(self) -> dict:
        return asdict(self)

    CSV_FIELDS = ("samples", "failures", "p_hat", "ci_upper", "ci_lower", "seed", "lambda", "convention")

    def csv_row(self, header: bool = False) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        if header:
            w.writerow(self.CSV_FIELDS)
        w.writerow([self.samples, self.failures, f"{self.p_hat:.12g}", f"{self.ci_upper:.12g}",
                    f"{self.ci_lower:.12g}", self.seed, f"{self.lam:.12g}", self.convention])
        return buf.getvalue()


class Sampler:
    """Draws realizations of a model's coefficient matrix."""

    def __init__(self, model: NetworkModel):
        self.model = model
        n, N = model.n, model.N
        self.base = model.mean_matrix() * 0.0
        items = model.blocks.items() if model.mode == "a1" else model.rows.items()
        rand = []
        for key, d in items:
            if d.is_deterministic:
                sl_r = model.block_slice(key[0] if model.mode == "a1" else key)
                sl_c = model.block_slice(key[1]) if model.mode == "a1" else slice(None)
                self.base[sl_r, sl_c] = d.matrices[0]
            else:
                rand.append((key, d))
        self.keys = [k for k, _ in rand]
        K = max((d.size for _, d in rand), default=1)
        B = len(rand)
        self.cum = np.ones((B, K))
        shape = (n, n) if model.mode == "a1" else (n, n * N)
        self.mats = np.zeros((B, K) + shape)
        for b, (_, d) in enumerate(rand):
            c = np.cumsum(d.weights)
            self.cum[b, :d.size] = c
            self.cum[b, d.size - 1:] = 1.0
            self.mats[b, :d.size] = d.matrices
        if model.mode == "a1":
            self.rows = np.array([i for i, _ in self.keys], dtype=int)
            self.cols = np.array([j for _, j in self.keys], dtype=int)
        else:
            self.rows = np.array(self.keys, dtype=int)

    def indices(self, seed: int, draw: int) -> np.ndarray:
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(draw)])))
        u = rng.random(len(self.keys))
        idx = (u[:, None] >= self.cum[:, :-1]).sum(axis=1)
        return idx

    def draw(self, seed: int, draw: int) -> np.ndarray:
        m = self.model
        n, N = m.n, m.N
        A = self.base.copy()
        if not self.keys:
            return A
        idx = self.indices(seed, draw)
        picked = self.mats[np.arange(len(self.keys)), idx]
        A4 = A.reshape(N, n, N, n) if m.mode == "a1" else A.reshape(N, n, N * n)
        if m.mode == "a1":
            A4[self.rows, :, self.cols, :] = picked
        else:
            A4[self.rows] = picked
        return A


def sample_realization(model: NetworkModel, seed: int, draw: int = 0) -> np.ndarray:
    return Sampler(model).draw(seed, draw)


def _count_failures(sampler: Sampler, seed: int, draws, thresholds: np.ndarray, v0) -> np.ndarray:
    fails = np.zeros(thresholds.size, dtype=np.int64)
    for k in draws:
        ok, _ = perron_classify(sampler.draw(seed, k), thresholds, v0)
        fails += ~ok
    return fails


def estimate_instability_curve(model: NetworkModel, lams, samples: int, seed: int,
                               convention: str = "lyapunov", threads: int = 1) -> list[McReport]:
    """Monte Carlo failure probabilities for several rates from one set of draws."""
    if samples < 1:
        raise ValueError("samples must be at least 1")
    lams = [float(x) for x in np.atleast_1d(lams)]
    thr = np.array([rate_threshold(l, convention) for l in lams])
    sampler = Sampler(model)
    E = model.mean_matrix()
    v0 = perron_vector(E) + 1e-3 if E.shape[0] > 1 else None
    if threads > 1:
        chunks = [range(k, samples, threads) for k in range(threads)]
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(lambda c: _count_failures(sampler, seed, c, thr, v0), chunks))
        fails = np.sum(parts, axis=0)
    else:
        fails = _count_failures(sampler, seed, range(samples), thr, v0)
    return [McReport.from_counts(int(f), samples, int(seed), l, convention) for f, l in zip(fails, lams)]


def estimate_instability_prob(model: NetworkModel, lam: float, samples: int, seed: int,
                              convention: str = "lyapunov", threads: int = 1) -> McReport:
    return estimate_instability_curve(model, [lam], samples, seed, convention, threads)[0]


def brute_force_prob(model: NetworkModel, lam: float, convention: str = "lyapunov",
                     cap: int = DEFAULT.support_cap) -> float:
    """Exact failure probability by enumerating the joint support."""
    size = model.joint_support_size()
    if size > cap:
        raise SupportOverflowError(size, cap)
    thr = rate_threshold(lam, convention)
    sampler = Sampler(model)
    m = model
    n, N = m.n, m.N
    if not sampler.keys:
        return 0.0 if perron_value(sampler.base) < thr else 1.0
    dists = [m.blocks[k] if m.mode == "a1" else m.rows[k] for k in sampler.keys]
    E = m.mean_matrix()
    v0 = perron_vector(E) + 1e-3 if E.shape[0] > 1 else None
    total = []
    B = len(sampler.keys)
    for combo in itertools.product(*(range(d.size) for d in dists)):
        w = math.prod(d.weights[c] for d, c in zip(dists, combo))
        A = sampler.base.copy()
        picked = sampler.mats[np.arange(B), np.array(combo)]
        if m.mode == "a1":
            A.reshape(N, n, N, n)[sampler.rows, :, sampler.cols, :] = picked
        else:
            A.reshape(N, n, N * n)[sampler.rows] = picked
        ok, _ = perron_classify(A, thr, v0)
        if not ok[0]:
            total.append(w)
    return math.fsum(total)
