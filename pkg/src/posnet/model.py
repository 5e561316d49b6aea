"""Networks of positive linear systems with finitely supported random coefficients.

A :class:`NetworkModel` describes ``dx/dt = A x`` where ``A`` is an ``N x N``
array of random ``n x n`` blocks.  In ``a1`` mode every block has its own
independent distribution; in ``a2`` mode each block-row ``A_i = [A_i1 ... A_iN]``
is drawn independently as a whole.  Indices are 0-based in Python and 1-based
in the JSON file format.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType
from typing import Iterable, Mapping

import numpy as np

from .linalg import spectral_norm
from .policy import DEFAULT


class SupportOverflowError(ValueError):
    """Product-support enumeration would exceed the configured cap."""

    def __init__(self, size: int, cap: int):
        super().__init__(f"joint support size {size} exceeds cap {cap}")
        self.size = size
        self.cap = cap


class FiniteMatrixDistribution:
    """A probability distribution on finitely many real matrices.

    Identical support matrices are merged (weights added), so a two-point
    distribution with equal points is deterministic.
    """

    __slots__ = ("weights", "matrices")

    def __init__(self, weights, matrices, tol: float = DEFAULT.weight_tol):
        w = np.asarray(weights, dtype=float).ravel()
        mats = np.asarray(matrices, dtype=float)
        if mats.ndim == 2 and w.size == 1:
            mats = mats[None]
        if mats.ndim != 3:
            raise ValueError("support matrices must all be 2-D with one shared shape")
        if w.size == 0 or w.size != mats.shape[0]:
            raise ValueError("support must be non-empty with one weight per matrix")
        if not np.all(np.isfinite(w)) or np.any(w <= 0) or np.any(w > 1):
            raise ValueError("weights must lie in (0, 1]")
        if abs(math.fsum(w) - 1.0) > tol:
            raise ValueError(f"weights sum to {math.fsum(w)!r}, not 1")
        if not np.all(np.isfinite(mats)):
            raise ValueError("support matrices have non-finite entries")
        # merge duplicates, keeping first-seen order
        keys: dict[bytes, int] = {}
        ws: list[float] = []
        ms: list[np.ndarray] = []
        for wk, mk in zip(w, mats):
            key = np.ascontiguousarray(mk + 0.0).tobytes()  # +0.0 folds -0.0
            if key in keys:
                ws[keys[key]] += wk
            else:
                keys[key] = len(ws)
                ws.append(float(wk))
                ms.append(mk)
        self.weights = np.array(ws)
        self.matrices = np.array(ms)
        self.weights.flags.writeable = False
        self.matrices.flags.writeable = False

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[float, object]]) -> "FiniteMatrixDistribution":
        pairs = list(pairs)
        return cls([w for w, _ in pairs], [np.atleast_2d(np.asarray(m, dtype=float)) for _, m in pairs])

    @classmethod
    def constant(cls, M) -> "FiniteMatrixDistribution":
        return cls([1.0], [np.atleast_2d(np.asarray(M, dtype=float))])

    @classmethod
    def bernoulli(cls, r: float, hi, lo) -> "FiniteMatrixDistribution":
        """``hi`` with probability ``r``, ``lo`` with probability ``1 - r``."""
        hi = np.atleast_2d(np.asarray(hi, dtype=float))
        lo = np.atleast_2d(np.asarray(lo, dtype=float))
        if r >= 1.0:
            return cls.constant(hi)
        if r <= 0.0:
            return cls.constant(lo)
        return cls([r, 1.0 - r], [hi, lo])

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrices.shape[1:]

    @property
    def size(self) -> int:
        return self.weights.size

    @property
    def is_deterministic(self) -> bool:
        return self.size == 1

    @property
    def is_zero(self) -> bool:
        return not np.any(self.matrices)

    def __eq__(self, other):
        if not isinstance(other, FiniteMatrixDistribution):
            return NotImplemented
        return (np.array_equal(self.weights, other.weights)
                and np.array_equal(self.matrices, other.matrices))

    def __repr__(self):
        return f"FiniteMatrixDistribution(shape={self.shape}, support={self.size})"

    def to_json(self) -> list[dict]:
        return [{"w": float(w), "m": m.tolist()} for w, m in zip(self.weights, self.matrices)]

    @classmethod
    def from_json(cls, support: list[dict]) -> "FiniteMatrixDistribution":
        return cls([s["w"] for s in support], [np.atleast_2d(np.asarray(s["m"], dtype=float)) for s in support])


def product_distribution(dists: list[FiniteMatrixDistribution], assemble, cap: int = DEFAULT.support_cap):
    """Joint distribution of independent ``dists`` pushed through ``assemble``."""
    size = 1
    for d in dists:
        size *= d.size
    if size > cap:
        raise SupportOverflowError(size, cap)
    ws, ms = [], []
    for combo in itertools.product(*(range(d.size) for d in dists)):
        w = 1.0
        for d, k in zip(dists, combo):
            w *= d.weights[k]
        ws.append(w)
        ms.append(assemble([d.matrices[k] for d, k in zip(dists, combo)]))
    ws = np.array(ws)
    # renormalize product round-off
    return FiniteMatrixDistribution(ws / math.fsum(ws), ms, tol=1e-9)


# -- moments -----------------------------------------------------------------

def block_mean(dist: FiniteMatrixDistribution) -> np.ndarray:
    return np.tensordot(dist.weights, dist.matrices, axes=1)


def block_w(dist: FiniteMatrixDistribution, side: str = "normal") -> np.ndarray:
    """W(M) = E[M^T M] - E[M]^T E[M], or W(M^T) when ``side='transposed'``.

    Computed from the centered support points, which is exact and stays PSD.
    """
    D = dist.matrices - block_mean(dist)
    if side == "normal":
        W = np.einsum("k,kai,kaj->ij", dist.weights, D, D)
    elif side == "transposed":
        W = np.einsum("k,kia,kja->ij", dist.weights, D, D)
    else:
        raise ValueError(f"side must be 'normal' or 'transposed', got {side!r}")
    return 0.5 * (W + W.T)


def block_esssup_dev(dist: FiniteMatrixDistribution) -> float:
    """max over the support of ||M_k - E[M]|| (spectral norm)."""
    if dist.is_deterministic:
        return 0.0
    E = block_mean(dist)
    return max(spectral_norm(M - E) for M in dist.matrices)


def symmetric_part_moments(dist: FiniteMatrixDistribution) -> tuple[float, np.ndarray]:
    """esssup ||D + D^T|| and Var(M + M^T) with D = M - E[M]."""
    if dist.is_deterministic:
        n = dist.shape[0]
        return 0.0, np.zeros((n, n))
    D = dist.matrices - block_mean(dist)
    S = D + np.transpose(D, (0, 2, 1))
    V = np.einsum("k,kab,kbc->ac", dist.weights, S, S)
    return max(spectral_norm(s) for s in S), 0.5 * (V + V.T)


@dataclass(frozen=True)
class MomentData:
    mean: np.ndarray
    w: np.ndarray
    wT: np.ndarray
    esssup_dev: float


def block_moments(dist: FiniteMatrixDistribution) -> MomentData:
    return MomentData(block_mean(dist), block_w(dist, "normal"), block_w(dist, "transposed"),
                      block_esssup_dev(dist))


# -- network -----------------------------------------------------------------

@dataclass(frozen=True)
class NetworkModel:
    """The random network ``dx/dt = A x``; immutable once built.

    ``blocks`` maps (i, j) to the distribution of A_ij (mode ``a1``);
    ``rows`` maps i to the distribution of the n x nN block-row A_i (mode
    ``a2``).  Absent entries are identically zero.
    """

    N: int
    n: int
    mode: str = "a1"
    blocks: Mapping[tuple[int, int], FiniteMatrixDistribution] = field(default_factory=dict)
    rows: Mapping[int, FiniteMatrixDistribution] = field(default_factory=dict)

    def __post_init__(self):
        if self.N < 1 or self.n < 1:
            raise ValueError("N and n must be positive")
        if self.mode not in ("a1", "a2"):
            raise ValueError(f"mode must be 'a1' or 'a2', got {self.mode!r}")
        blocks = {(int(i), int(j)): d for (i, j), d in dict(self.blocks).items()}
        rows = {int(i): d for i, d in dict(self.rows).items()}
        if self.mode == "a1":
            if rows:
                raise ValueError("a1 models are given by blocks, not rows")
            for (i, j), d in blocks.items():
                if not (0 <= i < self.N and 0 <= j < self.N):
                    raise ValueError(f"block index ({i}, {j}) out of range")
                if d.shape != (self.n, self.n):
                    raise ValueError(f"block ({i}, {j}) has shape {d.shape}, expected {(self.n, self.n)}")
        else:
            if blocks:
                raise ValueError("a2 models are given by rows, not blocks")
            for i, d in rows.items():
                if not 0 <= i < self.N:
                    raise ValueError(f"row index {i} out of range")
                if d.shape != (self.n, self.n * self.N):
                    raise ValueError(f"row {i} has shape {d.shape}, expected {(self.n, self.n * self.N)}")
        object.__setattr__(self, "blocks", MappingProxyType(dict(sorted(blocks.items()))))
        object.__setattr__(self, "rows", MappingProxyType(dict(sorted(rows.items()))))

    @property
    def dim(self) -> int:
        return self.n * self.N

    def block_slice(self, i: int) -> slice:
        return slice(i * self.n, (i + 1) * self.n)

    def edges(self) -> list[tuple[int, int]]:
        """Ordered pairs (i, j) whose block A_ij is not identically zero."""
        n = self.n
        if self.mode == "a1":
            return [ij for ij, d in self.blocks.items() if not d.is_zero]
        out = []
        for i, d in self.rows.items():
            for j in range(self.N):
                if np.any(d.matrices[:, :, j * n:(j + 1) * n]):
                    out.append((i, j))
        return out

    def mean_matrix(self) -> np.ndarray:
        E = np.zeros((self.dim, self.dim))
        if self.mode == "a1":
            for (i, j), d in self.blocks.items():
                E[self.block_slice(i), self.block_slice(j)] = block_mean(d)
        else:
            for i, d in self.rows.items():
                E[self.block_slice(i), :] = block_mean(d)
        return E

    def is_deterministic(self) -> bool:
        dists = self.blocks.values() if self.mode == "a1" else self.rows.values()
        return all(d.is_deterministic for d in dists)

    def joint_support_size(self) -> int:
        dists = self.blocks.values() if self.mode == "a1" else self.rows.values()
        return math.prod(d.size for d in dists)

    def row_distribution(self, i: int, cap: int = DEFAULT.support_cap) -> FiniteMatrixDistribution:
        """Distribution of the block-row A_i (product of independent blocks in a1 mode)."""
        n, N = self.n, self.N
        if self.mode == "a2":
            d = self.rows.get(i)
            return d if d is not None else FiniteMatrixDistribution.constant(np.zeros((n, n * N)))
        cols = [j for (ii, j) in self.blocks if ii == i]
        dists = [self.blocks[(i, j)] for j in cols]

        def assemble(mats):
            R = np.zeros((n, n * N))
            for j, m in zip(cols, mats):
                R[:, j * n:(j + 1) * n] = m
            return R

        if not dists:
            return FiniteMatrixDistribution.constant(np.zeros((n, n * N)))
        return product_distribution(dists, assemble, cap)

    def to_a2(self, cap: int = DEFAULT.support_cap) -> "NetworkModel":
        if self.mode == "a2":
            return self
        rows = {i: self.row_distribution(i, cap) for i in sorted({i for i, _ in self.blocks})}
        return NetworkModel(self.N, self.n, "a2", rows=rows)

    # -- serialization -------------------------------------------------------

    def to_json(self) -> dict:
        doc: dict = {"N": self.N, "n": self.n, "mode": self.mode}
        if self.mode == "a1":
            doc["blocks"] = [{"i": i + 1, "j": j + 1, "support": d.to_json()} for (i, j), d in self.blocks.items()]
        else:
            doc["rows"] = [{"i": i + 1, "support": d.to_json()} for i, d in self.rows.items()]
        return doc

    @classmethod
    def from_json(cls, doc: Mapping) -> "NetworkModel":
        try:
            N, n = int(doc["N"]), int(doc["n"])
            mode = str(doc.get("mode", "a1")).lower()
            blocks = {(int(b["i"]) - 1, int(b["j"]) - 1): FiniteMatrixDistribution.from_json(b["support"])
                      for b in doc.get("blocks", [])}
            rows = {int(r["i"]) - 1: FiniteMatrixDistribution.from_json(r["support"]) for r in doc.get("rows", [])}
        except (KeyError, TypeError) as exc:
            raise ValueError(f"malformed model document: {exc!r}") from exc
        return cls(N, n, mode, blocks=blocks, rows=rows)


def load_model(path) -> NetworkModel:
    return NetworkModel.from_json(json.loads(Path(path).read_text()))


def save_model(model: NetworkModel, path) -> None:
    Path(path).write_text(json.dumps(model.to_json(), indent=1))


def row_var_s(model: NetworkModel, i: int, cap: int = DEFAULT.support_cap) -> np.ndarray:
    """Var(S_i) for S_i = e_i^T (x) A_i^T + e_i (x) A_i, exact over the row support.

    The result has rank at most n * |{i} U N^-[i]|.
    """
    d = model.row_distribution(i, cap)
    n, dim = model.n, model.dim
    E = block_mean(d)
    D = d.matrices - E  # (K, n, dim)
    sl = model.block_slice(i)
    # S - E[S] = C + C^T with C zero except block-row i equal to D
    # (C + C^T)^2 expanded blockwise avoids forming dim x dim per support point
    V = np.zeros((dim, dim))
    for w, Dk in zip(d.weights, D):
        C = np.zeros((dim, dim))
        C[sl, :] = Dk
        S = C + C.T
        V += w * (S @ S)
    return 0.5 * (V + V.T)


def neighborhoods(model: NetworkModel) -> tuple[list[list[int]], list[list[int]], np.ndarray]:
    """In-neighbors N^-[i] = {j : (i,j) in E}, out-neighbors N^+[i], in-degrees."""
    nin: list[list[int]] = [[] for _ in range(model.N)]
    nout: list[list[int]] = [[] for _ in range(model.N)]
    for i, j in model.edges():
        nin[i].append(j)
        nout[j].append(i)
    return nin, nout, np.array([len(s) for s in nin])


def positivity_violations(model: NetworkModel, tol: float = 0.0) -> list[str]:
    """Human-readable reasons why some realization of A fails to be Metzler."""
    out = []
    n = model.n
    if model.mode == "a1":
        items = [((i, j), d.matrices) for (i, j), d in model.blocks.items()]
    else:
        items = []
        for i, d in model.rows.items():
            for j in range(model.N):
                items.append(((i, j), d.matrices[:, :, j * n:(j + 1) * n]))
    for (i, j), mats in items:
        vals = mats.copy()
        if i == j:
            idx = np.arange(n)
            vals[:, idx, idx] = 0.0
        if vals.size and vals.min() < -tol:
            k, a, b = np.unravel_index(np.argmin(vals), vals.shape)
            kind = "diagonal block is not Metzler" if i == j else "off-diagonal block has a negative entry"
            out.append(f"block ({i + 1},{j + 1}) support point {k}: {kind} "
                       f"(entry ({a + 1},{b + 1}) = {vals[k, a, b]!r})")
    return out


def check_positivity(model: NetworkModel) -> bool:
    """True iff every realization of A is Metzler, so x(0) >= 0 keeps x(t) >= 0."""
    return not positivity_violations(model)
