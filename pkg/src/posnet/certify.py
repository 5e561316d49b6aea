"""Probabilistic stability certificates for random positive networks.

A certificate is a tuple ``(p, a, delta, sigma)`` with ``P = diag(p_i I_n)``
such that

* ``E[A]^T P + P E[A] + a I + lam P`` is negative semidefinite (``mean``),
* ``2 rho delta / a + 6 rho sigma^2 / a^2 < 3`` with ``rho = log(nN/eps)`` (``tail``),
* ``delta`` bounds the almost-sure deviation of every summand (``deviation``),
* ``sigma^2`` bounds the norm of the summed variance (``variance``).

Then ``V(x) = x^T P x`` decays at rate ``lam`` with probability at least
``1 - eps``.  The summands are the per-block terms ``p_i (U_ji (x) A_ij^T +
U_ij (x) A_ij)`` under independent blocks (``a1``) or the per-row terms
``p_i S_i`` under independent rows (``a2``).

For a fixed ``p`` every constraint is monotone in its own slack, so the best
certificate takes ``a = a_max(p)`` and the tightest ``delta`` and ``sigma``;
the remaining search is over ``p`` alone.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import bernstein
from .linalg import sym_eig_max
from .model import (NetworkModel, block_esssup_dev, block_mean, block_w, neighborhoods,
                    positivity_violations, symmetric_part_moments)
from .policy import DEFAULT

log = logging.getLogger(__name__)

UNCERTIFIABLE = "mean system not certifiable at rate lambda"


class NotPositiveError(ValueError):
    """Some realization of the model is not Metzler."""


@dataclass(frozen=True)
class CertificateParams:
    p: tuple
    a: float
    delta: float
    sigma: float
    rho: float
    lam: float
    eps: float
    mode: str = "a1"

    @classmethod
    def build(cls, p, a, delta, sigma, lam, eps, n, N, mode="a1") -> "CertificateParams":
        return cls(tuple(float(x) for x in p), float(a), float(delta), float(sigma),
                   bernstein.rho_of_eps(eps, n, N), float(lam), float(eps), mode)

    def scaled(self, c: float) -> "CertificateParams":
        """Same certificate with (p, a, delta, sigma) multiplied by c."""
        return replace(self, p=tuple(c * x for x in self.p), a=c * self.a,
                       delta=c * self.delta, sigma=c * self.sigma)

    def normalized(self) -> "CertificateParams":
        return self.scaled(1.0 / max(self.p))

    def with_eps(self, eps: float, n: int, N: int) -> "CertificateParams":
        return replace(self, eps=float(eps), rho=bernstein.rho_of_eps(eps, n, N))

    def to_json(self) -> dict:
        return {"p": list(self.p), "a": self.a, "delta": self.delta, "sigma": self.sigma,
                "rho": self.rho, "lambda": self.lam, "eps": self.eps, "mode": self.mode}


@dataclass
class CertResult:
    feasible: bool
    witness: CertificateParams | None = None
    slack: dict = field(default_factory=dict)
    diagnostics: list = field(default_factory=list)

    def to_json(self) -> dict:
        return {"feasible": self.feasible,
                "witness": None if self.witness is None else self.witness.to_json(),
                "slack": {k: float(v) for k, v in self.slack.items()},
                "diagnostics": list(self.diagnostics)}


class MomentTable:
    """Everything the certificate needs from a model, computed once.

    ``delta_sigma(p)`` and ``a_max(p, lam)`` are then cheap, which matters
    inside the p-search.
    """

    def __init__(self, model: NetworkModel, mode: str | None = None, cap: int = DEFAULT.support_cap):
        mode = (mode or model.mode).lower()
        if mode == "a1" and model.mode == "a2":
            raise ValueError("independent-block certificates need an a1 model")
        self.model = model
        self.mode = mode
        self.N, self.n = model.N, model.n
        self.mean = model.mean_matrix()
        self.scale = max(1.0, float(np.max(np.abs(self.mean))))
        self.in_degree = neighborhoods(model)[2]
        if mode == "a1":
            self._init_a1(model)
        else:
            self._init_a2(model.to_a2(cap))

    def _init_a1(self, model):
        N, n = self.N, self.n
        owner, dev = [], []
        contrib: list[list[tuple[int, np.ndarray]]] = [[] for _ in range(N)]
        for (i, j), d in model.blocks.items():
            if d.is_deterministic:
                continue
            if i != j:
                owner.append(i)
                dev.append(block_esssup_dev(d))
                contrib[i].append((i, block_w(d, "transposed")))
                contrib[j].append((i, block_w(d, "normal")))
            else:
                # a diagonal block enters the summand as A_ii + A_ii^T
                dsym, vsym = symmetric_part_moments(d)
                owner.append(i)
                dev.append(dsym)
                contrib[i].append((i, vsym))
        self.dev_owner = np.array(owner, dtype=int)
        self.dev = np.array(dev, dtype=float)
        if n == 1:
            C = np.zeros((N, N))
            for i, items in enumerate(contrib):
                for k, W in items:
                    C[i, k] += W[0, 0]
            self._sig_scalar = C
        else:
            self._sig_scalar = None
            self._sig_blocks = []
            for items in contrib:
                if not items:
                    self._sig_blocks.append(None)
                    continue
                owners = np.array([k for k, _ in items])
                mats = np.array([W for _, W in items])
                self._sig_blocks.append((owners, mats))
        self.deterministic = self.dev.size == 0

    def _init_a2(self, model):
        n = self.n
        owner, dev, var = [], [], []
        for i, d in model.rows.items():
            if d.is_deterministic:
                continue
            owner.append(i)
            dev.append(2.0 * block_esssup_dev(d))
            var.append(_row_var_reduced(model, i))
        self.dev_owner = np.array(owner, dtype=int)
        self.dev = np.array(dev, dtype=float)
        self._row_var = list(zip(owner, var))
        self.deterministic = self.dev.size == 0

    def delta(self, p) -> float:
        p = np.asarray(p, dtype=float)
        if self.dev.size == 0:
            return 0.0
        return float(np.max(p[self.dev_owner] * self.dev))

    def sigma2(self, p) -> float:
        p = np.asarray(p, dtype=float)
        p2 = p * p
        if self.mode == "a1":
            if self._sig_scalar is not None:
                return float(max(0.0, np.max(self._sig_scalar @ p2)))
            best = 0.0
            for blk in self._sig_blocks:
                if blk is None:
                    continue
                owners, mats = blk
                M = np.tensordot(p2[owners], mats, axes=1)
                best = max(best, sym_eig_max(0.5 * (M + M.T)))
            return best
        if not self._row_var:
            return 0.0
        dim = self.model.dim
        V = np.zeros((dim, dim))
        for i, (idx, Vi) in self._row_var:
            V[np.ix_(idx, idx)] += p2[i] * Vi
        return max(0.0, sym_eig_max(0.5 * (V + V.T)))

    def delta_sigma(self, p) -> tuple[float, float]:
        return self.delta(p), math.sqrt(self.sigma2(p))

    def mean_lmi(self, p, lam: float) -> np.ndarray:
        pv = np.repeat(np.asarray(p, dtype=float), self.n)
        M = pv[:, None] * self.mean
        return M + M.T + np.diag(lam * pv)

    def a_max(self, p, lam: float) -> float:
        return -sym_eig_max(self.mean_lmi(p, lam))

    def tail_ratio(self, p, lam: float) -> float:
        """F(p) = 2 delta/a + 6 sigma^2/a^2 at a = a_max(p); inf if a_max <= 0.

        The tail condition reads rho * F(p) < 3.
        """
        a = self.a_max(p, lam)
        if not a > 0:
            return math.inf
        if self.deterministic:
            return 0.0
        d = self.delta(p)
        s2 = self.sigma2(p)
        return 2.0 * d / a + 6.0 * s2 / (a * a)

    def eps_of_ratio(self, F: float) -> float:
        """Smallest eps for which rho(eps) * F < 3 holds in the limit."""
        if F == 0:
            return 0.0
        if not math.isfinite(F):
            return math.inf
        return self.n * self.N * math.exp(-3.0 / F)


def _row_var_reduced(model: NetworkModel, i: int):
    """Var(S_i) restricted to the coordinates it can touch: block i and the
    columns where A_i is random.  Returns (state indices, matrix)."""
    d = model.row_distribution(i)
    n = model.n
    E = block_mean(d)
    D = d.matrices - E
    cols = np.flatnonzero(np.any(D != 0, axis=(0, 1)))
    own = np.arange(i * n, (i + 1) * n)
    idx = np.union1d(own, cols)
    pos = {s: k for k, s in enumerate(idx)}
    r = len(idx)
    own_loc = np.array([pos[s] for s in own])
    col_loc = np.array([pos[s] for s in idx])
    V = np.zeros((r, r))
    for w, Dk in zip(d.weights, D):
        C = np.zeros((r, r))
        C[own_loc[:, None], col_loc[None, :]] = Dk[:, idx]
        S = C + C.T
        V += w * (S @ S)
    return idx, 0.5 * (V + V.T)


def _require_positive(model: NetworkModel):
    bad = positivity_violations(model)
    if bad:
        raise NotPositiveError("model is not positive: " + "; ".join(bad[:5]))


def delta_sigma_a1(model: NetworkModel, p) -> tuple[float, float]:
    """Tightest (delta, sigma) for independent blocks at scaling ``p``."""
    return MomentTable(model, "a1").delta_sigma(p)


def delta_sigma_a2(model: NetworkModel, p, cap: int = DEFAULT.support_cap) -> tuple[float, float]:
    """Tightest (delta, sigma) for independent block-rows at scaling ``p``."""
    return MomentTable(model, "a2", cap).delta_sigma(p)


def a_max(model: NetworkModel, p, lam: float) -> float:
    """Largest a with E[A]^T P + P E[A] + a I + lam P <= 0 (may be <= 0)."""
    pv = np.repeat(np.asarray(p, dtype=float), model.n)
    E = model.mean_matrix()
    M = pv[:, None] * E
    return -sym_eig_max(M + M.T + np.diag(lam * pv))


def check_certificate(model: NetworkModel, params: CertificateParams,
                      table: MomentTable | None = None,
                      margin: float = DEFAULT.strict_margin) -> CertResult:
    """Verify every certificate constraint and report the slacks."""
    _require_positive(model)
    mode = params.mode.lower()
    if table is None or table.mode != mode or table.model is not model:
        table = MomentTable(model, mode)
    p = np.asarray(params.p, dtype=float)
    if p.shape != (model.N,):
        raise ValueError(f"p has length {p.size}, expected {model.N}")
    diag: list[str] = []
    if np.any(p <= 0) or params.a <= 0 or params.delta < 0 or params.sigma < 0:
        return CertResult(False, params, {}, ["certificate parameters must be positive"])
    rho = bernstein.rho_of_eps(params.eps, model.n, model.N)
    if not math.isclose(rho, params.rho, rel_tol=1e-12, abs_tol=1e-12):
        raise ValueError(f"inconsistent certificate: rho={params.rho!r} but log(nN/eps)={rho!r}")
    amax = table.a_max(p, params.lam)
    d, s = table.delta_sigma(p)
    slack = {
        "mean": amax - params.a,
        "tail": 3.0 - bernstein.lemma1_lhs(params.delta, params.sigma, params.a, rho),
        "deviation": params.delta - d,
        "variance": params.sigma - s,
    }
    ok = {
        "mean": slack["mean"] >= 0.0,
        "tail": slack["tail"] > margin,
        "deviation": slack["deviation"] >= 0.0,
        "variance": slack["variance"] >= 0.0,
    }
    for k, good in ok.items():
        if not good:
            diag.append(f"{k} constraint violated (slack {slack[k]:.3e})")
    feasible = all(ok.values())
    if feasible:
        binding = min(slack, key=lambda k: slack[k] / max(1.0, abs(params.a)))
        diag.append(f"binding: {binding}")
    return CertResult(feasible, params, slack, diag)


# -- search over p ---------------------------------------------------------

@dataclass
class SearchOptions:
    use_gp: bool = True
    polish: str | bool = "auto"  # polish when the GP start is not known to be optimal
    max_evals: int | None = None  # per start; default 200 * N
    starts: list = field(default_factory=list)  # extra starting vectors


def _golden(f, lo, hi, fa=None, iters=24):
    g = (math.sqrt(5.0) - 1.0) / 2.0
    c = hi - g * (hi - lo)
    d = lo + g * (hi - lo)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        if fc <= fd:
            hi, d, fd = d, c, fc
            c = hi - g * (hi - lo)
            fc = f(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + g * (hi - lo)
            fd = f(d)
    return (c, fc) if fc <= fd else (d, fd)


def _coordinate_descent(F, x0, max_evals):
    """Minimize F(exp(x)) by cyclic golden-section line searches in log p."""
    x = np.array(x0, dtype=float)
    fx = F(np.exp(x))
    evals = 1
    h = 1.0
    N = x.size
    while evals < max_evals and h > 1e-6:
        improved = False
        for k in range(N):
            if evals >= max_evals:
                break
            base = x[k]

            def fk(t):
                nonlocal evals
                evals += 1
                x[k] = t
                return F(np.exp(x))

            t, ft = _golden(fk, base - h, base + h)
            if ft < fx * (1 - 1e-12):
                x[k], fx = t, ft
                improved = True
            else:
                x[k] = base
        if not improved:
            h *= 0.25
    return x - x.max(), fx


def gp_start(model: NetworkModel, lam: float, mode: str, table: MomentTable | None = None):
    """Scaling p from the log-convex reformulation of the certificate search.

    Returns (p, exact, status) where ``exact`` says the reformulation had no
    conservatism, so p is globally optimal up to solver tolerance.  An exact
    program that is infeasible proves eps* >= 1 (p is then None).
    """
    from .design import certificate_program

    try:
        prog, exact = certificate_program(model, lam, mode)
    except ValueError as exc:  # e.g. a negative rate has no log-domain form
        log.debug("no certificate GP: %s", exc)
        return None, False, "unavailable"
    from .gpsolve import gp_solve

    sol = gp_solve(prog)
    if sol.status != "optimal":
        log.debug("certificate GP ended with status %s: %s", sol.status, sol.message)
        return None, exact, sol.status
    p = np.array([sol.values[f"p{i + 1}"] for i in range(model.N)])
    return p / p.max(), exact, sol.status


def optimize_scaling(model: NetworkModel, lam: float, mode: str | None = None,
                     options: SearchOptions | None = None, table: MomentTable | None = None):
    """Minimize the tail ratio F(p) over positive p.

    Returns (p normalized to max 1, F(p), start label).  Candidates are the
    uniform vector, an in-degree weighted vector, any user starts and the GP
    start; ties go to the earlier candidate.
    """
    options = options or SearchOptions()
    mode = (mode or model.mode).lower()
    table = table if table is not None and table.mode == mode else MomentTable(model, mode)
    N = model.N
    cands: list[tuple[str, np.ndarray]] = [("uniform", np.ones(N)),
                                           ("in-degree", 1.0 / np.maximum(1, table.in_degree))]
    for k, s in enumerate(options.starts):
        s = np.asarray(s, dtype=float)
        if s.shape == (N,) and np.all(s > 0):
            cands.append((f"start{k}", s))
    exact = False
    if options.use_gp and not table.deterministic:
        p_gp, exact, status = gp_start(model, lam, mode, table)
        if p_gp is not None:
            cands.append(("gp", p_gp))
        elif not (exact and status == "infeasible"):
            exact = False

    def F(p):
        return table.tail_ratio(p, lam)

    scored = [(F(c), k, lbl, c / c.max()) for k, (lbl, c) in enumerate(cands)]
    scored.sort(key=lambda t: (t[0], t[1]))
    best_F, _, best_lbl, best_p = scored[0]
    do_polish = options.polish is True or (options.polish == "auto" and not exact)
    if do_polish and not table.deterministic and N > 1:
        budget = options.max_evals or 200 * N
        # polish the two default starts plus the incumbent
        seen = set()
        for Fc, k, lbl, c in sorted(scored, key=lambda t: t[1]):
            if lbl not in ("uniform", "in-degree") and lbl != best_lbl:
                continue
            if lbl in seen or not math.isfinite(Fc):
                continue
            seen.add(lbl)
            x, fx = _coordinate_descent(F, np.log(c), budget)
            if fx < best_F:
                best_F, best_lbl, best_p = fx, lbl + "+descent", np.exp(x)
    return best_p / best_p.max(), best_F, best_lbl


def _witness(table: MomentTable, p, lam, eps, mode) -> CertificateParams | None:
    model = table.model
    amax = table.a_max(p, lam)
    if not amax > 0:
        return None
    d, s = table.delta_sigma(p)
    # tiny relative slack keeps the verdict stable under rescaling round-off
    return CertificateParams.build(p, amax * (1 - 1e-10), d * (1 + 1e-10), s * (1 + 1e-10),
                                   lam, eps, model.n, model.N, mode)


def search_certificate(model: NetworkModel, lam: float, eps: float, mode: str | None = None,
                       options: SearchOptions | None = None, table: MomentTable | None = None,
                       p0=None) -> CertResult:
    """Look for a certificate at decay rate ``lam`` and unreliability ``eps``.

    With ``p0`` the p-search is skipped and the certificate is built at p0.
    """
    _require_positive(model)
    mode = (mode or model.mode).lower()
    if table is None or table.mode != mode or table.model is not model:
        table = MomentTable(model, mode)
    if p0 is None:
        p, _, label = optimize_scaling(model, lam, mode, options, table)
    else:
        p, label = np.asarray(p0, dtype=float) / np.max(p0), "given"
    w = _witness(table, p, lam, eps, mode)
    if w is None:
        return CertResult(False, None, {"mean": table.a_max(p, lam)}, [UNCERTIFIABLE])
    res = check_certificate(model, w, table)
    res.diagnostics.append(f"p from {label}")
    return res


@dataclass
class MinUnreliability:
    eps_star: float  # clamped to [eps_floor, 1]
    eps_raw: float  # unclamped closed-form value (may exceed 1)
    certifiable: bool  # False when no certificate exists at eps = 1
    witness: CertificateParams | None
    ratio: float
    bisection_eps: float | None = None
    flag: str = ""

    def to_json(self) -> dict:
        return {"eps_star": self.eps_star, "eps_raw": self.eps_raw, "certifiable": self.certifiable,
                "ratio": self.ratio, "bisection_eps": self.bisection_eps, "flag": self.flag,
                "witness": None if self.witness is None else self.witness.to_json()}


def min_unreliability(model: NetworkModel, lam: float, mode: str | None = None,
                      options: SearchOptions | None = None, table: MomentTable | None = None,
                      bisect: bool = True, policy=DEFAULT) -> MinUnreliability:
    """Minimum unreliability eps* at decay rate ``lam``.

    eps*(p) = nN exp(-3 / F(p)) in closed form, minimized over p.  A bisection
    on eps, using the certificate check at the optimal p as oracle, must land
    on the same value.
    """
    _require_positive(model)
    mode = (mode or model.mode).lower()
    if table is None or table.mode != mode or table.model is not model:
        table = MomentTable(model, mode)
    p, F, _ = optimize_scaling(model, lam, mode, options, table)
    raw = table.eps_of_ratio(F)
    if not math.isfinite(raw):
        return MinUnreliability(1.0, math.inf, False, None, F, flag="uncertifiable at rate lambda")
    if raw >= 1.0:
        w = _witness(table, p, lam, 1.0, mode)
        return MinUnreliability(1.0, raw, False, w, F, flag="uncertifiable at rate lambda")
    eps = max(raw, policy.eps_floor)
    bis = None
    if bisect and raw > policy.eps_floor:
        bis = _bisect_eps(model, table, p, lam, mode, raw, policy)
        if not math.isclose(bis, raw, rel_tol=5 * policy.bisect_rtol):
            raise RuntimeError(f"bisection eps {bis!r} disagrees with closed form {raw!r}")
    # witness at a feasible eps just above the infimum
    w_eps = min(1.0, eps * (1 + policy.bisect_rtol))
    w = _witness(table, p, lam, w_eps, mode)
    return MinUnreliability(eps, raw, True, w, F, bis)


def _bisect_eps(model, table, p, lam, mode, guess, policy) -> float:
    """Bisection in log eps on feasibility of the certificate at fixed p."""

    def feasible(e):
        w = _witness(table, p, lam, e, mode)
        return w is not None and check_certificate(model, w, table).feasible

    hi = 1.0
    if not feasible(hi):
        return math.inf
    lo = max(policy.eps_floor, guess * 1e-3)
    while feasible(lo) and lo > policy.eps_floor:
        hi = lo
        lo = max(policy.eps_floor, lo * 1e-3)
    for _ in range(policy.bisect_max_iter):
        if hi / lo - 1.0 <= policy.bisect_rtol:
            break
        mid = math.sqrt(lo * hi)
        if feasible(mid):
            hi = mid
        else:
            lo = mid
    return hi
