"""Geometric programming: modeling, log transform and an interior-point solver.

A geometric program minimizes a posynomial subject to ``posynomial <= 1`` and
``monomial == 1`` over positive variables.  With ``y = log x`` every posynomial
becomes a log-sum-exp of affine functions, so the problem is convex.  The
solver below runs a phase-I problem for a strictly feasible start and then
follows the central path of the logarithmic barrier with primal-dual Newton
steps (Mehrotra predictor-corrector, damped by backtracking).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from numbers import Real
from typing import Iterable, Mapping

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .policy import DEFAULT


class Monomial:
    """``coeff * prod_v x_v ** exps[v]``."""

    __slots__ = ("coeff", "exps")

    def __init__(self, coeff: float = 1.0, exps: Mapping[str, float] | None = None):
        self.coeff = float(coeff)
        self.exps = {k: float(v) for k, v in (exps or {}).items() if v != 0}

    def __mul__(self, other):
        if isinstance(other, Monomial):
            e = dict(self.exps)
            for k, v in other.exps.items():
                e[k] = e.get(k, 0.0) + v
            return Monomial(self.coeff * other.coeff, e)
        if isinstance(other, Posynomial):
            return other * self
        if isinstance(other, Real):
            return Monomial(self.coeff * other, self.exps)
        return NotImplemented

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Monomial):
            return self * other ** -1
        if isinstance(other, Real):
            return Monomial(self.coeff / other, self.exps)
        return NotImplemented

    def __rtruediv__(self, other):
        if isinstance(other, Real):
            return Monomial(other, {}) * self ** -1
        return NotImplemented

    def __pow__(self, k):
        return Monomial(self.coeff ** k, {v: e * k for v, e in self.exps.items()})

    def __add__(self, other):
        return Posynomial([self]) + other

    __radd__ = __add__

    def __repr__(self):
        body = "*".join(f"{v}^{e:g}" for v, e in sorted(self.exps.items()))
        return f"{self.coeff:g}" + (f"*{body}" if body else "")

    def __eq__(self, other):
        return isinstance(other, Monomial) and self.coeff == other.coeff and self.exps == other.exps

    @property
    def variables(self) -> set[str]:
        return set(self.exps)

    def __call__(self, values: Mapping[str, float]) -> float:
        out = self.coeff
        for v, e in self.exps.items():
            out *= values[v] ** e
        return out

    def to_json(self) -> dict:
        return {"c": self.coeff, "e": dict(self.exps)}

    @classmethod
    def from_json(cls, t: Mapping) -> "Monomial":
        return cls(t["c"], t.get("e", {}))


class Posynomial:
    """A sum of monomials; zero-coefficient terms are dropped."""

    __slots__ = ("terms",)

    def __init__(self, terms: Iterable[Monomial] = ()):
        self.terms = [t for t in terms if t.coeff != 0.0]

    @classmethod
    def of(cls, x) -> "Posynomial":
        if isinstance(x, Posynomial):
            return x
        if isinstance(x, Monomial):
            return cls([x])
        if isinstance(x, Real):
            return cls([Monomial(x)])
        raise TypeError(f"cannot make a posynomial from {type(x).__name__}")

    def __add__(self, other):
        try:
            other = Posynomial.of(other)
        except TypeError:
            return NotImplemented
        return Posynomial(self.terms + other.terms)

    __radd__ = __add__

    def __mul__(self, other):
        if isinstance(other, (Monomial, Real)):
            return Posynomial([t * other for t in self.terms])
        if isinstance(other, Posynomial):
            return Posynomial([s * t for s in self.terms for t in other.terms])
        return NotImplemented

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, (Monomial, Real)):
            return Posynomial([t / other for t in self.terms])
        return NotImplemented

    def __len__(self):
        return len(self.terms)

    def __repr__(self):
        return " + ".join(map(repr, self.terms)) or "0"

    @property
    def variables(self) -> set[str]:
        out: set[str] = set()
        for t in self.terms:
            out |= t.variables
        return out

    def __call__(self, values: Mapping[str, float]) -> float:
        return math.fsum(t(values) for t in self.terms)

    def to_json(self) -> list[dict]:
        return [t.to_json() for t in self.terms]

    @classmethod
    def from_json(cls, terms) -> "Posynomial":
        return cls(Monomial.from_json(t) for t in terms)


def var(name: str) -> Monomial:
    return Monomial(1.0, {name: 1.0})


@dataclass
class GeometricProgram:
    objective: Posynomial
    ineqs: list = field(default_factory=list)  # posynomials, f <= 1
    eqs: list = field(default_factory=list)  # monomials, g == 1
    variables: list[str] = field(default_factory=list)
    bounds: dict[str, tuple[float | None, float | None]] = field(default_factory=dict)
    ineq_labels: list[str] = field(default_factory=list)
    eq_labels: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.objective = Posynomial.of(self.objective)
        self.ineqs = [Posynomial.of(f) for f in self.ineqs]
        if not self.variables:
            names: set[str] = set(self.objective.variables)
            for f in self.ineqs:
                names |= f.variables
            for g in self.eqs:
                names |= Posynomial.of(g).variables
            self.variables = sorted(names)

    def add_ineq(self, f, label: str = "") -> None:
        self.ineqs.append(Posynomial.of(f))
        self.ineq_labels.append(label)

    def add_eq(self, g, label: str = "") -> None:
        self.eqs.append(g)
        self.eq_labels.append(label)

    def ineq_label(self, k: int) -> str:
        return self.ineq_labels[k] if k < len(self.ineq_labels) and self.ineq_labels[k] else f"ineq[{k}]"

    def to_json(self) -> dict:
        doc = {
            "vars": list(self.variables),
            "objective": self.objective.to_json(),
            "ineqs": [f.to_json() for f in self.ineqs],
            "eqs": [Posynomial.of(g).terms[0].to_json() if len(Posynomial.of(g)) == 1
                    else Posynomial.of(g).to_json() for g in self.eqs],
        }
        if self.bounds:
            doc["bounds"] = {k: list(v) for k, v in self.bounds.items()}
        return doc

    @classmethod
    def from_json(cls, doc: Mapping) -> "GeometricProgram":
        eqs = []
        for g in doc.get("eqs", []):
            eqs.append(Posynomial.from_json(g) if isinstance(g, list) else Monomial.from_json(g))
        return cls(
            objective=Posynomial.from_json(doc["objective"]),
            ineqs=[Posynomial.from_json(f) for f in doc.get("ineqs", [])],
            eqs=eqs,
            variables=list(doc.get("vars", [])),
            bounds={k: tuple(v) for k, v in doc.get("bounds", {}).items()},
        )

    def dumps(self) -> str:
        return json.dumps(self.to_json())


def gp_validate(program: GeometricProgram) -> list[str]:
    """Structural problems that keep ``program`` from being a geometric program."""
    out: list[str] = []
    declared = set(program.variables)

    def check_terms(where: str, terms: list[Monomial]):
        for t in terms:
            if t.coeff < 0 or not math.isfinite(t.coeff):
                out.append(f"{where}: negative coefficient {t.coeff!r}")
            if not all(math.isfinite(e) for e in t.exps.values()):
                out.append(f"{where}: non-finite exponent")
            missing = t.variables - declared
            if missing:
                out.append(f"{where}: undeclared variable(s) {sorted(missing)}")

    if not program.objective.terms:
        out.append("objective: empty posynomial")
    check_terms("objective", program.objective.terms)
    for k, f in enumerate(program.ineqs):
        check_terms(program.ineq_label(k), f.terms)
    for k, g in enumerate(program.eqs):
        where = program.eq_labels[k] if k < len(program.eq_labels) and program.eq_labels[k] else f"eq[{k}]"
        terms = Posynomial.of(g).terms if not isinstance(g, Monomial) else [g]
        if len(terms) != 1:
            out.append(f"{where}: equality not monomial ({len(terms)} terms)")
            continue
        if terms[0].coeff <= 0:
            out.append(f"{where}: equality coefficient must be positive")
        check_terms(where, terms)
    for v, (lo, hi) in program.bounds.items():
        if v not in declared:
            out.append(f"bounds: undeclared variable {v!r}")
        if (lo is not None and lo <= 0) or (hi is not None and hi <= 0):
            out.append(f"bounds: {v!r} bounds must be positive")
        if lo is not None and hi is not None and lo > hi:
            out.append(f"bounds: {v!r} has lower bound above upper bound")
    return out


@dataclass
class ConvexForm:
    """Log-domain program.

    Group 0 is the objective ``log f0``; groups 1..m are constraints
    ``log f_k(exp y) <= 0``.  Term t contributes ``exp(A[t] @ y + b[t])`` to
    group ``group[t]``; terms are sorted by group.  Equalities read ``C y = d``.
    """

    variables: list[str]
    A: sp.csr_matrix
    b: np.ndarray
    group: np.ndarray
    n_groups: int
    C: np.ndarray
    d: np.ndarray
    labels: list[str]

    def group_values(self, y: np.ndarray) -> np.ndarray:
        return _lse_groups(self.A @ y + self.b, self.group, self.n_groups)[0]


def _lse_groups(u: np.ndarray, group: np.ndarray, n_groups: int):
    starts = np.flatnonzero(np.r_[True, group[1:] != group[:-1]])
    m = np.maximum.reduceat(u, starts)
    e = np.exp(u - m[group])
    ssum = np.add.reduceat(e, starts)
    F = m + np.log(ssum)
    s = e / ssum[group]
    if len(starts) != n_groups:  # pragma: no cover - empty groups are filtered earlier
        raise ValueError("empty posynomial group")
    return F, s


def gp_to_convex(program: GeometricProgram, box: float | None = None) -> ConvexForm:
    """Transform to log variables; declared bounds become single-term constraints.

    ``box`` additionally confines every variable to ``|log x| <= box``.
    """
    idx = {v: k for k, v in enumerate(program.variables)}
    rows, cols, vals, b, group = [], [], [], [], []
    labels = ["objective"]
    t = 0

    def add(terms: list[Monomial], g: int):
        nonlocal t
        for m in terms:
            for v, e in m.exps.items():
                rows.append(t)
                cols.append(idx[v])
                vals.append(e)
            b.append(math.log(m.coeff))
            group.append(g)
            t += 1

    add(program.objective.terms, 0)
    g = 0
    for k, f in enumerate(program.ineqs):
        if not f.terms:
            continue  # the zero posynomial satisfies f <= 1 trivially
        g += 1
        add(f.terms, g)
        labels.append(program.ineq_label(k))
    for v, (lo, hi) in program.bounds.items():
        if hi is not None:
            g += 1
            add([Monomial(1.0 / hi, {v: 1.0})], g)
            labels.append(f"{v} <= {hi:g}")
        if lo is not None:
            g += 1
            add([Monomial(lo, {v: -1.0})], g)
            labels.append(f"{v} >= {lo:g}")
    if box is not None:
        for v in program.variables:
            g += 1
            add([Monomial(math.exp(-box), {v: 1.0})], g)
            labels.append(f"box:{v}+")
            g += 1
            add([Monomial(math.exp(-box), {v: -1.0})], g)
            labels.append(f"box:{v}-")
    n = len(program.variables)
    A = sp.csr_matrix((vals, (rows, cols)), shape=(t, n))
    C = np.zeros((len(program.eqs), n))
    d = np.zeros(len(program.eqs))
    for k, geq in enumerate(program.eqs):
        m = geq if isinstance(geq, Monomial) else Posynomial.of(geq).terms[0]
        for v, e in m.exps.items():
            C[k, idx[v]] = e
        d[k] = -math.log(m.coeff)
    return ConvexForm(list(program.variables), A, np.array(b, dtype=float), np.array(group, dtype=np.int64),
                      g + 1, C, d, labels)


@dataclass
class GpSolution:
    status: str  # optimal | infeasible | unbounded | max-iterations
    values: dict[str, float]
    objective_value: float
    kkt_residual: float
    newton_steps: int = 0
    duality_gap: float = math.inf
    max_ineq: float = math.nan  # max_k f_k(x) over the posynomial constraints
    max_eq_residual: float = 0.0
    message: str = ""

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


def _eliminate(C: np.ndarray, d: np.ndarray, n: int):
    """Parametrize {y : C y = d} as y0 + Z z; None when inconsistent."""
    if C.shape[0] == 0:
        return np.zeros(n), sp.identity(n, format="csr")
    Q, R, piv = scipy.linalg.qr(C, pivoting=True, mode="economic")
    diag = np.abs(np.diag(R))
    r = int(np.sum(diag > 1e-12 * max(1.0, diag.max(initial=0.0))))
    qd = Q.T @ d
    basic, free = piv[:r], piv[r:]
    R1, R2 = R[:r, :r], R[:r, r:]
    y0 = np.zeros(n)
    y0[basic] = scipy.linalg.solve_triangular(R1, qd[:r])
    if np.max(np.abs(C @ y0 - d), initial=0.0) > 1e-9 * max(1.0, np.abs(d).max()):
        return None
    T = -scipy.linalg.solve_triangular(R1, R2) if free.size else np.zeros((r, 0))
    T[np.abs(T) < 1e-15] = 0.0
    Z = sp.lil_matrix((n, free.size))
    for k, v in enumerate(free):
        Z[v, k] = 1.0
    Tc = sp.coo_matrix(T)
    for a, c, val in zip(Tc.row, Tc.col, Tc.data):
        Z[basic[a], c] = val
    return y0, Z.tocsr()


class _Lse:
    """Grouped log-sum-exp functions F_k(z) = log sum_{t in k} exp(A_t z + b_t).

    Small problems are held densely; sparse bookkeeping dominates otherwise.
    """

    def __init__(self, A: sp.csr_matrix, b: np.ndarray, group: np.ndarray, n_groups: int):
        self.b = b
        self.group = group
        self.K = n_groups
        self.T = A.shape[0]
        self.dense = self.T * max(A.shape[1], n_groups) <= DENSE_LIMIT
        if self.dense:
            self.A = A.toarray() if sp.issparse(A) else np.asarray(A)
            self.ind = np.zeros((n_groups, self.T))
            self.ind[group, np.arange(self.T)] = 1.0
        else:
            self.A = sp.csr_matrix(A)

    def values(self, z):
        return _lse_groups(self.A @ z + self.b, self.group, self.K)[0]

    def derivs(self, z):
        """(F, G, s): values, Jacobian rows and term softmax weights."""
        F, s = _lse_groups(self.A @ z + self.b, self.group, self.K)
        if self.dense:
            return F, (self.ind * s) @ self.A, s
        S = sp.csr_matrix((s, (self.group, np.arange(self.T))), shape=(self.K, self.T))
        return F, (S @ self.A).tocsr(), s

    def weighted_hessian(self, G, s, w, extra=None):
        """sum_k w_k Hess F_k = A^T diag(w_g s) A - G^T diag(w) G, plus G^T diag(extra) G."""
        c = -w if extra is None else extra - w
        if self.dense:
            return self.A.T @ (self.A * (w[self.group] * s)[:, None]) + G.T @ (G * c[:, None])
        return self.A.T @ sp.diags(w[self.group] * s) @ self.A + G.T @ sp.diags(c) @ G


def _row(G, k) -> np.ndarray:
    return G[k].toarray().ravel() if sp.issparse(G) else np.asarray(G[k]).ravel()


def _solve_spd(H, rhs):
    n = H.shape[0]
    scale = max(1.0, float(np.max(np.abs(np.diag(H))))) if n else 1.0
    reg = 0.0
    for _ in range(12):
        try:
            cf = scipy.linalg.cho_factor(H + reg * np.eye(n), check_finite=False)
            return scipy.linalg.cho_solve(cf, rhs, check_finite=False)
        except (np.linalg.LinAlgError, ValueError):
            reg = 1e-13 * scale if reg == 0.0 else reg * 100
    return np.linalg.lstsq(H, rhs, rcond=None)[0]


@dataclass
class _PdState:
    z: np.ndarray
    slack: np.ndarray
    lam: np.ndarray
    gap: float = math.inf  # slack^T lam
    r_dual: float = math.inf
    r_prim: float = math.inf
    steps: int = 0
    status: str = "running"  # running | converged | stopped | stalled | max-iterations


Z_STEP_CAP = 5.0
DENSE_LIMIT = 250_000  # terms x max(variables, groups) below which _Lse is dense
LOOSE_TOL = 1e-5  # gap and residuals accepted, flagged, when iterations run out


def _primal_dual(fn: _Lse, z: np.ndarray, tol: float, max_steps: int, steps: int = 0,
                 feas_tol: float = 1e-9, dual_tol: float = 1e-7, stop=None) -> _PdState:
    """Infeasible-start primal-dual interior point for min F_0 s.t. F_k <= 0.

    Constraints are written F_k(z) + s_k = 0 with s > 0, so iterates need not
    be strictly feasible; steps use Mehrotra's predictor-corrector rule with a
    backtracking safeguard on the residual norm.  ``stop(state, F)`` may end
    the run early.
    """
    m = fn.K - 1
    F = fn.values(z)
    slack = np.maximum(-F[1:], 1e-2)
    lam = 1.0 / slack
    st = _PdState(z.copy(), slack, lam, steps=steps)

    def residuals(z, slack, lam, F=None, G=None):
        if F is None:
            F, G, _ = fn.derivs(z)
        rd = G.T @ np.r_[1.0, lam]
        rp = F[1:] + slack
        return rd, rp, F, G

    while True:
        F, G, sw = fn.derivs(st.z)
        rd, rp, _, _ = residuals(st.z, st.slack, st.lam, F, G)
        st.gap = float(st.slack @ st.lam)
        st.r_dual = float(np.max(np.abs(rd), initial=0.0))
        st.r_prim = float(np.max(np.abs(rp), initial=0.0))
        if stop is not None and stop(st, F):
            st.status = "stopped"
            return st
        if st.gap <= tol and st.r_dual <= dual_tol and st.r_prim <= feas_tol:
            st.status = "converged"
            return st
        if st.steps >= max_steps:
            st.status = "max-iterations"
            return st
        st.steps += 1
        mu = st.gap / m
        Gc = G[1:]
        d = st.lam / st.slack
        H = fn.weighted_hessian(G, sw, np.r_[1.0, st.lam], np.r_[0.0, d])
        H = H.toarray() if sp.issparse(H) else np.asarray(H)
        H = 0.5 * (H + H.T)
        n = H.shape[0]
        scale = max(1.0, float(np.max(np.abs(np.diag(H))))) if n else 1.0
        cf = None
        reg = 0.0
        for _ in range(12):
            try:
                cf = scipy.linalg.cho_factor(H + reg * np.eye(n), check_finite=False)
                break
            except (np.linalg.LinAlgError, ValueError):
                reg = 1e-13 * scale if reg == 0.0 else reg * 100

        def direction(rc):
            # S dlam + Lam ds = -rc, G dz + ds = -rp, H dz + G^T dlam = -rd
            rhs = -rd - Gc.T @ ((-rc + st.lam * rp) / st.slack)
            dz = (scipy.linalg.cho_solve(cf, rhs, check_finite=False) if cf is not None
                  else np.linalg.lstsq(H, rhs, rcond=None)[0])
            ds = -rp - Gc @ dz
            dl = (-rc - st.lam * ds) / st.slack
            return dz, ds, dl

        def max_step(ds, dl):
            a = 1.0
            for v, dv in ((st.slack, ds), (st.lam, dl)):
                neg = dv < 0
                if np.any(neg):
                    a = min(a, float(np.min(-v[neg] / dv[neg])))
            return a

        dz, ds, dl = direction(st.lam * st.slack)
        a_aff = max_step(ds, dl)
        mu_aff = float((st.slack + a_aff * ds) @ (st.lam + a_aff * dl)) / m
        sigma = min(1.0, (mu_aff / mu) ** 3) if mu > 0 else 0.0
        # the corrected direction first; the plain Newton direction toward a
        # more centered target is a descent direction for the residual norm
        # and serves as fallback
        trials = [(sigma, direction(st.lam * st.slack + ds * dl - sigma * mu)),
                  (max(sigma, 0.1), None)]
        accepted = False
        for sig, dirs in trials:
            if dirs is None:
                dirs = direction(st.lam * st.slack - sig * mu)
            dz, ds, dl = dirs
            # a trust cap in log units: far from the optimum the LSE curvature is
            # tiny and full steps overshoot by many orders of magnitude
            big = float(np.max(np.abs(dz), initial=0.0))
            step = min(1.0, 0.99 * max_step(ds, dl), Z_STEP_CAP / big if big > 0 else 1.0)
            r0 = math.sqrt(float(rd @ rd + rp @ rp) + float(np.sum((st.lam * st.slack - sig * mu) ** 2)))
            while step > 1e-3 or (sig != sigma and step > 1e-12):
                zn, sn, ln = st.z + step * dz, st.slack + step * ds, st.lam + step * dl
                rdn, rpn, _, _ = residuals(zn, sn, ln)
                r1 = math.sqrt(float(rdn @ rdn + rpn @ rpn) + float(np.sum((ln * sn - sig * mu) ** 2)))
                if r1 <= (1.0 - 0.01 * step) * r0 or r1 <= 1e-13:
                    accepted = True
                    break
                step *= 0.5
            if accepted:
                break
        if not accepted:
            st.status = "stalled"
            return st
        st.z, st.slack, st.lam = zn, sn, ln
        # where the new point is strictly feasible the slack is known exactly
        Fn = fn.values(zn)[1:]
        st.slack = np.where(Fn < 0, -Fn, sn)


def gp_solve(program: GeometricProgram, tol: float = DEFAULT.gp_tol,
             max_newton: int = DEFAULT.gp_max_newton, box: float = 60.0) -> GpSolution:
    """Solve ``program``; ``tol`` bounds the duality gap in log-objective units.

    Raises ``ValueError`` on structural violations (see :func:`gp_validate`).
    """
    bad = gp_validate(program)
    if bad:
        raise ValueError("not a geometric program: " + "; ".join(bad))
    cf = gp_to_convex(program, box=box)
    n = len(cf.variables)
    elim = _eliminate(cf.C, cf.d, n)
    if elim is None:
        return GpSolution("infeasible", {}, math.nan, math.nan, message="inconsistent equality constraints")
    y0, Z = elim
    Az = (cf.A @ Z).tocsr()
    bz = cf.b + cf.A @ y0
    nz = Z.shape[1]
    m = cf.n_groups - 1
    fn = _Lse(Az, bz, cf.group, cf.n_groups)

    def finish(status, z, steps, gap, kkt, msg=""):
        y = y0 + Z @ z
        x = np.exp(y)
        values = dict(zip(cf.variables, x.tolist()))
        F = cf.group_values(y)
        fk = [f(values) for f in program.ineqs if f.terms]
        eqres = [abs(Posynomial.of(g)(values) - 1.0) for g in program.eqs]
        if status == "optimal" and np.any(np.abs(y) > box - 1.0):
            status, msg = "unbounded", "a variable reached the safety box"
        return GpSolution(status, values, float(math.exp(F[0])), float(kkt), steps, float(gap),
                          max(fk, default=-math.inf), max(eqres, default=0.0), msg)

    z = np.zeros(nz)
    # -- phase I: minimize s subject to F_k(z) <= s ---------------------------
    F_init = fn.values(z)
    steps = 0
    if m > 0 and np.max(F_init[1:]) >= -1e-3:
        obj_rows = cf.group == 0
        Ac = Az[~obj_rows]
        A1 = sp.vstack([sp.csr_matrix(([1.0], ([0], [nz])), shape=(1, nz + 1)),
                        sp.hstack([Ac, sp.csr_matrix(-np.ones((Ac.shape[0], 1)))])]).tocsr()
        ph = _Lse(A1, np.r_[0.0, bz[~obj_rows]], np.r_[0, cf.group[~obj_rows]], cf.n_groups)
        # F_0 = log exp(s) = s is affine, so s may go negative
        w0 = np.r_[z, float(np.max(F_init[1:])) + 1.0]
        target = -1e-2

        def stop(st, Fv):
            # a strictly feasible start was found
            return float(np.max(fn.values(st.z[:-1])[1:])) < target

        st = _primal_dual(ph, w0, 1e-10, max_newton, stop=stop)
        steps = st.steps
        z = st.z[:-1]
        if st.status != "stopped":
            Fz = fn.values(z)
            bad = int(np.argmax(Fz[1:])) + 1
            # a stall near a phase-I optimum that is clearly above zero still proves
            # infeasibility; the residuals bound how far the stalled point can be off
            s_opt = float(st.z[-1])
            near_kkt = st.gap <= 1e-8 and st.r_prim <= 1e-3 * s_opt and st.r_dual <= 1e-4
            if st.status == "stalled" and near_kkt and s_opt > 1e-3:
                st.status = "converged"
            if st.status != "converged":
                return finish("max-iterations", z, steps, math.inf, math.nan,
                              f"phase I did not finish ({st.status}: s={st.z[-1]:.3g}, gap={st.gap:.2g}, "
                              f"r_dual={st.r_dual:.2g}, r_prim={st.r_prim:.2g})")
            if float(np.max(Fz[1:])) > math.log1p(1e-9):
                return finish("infeasible", z, steps, math.inf, math.nan,
                              f"phase-I optimum {math.exp(st.z[-1]):.9g} > 1; binding: {cf.labels[bad]}")
    # -- phase II ---------------------------------------------------------------
    if m == 0:
        # unconstrained: plain damped Newton on F_0
        for _ in range(max_newton - steps):
            F, G, s = fn.derivs(z)
            g = _row(G, 0)
            if np.max(np.abs(g), initial=0.0) <= 1e-12:
                break
            H = fn.weighted_hessian(G, s, np.r_[1.0, np.zeros(0)])
            H = H.toarray() if sp.issparse(H) else np.asarray(H)
            dz = _solve_spd(0.5 * (H + H.T), -g)
            # Armijo backtracking: the LSE Hessian can be nearly flat far from the optimum
            t, f0, slope = 1.0, F[0], float(g @ dz)
            while t > 1e-12 and fn.values(z + t * dz)[0] > f0 + 0.25 * t * slope:
                t *= 0.5
            z = z + t * dz
            steps += 1
            if np.max(np.abs(y0 + Z @ z), initial=0.0) > box:
                break
        F, G, _ = fn.derivs(z)
        kkt = float(np.max(np.abs(_row(G, 0)), initial=0.0))
        return finish("optimal" if kkt <= 1e-9 else "max-iterations", z, steps, 0.0, kkt)
    st = _primal_dual(fn, z, tol, max_newton, steps)
    status = {"converged": "optimal", "stalled": "max-iterations"}.get(st.status, st.status)
    msg = "" if status == "optimal" else (f"interior-point iterations {st.status} (gap={st.gap:.2g}, "
                                          f"r_dual={st.r_dual:.2g}, r_prim={st.r_prim:.2g})")
    if st.status == "stalled" and st.gap <= 10 * tol and st.r_dual <= 1e-6 and st.r_prim <= 1e-8:
        status, msg = "optimal", "line search stalled at the requested accuracy"
    elif st.status in ("stalled", "max-iterations") and max(st.gap, st.r_dual, st.r_prim) <= LOOSE_TOL:
        # optima approached only along a flat valley (typically at a far bound);
        # the objective is in log scale, so the gap is a relative accuracy
        status = "optimal"
        msg = f"reduced accuracy (gap={st.gap:.2g}, r_dual={st.r_dual:.2g}, r_prim={st.r_prim:.2g})"
    return finish(status, st.z, st.steps, st.gap, st.r_dual, msg)
