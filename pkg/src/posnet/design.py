"""Distribution design by geometric programming.

A :class:`DesignFamily` describes how the block means and variability bounds
of a network depend on positive design parameters ``r``.  The mean is split as
``E[A] = E[A+] - E[A-]`` with ``E[A+]`` a posynomial matrix and ``E[A-]`` a
diagonal monomial matrix; ``eta``, ``phi`` and ``psi`` are posynomial upper
bounds on the deviation and on ``W(A_ij)``, ``W(A_ij^T)``.  The certificate
conditions then become a geometric program in ``(a, Delta, sigma, rho,
lambda, p, r, v, w)``:

* mean: ``(E[A+]^T P + P E[A+] + a I + lambda P) v <= 2 P E[A-] v`` componentwise,
  which for a Metzler left side is equivalent to the matrix inequality
  (Perron-Frobenius);
* tail: ``(2 rho Delta / a + 6 rho sigma^2 / a^2) / 3 <= 1 - 1e-9``;
* deviation: ``p_i eta_ij <= Delta``;
* variance: ``M_i(p, r) w_i <= sigma^2 w_i`` componentwise, M_i the summed
  variance bound of block-row i.

A diagonal block enters its summand as ``A_ii + A_ii^T``, so its deviation and
variance bounds count twice (``Var(A + A^T) <= 2 (W(A) + W(A^T))``).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping

import numpy as np

from . import bernstein
from .certify import CertificateParams, CertResult, MomentTable, check_certificate
from .gpsolve import GeometricProgram, GpSolution, Monomial, Posynomial, gp_solve, gp_validate, var
from .model import (FiniteMatrixDistribution, NetworkModel, block_esssup_dev, block_mean, block_w,
                    symmetric_part_moments)
from .policy import DEFAULT

TAIL_STRICT = 1e-9
P_RANGE = 1e3  # scalings p_i and weights v_k live in [1/P_RANGE, P_RANGE]
RESERVED = ("a", "Delta", "sigma", "rho", "lambda")


class DesignError(RuntimeError):
    pass


class SurrogateError(DesignError):
    """The realized model violates the family's surrogate bounds."""


@dataclass
class DesignFamily:
    N: int
    n: int
    mode: str  # "a1" or "a2"
    r_names: list[str]
    mean_plus: dict  # (row, col) state index -> Posynomial
    mean_minus: list  # per state index: Monomial (positive)
    eta: dict  # a1: (i, j) -> Posynomial ; a2: i -> Posynomial
    phi: dict  # a1: (i, j) -> {(k, l): Posynomial} bounds W(A_ij); a2: i -> {(k, l): ...} over nN
    psi: dict = field(default_factory=dict)  # a1 only: bounds W(A_ij^T)
    cost: Posynomial | None = None
    cost_bound: float | None = None
    ineqs: list = field(default_factory=list)  # posynomials in (r, rho), <= 1
    eqs: list = field(default_factory=list)  # monomials in (r, rho), == 1
    r_bounds: dict = field(default_factory=dict)  # name -> (lo, hi); default (1e-4, 1)
    template: dict | None = None  # model document with expressions in r
    model_at: Callable[[Mapping[str, float]], NetworkModel] | None = None

    def __post_init__(self):
        self.mode = self.mode.lower()
        if self.model_at is None and self.template is not None:
            tpl = self.template
            self.model_at = lambda r: model_from_template(tpl, r)
        clash = set(self.r_names) & (set(RESERVED) | {f"p{i + 1}" for i in range(self.N)})
        if clash or any(nm.startswith(("v", "w")) and nm[1:].replace("_", "").isdigit() for nm in self.r_names):
            raise ValueError(f"design parameter names clash with internal variables: {sorted(clash)}")

    @property
    def dim(self) -> int:
        return self.n * self.N

    def bounds_of(self, name: str) -> tuple[float, float]:
        return tuple(self.r_bounds.get(name, (1e-4, 1.0)))

    # -- structure ---------------------------------------------------------

    def violations(self) -> list[str]:
        out = []
        names = set(self.r_names) | {"rho"}
        if len(self.mean_minus) != self.dim:
            out.append(f"mean_minus has {len(self.mean_minus)} entries, expected {self.dim}")
        for k, m in enumerate(self.mean_minus):
            if not isinstance(m, Monomial) or m.coeff <= 0:
                out.append(f"mean_minus[{k + 1}] must be a monomial with positive coefficient")
            elif m.variables - set(self.r_names):
                out.append(f"mean_minus[{k + 1}] uses unknown variables {sorted(m.variables - set(self.r_names))}")

        def chk(where, f, allowed):
            f = Posynomial.of(f)
            for t in f.terms:
                if t.coeff < 0:
                    out.append(f"{where}: negative coefficient {t.coeff!r}")
            extra = f.variables - allowed
            if extra:
                out.append(f"{where}: unknown variables {sorted(extra)}")

        rset = set(self.r_names)
        for (a, b), f in self.mean_plus.items():
            chk(f"mean_plus({a + 1},{b + 1})", f, rset)
        for key, f in self.eta.items():
            chk(f"eta{_fmt(key)}", f, rset)
        for tag, table in (("phi", self.phi), ("psi", self.psi)):
            for key, mat in table.items():
                for (k, l), f in mat.items():
                    chk(f"{tag}{_fmt(key)}[{k + 1},{l + 1}]", f, rset)
        if self.cost is not None:
            chk("cost", self.cost, names)
            if not self.cost_bound or self.cost_bound <= 0:
                out.append("cost bound must be positive")
        for k, f in enumerate(self.ineqs):
            chk(f"constraint[{k + 1}]", f, names)
        for k, g in enumerate(self.eqs):
            g = Posynomial.of(g)
            if len(g) != 1:
                out.append(f"equality[{k + 1}]: not a monomial")
            else:
                chk(f"equality[{k + 1}]", g, names)
        return out

    # -- serialization -----------------------------------------------------

    def to_json(self) -> dict:
        a1 = self.mode == "a1"
        doc = {
            "N": self.N, "n": self.n, "mode": self.mode,
            "r": [{"name": nm, "lo": self.bounds_of(nm)[0], "hi": self.bounds_of(nm)[1]} for nm in self.r_names],
            "mean_plus": [{"row": a + 1, "col": b + 1, "terms": Posynomial.of(f).to_json()}
                          for (a, b), f in self.mean_plus.items()],
            "mean_minus": [m.to_json() for m in self.mean_minus],
            "eta": [dict(_key_json(k, a1), terms=Posynomial.of(f).to_json()) for k, f in self.eta.items()],
            "phi": [dict(_key_json(k, a1), row=a + 1, col=b + 1, terms=Posynomial.of(f).to_json())
                    for k, mat in self.phi.items() for (a, b), f in mat.items()],
            "psi": [dict(_key_json(k, a1), row=a + 1, col=b + 1, terms=Posynomial.of(f).to_json())
                    for k, mat in self.psi.items() for (a, b), f in mat.items()],
            "ineqs": [Posynomial.of(f).to_json() for f in self.ineqs],
            "eqs": [Posynomial.of(g).terms[0].to_json() for g in self.eqs],
        }
        if self.cost is not None:
            doc["cost"] = {"terms": self.cost.to_json(), "bound": self.cost_bound}
        if self.template is not None:
            doc["model_template"] = self.template
        return doc

    @classmethod
    def from_json(cls, doc: Mapping) -> "DesignFamily":
        mode = doc.get("mode", "a1").lower()
        a1 = mode == "a1"

        def key(e):
            return (e["i"] - 1, e["j"] - 1) if a1 else e["i"] - 1

        def mats(entries):
            out: dict = {}
            for e in entries:
                out.setdefault(key(e), {})[(e["row"] - 1, e["col"] - 1)] = Posynomial.from_json(e["terms"])
            return out

        cost = doc.get("cost")
        return cls(
            N=int(doc["N"]), n=int(doc["n"]), mode=mode,
            r_names=[r["name"] for r in doc.get("r", [])],
            r_bounds={r["name"]: (r.get("lo", 1e-4), r.get("hi", 1.0)) for r in doc.get("r", [])},
            mean_plus={(e["row"] - 1, e["col"] - 1): Posynomial.from_json(e["terms"]) for e in doc.get("mean_plus", [])},
            mean_minus=[Monomial.from_json(t) for t in doc["mean_minus"]],
            eta={key(e): Posynomial.from_json(e["terms"]) for e in doc.get("eta", [])},
            phi=mats(doc.get("phi", [])),
            psi=mats(doc.get("psi", [])),
            cost=None if cost is None else Posynomial.from_json(cost["terms"]),
            cost_bound=None if cost is None else float(cost["bound"]),
            ineqs=[Posynomial.from_json(f) for f in doc.get("ineqs", [])],
            eqs=[Monomial.from_json(g) for g in doc.get("eqs", [])],
            template=doc.get("model_template"),
        )


def _fmt(key) -> str:
    return f"({key[0] + 1},{key[1] + 1})" if isinstance(key, tuple) else f"({key + 1})"


def _key_json(key, a1: bool) -> dict:
    return {"i": key[0] + 1, "j": key[1] + 1} if a1 else {"i": key + 1}


def load_family(path) -> DesignFamily:
    return DesignFamily.from_json(json.loads(Path(path).read_text()))


# -- expressions in templates ----------------------------------------------

def _eval_expr(x, r: Mapping[str, float]) -> float:
    """A number, or a list of signed terms {"c", "e"} evaluated at r."""
    if isinstance(x, (int, float)):
        return float(x)
    return math.fsum(Monomial.from_json(t)(r) for t in x)


def model_from_template(template: Mapping, r: Mapping[str, float]) -> NetworkModel:
    """Instantiate a model document whose weights and entries may be expressions in r."""

    def support(items):
        ws = [_eval_expr(s["w"], r) for s in items]
        ms = [[[_eval_expr(x, r) for x in row] for row in s["m"]] for s in items]
        keep = [(w, m) for w, m in zip(ws, ms) if w > 0]
        return {"support": [{"w": w, "m": m} for w, m in keep]}

    doc = {"N": template["N"], "n": template["n"], "mode": template.get("mode", "a1")}
    if "blocks" in template:
        doc["blocks"] = [dict(i=b["i"], j=b["j"], **support(b["support"])) for b in template["blocks"]]
    if "rows" in template:
        doc["rows"] = [dict(i=b["i"], **support(b["support"])) for b in template["rows"]]
    return NetworkModel.from_json(doc)


# -- program construction ----------------------------------------------------

def _p(i):
    return var(f"p{i + 1}")


def _v(k):
    return var(f"v{k + 1}")


def _w1(i, k):
    return var(f"w{i + 1}_{k + 1}")


def _w2(k):
    return var(f"w{k + 1}")


def _nonzero(f) -> bool:
    return f is not None and len(Posynomial.of(f)) > 0


def _base_program(family: DesignFamily, eps: float | None, lam: float | None,
                  objective: str, has_dev: bool, has_var: bool):
    N, n, dim = family.N, family.n, family.dim
    if lam is not None and lam < 0:
        raise ValueError("decay rate must be nonnegative")
    if lam == 0 and objective == "lambda":
        raise ValueError("cannot maximize lambda with lambda pinned")
    # a rate pinned at zero drops out of the program
    has_lam = lam is None or lam > 0
    random = has_dev or has_var
    names = []
    if random:
        names.append("a")
    if has_dev:
        names.append("Delta")
    if has_var:
        names.append("sigma")
    names += ["rho", "lambda"] if has_lam else ["rho"]
    names += [f"p{i + 1}" for i in range(N)] + list(family.r_names) + [f"v{k + 1}" for k in range(dim)]
    obj = Posynomial.of(var("lambda") ** -1) if objective == "lambda" else Posynomial.of(var("rho") ** -1)
    prog = GeometricProgram(obj, variables=names)

    # mean stability with a Perron-type vector v
    col: dict[int, list] = {}
    for (a, b), f in family.mean_plus.items():
        col.setdefault(b, []).append((a, f))
    rows: dict[int, list] = {}
    for (a, b), f in family.mean_plus.items():
        rows.setdefault(a, []).append((b, f))
    lam_v = var("lambda")
    for k in range(dim):
        bi = k // n
        lhs = Posynomial()
        for l, f in col.get(k, []):  # (E+^T P v)_k = sum_l E+_lk p_b(l) v_l
            lhs = lhs + Posynomial.of(f) * (_p(l // n) * _v(l))
        for l, f in rows.get(k, []):  # (P E+ v)_k = p_b(k) sum_l E+_kl v_l
            lhs = lhs + Posynomial.of(f) * (_p(bi) * _v(l))
        if random:
            lhs = lhs + var("a") * _v(k)
        if has_lam:
            lhs = lhs + lam_v * _p(bi) * _v(k)
        rhs = 2.0 * _p(bi) * family.mean_minus[k] * _v(k)
        prog.add_ineq(lhs / rhs, f"mean[{k + 1}]")

    if random:
        tail = Posynomial()
        if has_dev:
            tail = tail + 2.0 * var("rho") * var("Delta") * var("a") ** -1
        if has_var:
            tail = tail + 6.0 * var("rho") * var("sigma") ** 2 * var("a") ** -2
        prog.add_ineq(tail / (3.0 * (1.0 - TAIL_STRICT)), "tail")

    if family.cost is not None:
        prog.add_ineq(family.cost / family.cost_bound, "cost")
    for k, f in enumerate(family.ineqs):
        prog.add_ineq(f, f"constraint[{k + 1}]")
    for k, g in enumerate(family.eqs):
        prog.add_eq(g, f"equality[{k + 1}]")

    for nm in family.r_names:
        prog.bounds[nm] = family.bounds_of(nm)
    # a node without random inflow can take an arbitrarily large p_i, so the
    # supremum would sit at infinity; a wide box makes it attained
    for i in range(N):
        prog.bounds[f"p{i + 1}"] = (1.0 / P_RANGE, P_RANGE)
    # same story for the deviation weights v
    for k in range(dim):
        prog.bounds[f"v{k + 1}"] = (1.0 / P_RANGE, P_RANGE)
    nN = n * N
    rho_lo = math.log(nN) if nN > 1 else None
    prog.bounds["rho"] = (rho_lo, math.log(nN) - math.log(DEFAULT.eps_floor))
    if eps is not None:
        rho0 = bernstein.rho_of_eps(eps, n, N)
        prog.add_eq(var("rho") / rho0 if rho0 > 0 else var("rho"), "fixed eps")
        if rho0 <= 0:
            raise DesignError("fixed eps must be below 1 when nN = 1")
    if lam is not None and has_lam:
        prog.add_eq(var("lambda") / float(lam), "fixed lambda")
    # scale normalizations: the program is invariant under p -> c p (with a,
    # Delta, sigma) and under v -> c v, so pin the geometric means
    prog.add_eq(Monomial(1.0, {f"p{i + 1}": 1.0 for i in range(N)}), "normalize p")
    prog.add_eq(Monomial(1.0, {f"v{k + 1}": 1.0 for k in range(dim)}), "normalize v")
    return prog


def build_design_gp_a1(family: DesignFamily, eps: float | None = None, lam: float | None = None,
                       objective: str = "lambda") -> GeometricProgram:
    """Design program under independent blocks.

    ``eps`` pins rho = log(nN/eps) (fixed-eps mode); without it rho is free.
    ``lam`` pins the decay rate.  ``objective`` is "lambda" (minimize
    1/lambda) or "rho" (minimize 1/rho).
    """
    if family.mode != "a1":
        raise ValueError("family is not in a1 mode")
    bad = family.violations()
    if bad:
        raise DesignError("invalid design family: " + "; ".join(bad))
    N, n = family.N, family.n
    eta = {k: f for k, f in family.eta.items() if _nonzero(f)}
    # per block-row i: state (k, l) -> list of (owner index, posynomial, factor)
    var_rows: list[dict] = [dict() for _ in range(N)]

    def put(i, owner, mat, factor):
        for (k, l), f in mat.items():
            if _nonzero(f):
                var_rows[i].setdefault((k, l), []).append((owner, Posynomial.of(f), factor))

    for (i, j), mat in family.psi.items():
        put(i, i, mat, 2.0 if i == j else 1.0)
    for (j, i), mat in family.phi.items():  # Phi_ji enters row i with weight p_j^2
        put(i, j, mat, 2.0 if i == j else 1.0)
    has_var = any(var_rows)
    prog = _base_program(family, eps, lam, objective, bool(eta), has_var)
    for (i, j), f in eta.items():
        c = 2.0 if i == j else 1.0
        prog.add_ineq(c * Posynomial.of(f) * _p(i) / var("Delta"), f"deviation({i + 1},{j + 1})")
    for i in range(N):
        for k in range(n):
            prog.variables.append(f"w{i + 1}_{k + 1}")
        if not var_rows[i]:
            for k in range(n):
                prog.add_eq(_w1(i, k), f"w{i + 1} unused")
            continue
        for k in range(n):
            lhs = Posynomial()
            for l in range(n):
                for owner, f, c in var_rows[i].get((k, l), []):
                    lhs = lhs + c * f * _p(owner) ** 2 * _w1(i, l)
            if len(lhs):
                prog.add_ineq(lhs / (var("sigma") ** 2 * _w1(i, k)), f"variance({i + 1})[{k + 1}]")
        prog.add_eq(Monomial(1.0, {f"w{i + 1}_{k + 1}": 1.0 for k in range(n)}), f"normalize w{i + 1}")
    return prog


def build_design_gp_a2(family: DesignFamily, eps: float | None = None, lam: float | None = None,
                       objective: str = "lambda") -> GeometricProgram:
    """Design program under independent block-rows, with one shared w."""
    if family.mode != "a2":
        raise ValueError("family is not in a2 mode")
    bad = family.violations()
    if bad:
        raise DesignError("invalid design family: " + "; ".join(bad))
    dim = family.dim
    eta = {i: f for i, f in family.eta.items() if _nonzero(f)}
    entries: dict = {}
    for i, mat in family.phi.items():
        for (k, l), f in mat.items():
            if _nonzero(f):
                entries.setdefault((k, l), []).append((i, Posynomial.of(f)))
    has_var = bool(entries)
    prog = _base_program(family, eps, lam, objective, bool(eta), has_var)
    for i, f in eta.items():
        prog.add_ineq(2.0 * Posynomial.of(f) * _p(i) / var("Delta"), f"deviation({i + 1})")
    prog.variables.extend(f"w{k + 1}" for k in range(dim))
    if not has_var:
        for k in range(dim):
            prog.add_eq(_w2(k), "w unused")
        return prog
    for k in range(dim):
        lhs = Posynomial()
        for l in range(dim):
            for i, f in entries.get((k, l), []):
                lhs = lhs + f * _p(i) ** 2 * _w2(l)
        if len(lhs):
            prog.add_ineq(lhs / (var("sigma") ** 2 * _w2(k)), f"variance[{k + 1}]")
    prog.add_eq(Monomial(1.0, {f"w{k + 1}": 1.0 for k in range(dim)}), "normalize w")
    return prog


def build_design_gp(family: DesignFamily, eps=None, lam=None, objective="lambda") -> GeometricProgram:
    builder = build_design_gp_a1 if family.mode == "a1" else build_design_gp_a2
    return builder(family, eps, lam, objective)


# -- families from concrete models ---------------------------------------------

def family_from_model(model: NetworkModel, mode: str | None = None) -> tuple[DesignFamily, bool]:
    """A parameter-free family reproducing ``model``'s certificate constraints.

    Returns the family and whether its bounds are exact; they are when every
    variance matrix is entrywise nonnegative (always for scalar a1 blocks).
    Otherwise entrywise absolute values are used, which can only overstate
    sigma since lambda_max(sum c_k V_k) <= rho(sum c_k |V_k|).
    """
    from .certify import _row_var_reduced

    mode = (mode or model.mode).lower()
    n, N, dim = model.n, model.N, model.dim
    E = model.mean_matrix()
    mean_plus, mean_minus = {}, []
    big = max(1.0, float(np.max(np.abs(E))))
    for k in range(dim):
        e = E[k, k]
        m = -e if e < 0 else big
        mean_minus.append(Monomial(m))
        E_plus_kk = e + m
        if E_plus_kk > 0:
            mean_plus[(k, k)] = Posynomial.of(E_plus_kk)
    off = np.argwhere((E > 0) & ~np.eye(dim, dtype=bool))
    for a, b in off:
        mean_plus[(int(a), int(b))] = Posynomial.of(float(E[a, b]))
    exact = True

    def nonneg(M):
        nonlocal exact
        if np.any(M < 0):
            exact = False
        return {(int(k), int(l)): Posynomial.of(float(abs(M[k, l])))
                for k, l in zip(*np.nonzero(M))}

    eta, phi, psi = {}, {}, {}
    if mode == "a1":
        if model.mode != "a1":
            raise ValueError("a1 certificates need an a1 model")
        for (i, j), d in model.blocks.items():
            if d.is_deterministic:
                continue
            if i != j:
                eta[(i, j)] = Posynomial.of(block_esssup_dev(d))
                phi[(i, j)] = nonneg(block_w(d, "normal"))
                psi[(i, j)] = nonneg(block_w(d, "transposed"))
            else:
                dsym, vsym = symmetric_part_moments(d)
                # the builder doubles diagonal contributions
                eta[(i, i)] = Posynomial.of(dsym / 2.0)
                phi[(i, i)] = nonneg(vsym / 4.0)
                psi[(i, i)] = nonneg(vsym / 4.0)
    else:
        m2 = model.to_a2()
        for i, d in m2.rows.items():
            if d.is_deterministic:
                continue
            eta[i] = Posynomial.of(block_esssup_dev(d))
            idx, V = _row_var_reduced(m2, i)
            full = {}
            for a in range(len(idx)):
                for b in range(len(idx)):
                    if V[a, b] != 0:
                        if V[a, b] < 0:
                            exact = False
                        full[(int(idx[a]), int(idx[b]))] = Posynomial.of(float(abs(V[a, b])))
            phi[i] = full
    fam = DesignFamily(N=N, n=n, mode=mode, r_names=[], mean_plus=mean_plus, mean_minus=mean_minus,
                       eta=eta, phi=phi, psi=psi, model_at=lambda r: model)
    return fam, exact


def certificate_program(model: NetworkModel, lam: float, mode: str | None = None):
    """Program maximizing rho (minimizing eps) at fixed decay rate; (program, exact)."""
    fam, exact = family_from_model(model, mode)
    return build_design_gp(fam, eps=None, lam=lam, objective="rho"), exact


# -- solving -----------------------------------------------------------------

@dataclass
class DesignResult:
    r_star: dict
    lambda_star: float
    eps_star: float
    rho_star: float
    p_star: np.ndarray
    a: float
    delta: float
    sigma: float
    v: np.ndarray
    w: np.ndarray
    gp_status: str
    certificate: CertResult | None = None
    gp: GpSolution | None = None

    def to_json(self) -> dict:
        return {"r_star": self.r_star, "lambda_star": self.lambda_star, "eps_star": self.eps_star,
                "rho_star": self.rho_star, "p_star": list(map(float, self.p_star)), "a": self.a,
                "Delta": self.delta, "sigma": self.sigma, "v": list(map(float, self.v)),
                "w": list(map(float, self.w)), "gp_status": self.gp_status,
                "certificate": None if self.certificate is None else self.certificate.to_json()}


def solve_design(family: DesignFamily, eps: float | None = None, lam: float | None = None,
                 verify: bool = True, **gp_kwargs) -> DesignResult:
    """Solve the design program and re-certify the realized model at r*."""
    prog = build_design_gp(family, eps=eps, lam=lam)
    sol = gp_solve(prog, **gp_kwargs)
    if sol.status == "infeasible":
        raise DesignError(f"no design meets cost/constraints at any rate ({sol.message})")
    if sol.status != "optimal":
        raise DesignError(f"design program ended with status {sol.status}: {sol.message}")
    x = sol.values
    N, dim = family.N, family.dim
    p = np.array([x[f"p{i + 1}"] for i in range(N)])
    c = 1.0 / p.max()
    rho = x["rho"]
    eps_star = family.n * family.N * math.exp(-rho)
    random = "a" in x
    d = x.get("Delta", 0.0) * c
    s = x.get("sigma", 0.0) * c
    a = x["a"] * c if random else 0.0
    if family.mode == "a1":
        w = np.array([x[f"w{i + 1}_{k + 1}"] for i in range(N) for k in range(family.n)])
    else:
        w = np.array([x[f"w{k + 1}"] for k in range(dim)])
    res = DesignResult(
        r_star={nm: x[nm] for nm in family.r_names}, lambda_star=x.get("lambda", 0.0), eps_star=eps_star,
        rho_star=rho, p_star=p * c, a=a, delta=d, sigma=s,
        v=np.array([x[f"v{k + 1}"] for k in range(dim)]), w=w, gp_status=sol.status, gp=sol)
    if verify and family.model_at is not None:
        model = family.model_at(res.r_star)
        _reconcile(res, model, family)
        params = CertificateParams.build(res.p_star, res.a, res.delta, res.sigma, res.lambda_star,
                                         res.eps_star, family.n, family.N, family.mode)
        cert = check_certificate(model, params)
        res.certificate = cert
        if not cert.feasible:
            raise SurrogateError("surrogate bounds violated at r*: " + "; ".join(cert.diagnostics))
    return res


def _reconcile(res: DesignResult, model: NetworkModel, family: DesignFamily, rtol: float = 1e-5) -> None:
    """Rebuild the certificate from (r*, p*, lambda*) before re-certification.

    The solver's a, Delta and sigma are accurate to its tolerance only.  When
    they agree with the realized model's exact values to within ``rtol``, they
    are replaced by those values (a by its largest admissible value), and rho
    is lowered as far as the strict tail inequality needs.  Larger
    discrepancies are left alone so that invalid surrogates still fail.
    """
    table = MomentTable(model, family.mode)
    amax = table.a_max(res.p_star, res.lambda_star)
    d, s = table.delta_sigma(res.p_star)
    if not amax > 0:
        return
    if not res.a > 0:
        # deterministic design: any a below a_max certifies
        res.a = 0.5 * amax
    elif res.a <= amax * (1 + rtol) and d <= res.delta * (1 + rtol) and s <= res.sigma * (1 + rtol):
        res.a, res.delta, res.sigma = amax, d, s
    else:
        return
    if res.delta > 0 or res.sigma > 0:
        lhs1 = bernstein.lemma1_lhs(res.delta, res.sigma, res.a, 1.0)
        res.rho_star = min(res.rho_star, (3.0 - 2 * DEFAULT.strict_margin) / lhs1)
    nN = family.n * family.N
    res.rho_star = max(res.rho_star, math.log(nN))
    res.eps_star = min(1.0, nN * math.exp(-res.rho_star))


def validate_surrogates(family: DesignFamily, samples: int = 100, seed: int = 0,
                        tol: float = 1e-10) -> list[str]:
    """Sample r in its box and compare the family's bounds with exact moments."""
    if family.model_at is None:
        raise ValueError("family has no realization template")
    rng = np.random.default_rng(seed)
    out = []
    for s in range(samples):
        r = {}
        for nm in family.r_names:
            lo, hi = family.bounds_of(nm)
            r[nm] = float(math.exp(rng.uniform(math.log(lo), math.log(hi))))
        model = family.model_at(r)
        if family.mode == "a1":
            for (i, j), d in model.blocks.items():
                eta = _as_float(family.eta.get((i, j)), r)
                dev = block_esssup_dev(d)
                if dev > eta + tol * max(1.0, dev):
                    out.append(f"sample {s}: deviation bound fails at ({i + 1},{j + 1}): {dev} > {eta}")
                for tag, table, side in (("phi", family.phi, "normal"), ("psi", family.psi, "transposed")):
                    B = _as_matrix(table.get((i, j), {}), r, family.n)
                    W = block_w(d, side)
                    lam_min = np.linalg.eigvalsh(B - W)[0]
                    if lam_min < -tol * max(1.0, np.abs(W).max()):
                        out.append(f"sample {s}: {tag} bound fails at ({i + 1},{j + 1}) (lambda_min {lam_min:.3e})")
        else:
            from .model import row_var_s

            for i in range(model.N):
                d = model.row_distribution(i)
                eta = _as_float(family.eta.get(i), r)
                dev = block_esssup_dev(d)
                if dev > eta + tol * max(1.0, dev):
                    out.append(f"sample {s}: deviation bound fails at row {i + 1}")
                B = _as_matrix(family.phi.get(i, {}), r, family.dim)
                V = row_var_s(model, i)
                if np.linalg.eigvalsh(B - V)[0] < -tol * max(1.0, np.abs(V).max()):
                    out.append(f"sample {s}: variance bound fails at row {i + 1}")
    return out


def _as_float(f, r) -> float:
    return 0.0 if f is None else Posynomial.of(f)(r)


def _as_matrix(mat, r, size) -> np.ndarray:
    B = np.zeros((size, size))
    for (k, l), f in mat.items():
        B[k, l] = Posynomial.of(f)(r)
    return B
