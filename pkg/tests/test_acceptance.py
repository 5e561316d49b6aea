"""Acceptance suite: one PASS/FAIL line per criterion, printed even under capture."""
import math
import time

import numpy as np
import pytest
from scipy.stats import spearmanr

from posnet import sis
from posnet.bernstein import TailParams, eps_of_rho, kappa, lemma1_lhs, lemma1_lmi, lemma1_scalar
from posnet.certify import CertificateParams, MomentTable, check_certificate, min_unreliability, search_certificate
from posnet.gpsolve import gp_solve
from posnet.linalg import perron_value, spectral_norm, sym_eig_max
from posnet.montecarlo import brute_force_prob, estimate_instability_curve

from conftest import random_positive_model, rare_spike_model
from gp_cases import analytic_cases, grid_search, random_gp

pytestmark = pytest.mark.slow

FIG1_R = [0.1, 0.2, 0.3, 0.4]
FIG1_LAMBDA = [round(x, 10) for x in np.linspace(0.1, 1.0, 10)]


@pytest.fixture
def report(capsys):
    def emit(k: int, ok: bool, detail: str, elapsed: float, limit: float | None = None):
        in_time = limit is None or elapsed < limit
        verdict = "PASS" if ok and in_time else "FAIL"
        budget = f" (limit {limit:.0f} s)" if limit is not None else ""
        with capsys.disabled():
            print(f"\n[{verdict}] criterion {k}: {detail}; {elapsed:.1f} s{budget}")
        assert ok, detail
        assert in_time, f"criterion {k} took {elapsed:.1f} s, limit {limit} s"
    return emit


# -- 1 --------------------------------------------------------------------------

def test_c01_tail_forms_agree(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(101)
    total, band, disagree = 20000, 0, 0
    for _ in range(total):
        delta = 10 ** rng.uniform(-3, 3) if rng.random() > 0.1 else 0.0
        sigma = 10 ** rng.uniform(-3, 3) if rng.random() > 0.1 or delta == 0 else 0.0
        rho = 10 ** rng.uniform(-2, 2)
        n, N = int(rng.integers(1, 4)), int(rng.integers(1, 300))
        # a near the boundary 2 rho delta / a + 6 rho sigma^2 / a^2 = 3
        b, c = 2 * rho * delta, 6 * rho * sigma * sigma
        a_star = (b + math.sqrt(b * b + 12 * c)) / 6
        a = a_star * math.exp(rng.normal(0.0, 0.5))
        lhs = lemma1_lhs(delta, sigma, a, rho)
        if abs(lhs - 3.0) <= 1e-9 * 3.0:
            band += 1
            continue
        tail = kappa(TailParams(delta, sigma * sigma, n * N), a) < eps_of_rho(rho, n, N)
        if not (tail == lemma1_scalar(delta, sigma, a, rho) == lemma1_lmi(delta, sigma, a, rho)):
            disagree += 1
    frac = band / total
    report(1, disagree == 0 and frac < 1e-3,
           f"{total} tuples, {disagree} disagreements, margin band {100 * frac:.4f}%",
           time.perf_counter() - t0, 10)


# -- 2 --------------------------------------------------------------------------

def test_c02_soundness_on_enumerable_models(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(202)
    models, certs, nontrivial, violations = 0, 0, 0, []
    # half from the generic generator, half with rare unstable realizations
    makers = [lambda: random_positive_model(rng, N=int(rng.integers(2, 5)), max_support=1024),
              lambda: rare_spike_model(rng)]
    for k in range(120):
        m = makers[k % 2]()
        if m.joint_support_size() > 1024:
            continue
        models += 1
        lam = float(rng.uniform(0.0, 0.5))
        res = min_unreliability(m, lam, bisect=False)
        found = [res.witness] if res.certifiable and res.witness.eps < 1 else []
        s = search_certificate(m, lam, 0.5)
        if s.feasible:
            found.append(s.witness)
        if not found:
            continue
        exact = brute_force_prob(m, lam)
        for w in found:
            certs += 1
            nontrivial += exact > 0
            if exact > w.eps:
                violations.append((models, lam, w.eps, exact))
    report(2, not violations and models >= 50 and certs > 0,
           f"{models} models, {certs} certificates ({nontrivial} facing a positive failure probability), "
           f"{len(violations)} violations", time.perf_counter() - t0, 120)


# -- 3 and 4 share the eps* sweep ----------------------------------------------------

@pytest.fixture(scope="module")
def sis_graph():
    A = sis.erdos_renyi(200, 0.05, 0)
    return A, sis.calibrated_params(A, edge_prob=0.05)


@pytest.fixture(scope="module")
def fig1(sis_graph):
    A, P = sis_graph
    t0 = time.perf_counter()
    table = sis.fig1_sweep(A, P, FIG1_LAMBDA, FIG1_R)
    return table, time.perf_counter() - t0


def test_c03_soundness_at_scale(report, sis_graph, fig1):
    A, P = sis_graph
    table, sweep_time = fig1
    t0 = time.perf_counter()
    checked, bad = 0, []
    for r in FIG1_R:
        pts = [(lam, e) for rr, lam, e in table.rows if rr == r and e <= 0.5]
        if not pts:
            continue
        model = sis.build_sis_model(A, sis.SisParams(N=200, edge_prob=0.05, beta_hi=P.beta_hi,
                                                     beta_lo=P.beta_lo, r=r))
        reps = estimate_instability_curve(model, [lam for lam, _ in pts], 10_000, seed=int(100 * r))
        for (lam, e), rep in zip(pts, reps):
            checked += 1
            if rep.ci_lower > e:
                bad.append((r, lam, e, rep.ci_lower))
    elapsed = sweep_time + time.perf_counter() - t0
    report(3, checked > 0 and not bad,
           f"{checked} certified points with eps* <= 0.5, {len(bad)} with MC lower bound above eps*",
           elapsed, 600)


def test_c04_fig1_trends(report, fig1):
    table, sweep_time = fig1
    rs, lams, E = table.grid()
    mono_lam = bool(np.all(np.diff(E, axis=1) >= 0))
    mono_r = bool(np.all(np.diff(E, axis=0) >= 0))
    best_r01 = float(E[list(rs).index(0.1)].min())
    report(4, mono_lam and mono_r and best_r01 < 0.5,
           f"monotone in lambda: {mono_lam}, in r: {mono_r}, min eps* at r=0.1: {best_r01:.3g}",
           sweep_time, 900)


# -- 5 --------------------------------------------------------------------------

def _fig2_check(N, p, cost_bound):
    A = sis.erdos_renyi(N, p, 0)
    P = sis.calibrated_params(A, edge_prob=p)
    tab = sis.fig2_run(A, P, cost_bound, eps=0.2)
    fam = sis.sis_design_family(A, P, cost_bound, 0.2)
    model = fam.model_at(tab.result.r_star)
    w = tab.result.certificate.witness.with_eps(0.2, 1, N)
    recert = check_certificate(model, w).feasible
    rho_s = float(spearmanr(tab.in_degree, tab.r_star).statistic)
    return rho_s, recert, tab.result.lambda_star


def test_c05_fig2_trend(report):
    t0 = time.perf_counter()
    rho_s, recert, lam = _fig2_check(200, 0.05, 2000.0)
    t_main = time.perf_counter() - t0
    t1 = time.perf_counter()
    rho_f, recert_f, lam_f = _fig2_check(50, 0.1, 500.0)
    t_fall = time.perf_counter() - t1
    ok = rho_s <= -0.5 and recert and rho_f <= -0.5 and recert_f and t_fall < 180
    report(5, ok,
           f"N=200: spearman {rho_s:.3f}, re-certified at eps 0.2: {recert}, lambda* {lam:.4f}; "
           f"fallback N=50 (p=0.1): spearman {rho_f:.3f}, re-certified: {recert_f}, {t_fall:.1f} s",
           t_main, 1200)


# -- 6 --------------------------------------------------------------------------

def test_c06_calibration(report, sis_graph):
    t0 = time.perf_counter()
    A, P = sis_graph
    val = perron_value(P.beta_hi * A - np.eye(200))
    report(6, abs(val - 0.1) <= 1e-6, f"perron(beta_hi A - I) = {val:.12f}", time.perf_counter() - t0)


# -- 7 --------------------------------------------------------------------------

def test_c07_scale_invariance(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(707)
    done, flips, verdicts = 0, 0, {True: 0, False: 0}
    while done < 1000:
        m = random_positive_model(rng, max_support=256)
        t = MomentTable(m)
        p = np.exp(rng.uniform(-2, 2, m.N))
        lam = float(rng.uniform(0, 0.5))
        amax = t.a_max(p, lam)
        if amax <= 0:
            continue
        d, s = t.delta_sigma(p)
        a = amax * rng.uniform(0.2, 1.3)
        w = CertificateParams.build(p, a, d * rng.uniform(0.8, 2), s * rng.uniform(0.8, 2), lam,
                                    float(10 ** rng.uniform(-4, 0)), 1, m.N)
        c = float(10 ** rng.uniform(-3, 3))
        v = check_certificate(m, w, t).feasible
        flips += v != check_certificate(m, w.scaled(c), t).feasible
        verdicts[v] += 1
        done += 1
    report(7, flips == 0,
           f"{done} certificates ({verdicts[True]} feasible, {verdicts[False]} not), {flips} verdict changes",
           time.perf_counter() - t0)


# -- 8 --------------------------------------------------------------------------

def test_c08_gp_solver(report):
    t0 = time.perf_counter()
    worst = 0.0
    cases = analytic_cases()
    for _, prog, opt in cases:
        sol = gp_solve(prog)
        err = abs(sol.objective_value - opt) / abs(opt) if sol.status == "optimal" else math.inf
        worst = max(worst, err)
    rng_seed, matched, tried, worst_rand = 0, 0, 0, 0.0
    while tried < 50:
        prog = random_gp(np.random.default_rng(10_000 + rng_seed))
        rng_seed += 1
        ref = grid_search(prog)
        if math.isinf(ref):
            continue
        tried += 1
        sol = gp_solve(prog)
        err = abs(sol.objective_value / ref - 1) if sol.status == "optimal" else math.inf
        worst_rand = max(worst_rand, err)
        matched += err <= 1e-3
    report(8, len(cases) >= 20 and worst <= 1e-6 and matched == tried,
           f"{len(cases)} analytic GPs, worst rel err {worst:.2e}; {matched}/{tried} random GPs "
           f"within 1e-3 of grid search (worst {worst_rand:.2e})", time.perf_counter() - t0)


# -- 9 --------------------------------------------------------------------------

def test_c09_eps_monotonicity(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(909)
    models, exceptions = 0, 0
    while models < 20:
        m = random_positive_model(rng)
        lam = float(rng.uniform(0, 0.3))
        res = min_unreliability(m, lam, bisect=False)
        if not res.certifiable or res.witness.eps >= 1:
            continue
        models += 1
        w = res.witness
        assert check_certificate(m, w).feasible
        for k in (2, 10):
            exceptions += not check_certificate(m, w.with_eps(min(1.0, k * w.eps), 1, m.N)).feasible
    report(9, exceptions == 0, f"{models} models, {exceptions} exceptions at 2 eps and 10 eps",
           time.perf_counter() - t0)


# -- 10 -------------------------------------------------------------------------

def jacobi_eigenvalues(S, sweeps=60):
    """Cyclic Jacobi rotations; independent of LAPACK's symmetric drivers."""
    A = np.array(S, dtype=float)
    n = A.shape[0]
    for _ in range(sweeps):
        off = math.sqrt(max(0.0, float((A * A).sum() - (np.diag(A) ** 2).sum())))
        if off <= 1e-15 * max(1.0, float(np.abs(A).max())):
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if abs(A[p, q]) <= 1e-18 * (abs(A[p, p]) + abs(A[q, q])):
                    A[p, q] = A[q, p] = 0.0
                    continue
                theta = (A[q, q] - A[p, p]) / (2 * A[p, q])
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1))
                c = 1 / math.sqrt(t * t + 1)
                s = t * c
                Ap, Aq = A[:, p].copy(), A[:, q].copy()
                A[:, p], A[:, q] = c * Ap - s * Aq, s * Ap + c * Aq
                Ap, Aq = A[p, :].copy(), A[q, :].copy()
                A[p, :], A[q, :] = c * Ap - s * Aq, s * Ap + c * Aq
    return np.diag(A)


def test_c10_linalg_oracles(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(1010)
    worst = {"sym_eig_max": 0.0, "spectral_norm": 0.0, "perron_value": 0.0}
    for k in range(1000):
        n = int(rng.integers(1, 21))
        M = rng.normal(size=(n, n)) * 10 ** rng.uniform(-1, 1)
        S = 0.5 * (M + M.T)
        scale = max(1.0, float(np.abs(S).max()) * n)
        worst["sym_eig_max"] = max(worst["sym_eig_max"], abs(sym_eig_max(S) - jacobi_eigenvalues(S).max()) / scale)
        G = rng.normal(size=(n, int(rng.integers(1, 21))))
        ref = math.sqrt(max(0.0, jacobi_eigenvalues(G @ G.T).max()))
        worst["spectral_norm"] = max(worst["spectral_norm"], abs(spectral_norm(G) - ref) / max(1.0, ref))
        # Metzler: nonnegative off-diagonal with random sparsity, any diagonal
        B = rng.uniform(0, 1, (n, n)) * (rng.random((n, n)) < rng.uniform(0.2, 1.0))
        np.fill_diagonal(B, rng.normal(0, 1, n))
        ref = float(np.linalg.eigvals(B).real.max())
        worst["perron_value"] = max(worst["perron_value"], abs(perron_value(B) - ref) / max(1.0, abs(ref)))
    ok = all(v <= 1e-8 for v in worst.values())
    report(10, ok, "1000 matrices, worst rel errors " + ", ".join(f"{k} {v:.1e}" for k, v in worst.items()),
           time.perf_counter() - t0)
