"""Command-line interface.

Exit codes: 0 feasible (or success), 2 infeasible, 1 error.  Errors are
reported as one line on standard error: ``error: <kind>: <message>``.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import certify, design, montecarlo, sis
from .model import SupportOverflowError, load_model

EXIT_OK, EXIT_ERROR, EXIT_INFEASIBLE = 0, 1, 2


class UsageError(ValueError):
    pass


def _grid(text: str) -> list[float]:
    """'0.1,0.2,0.5' or 'start:stop:count' (inclusive linspace)."""
    text = text.strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise UsageError(f"bad grid {text!r}; use start:stop:count")
        a, b, k = float(parts[0]), float(parts[1]), int(parts[2])
        return [float(x) for x in np.linspace(a, b, k)]
    return [float(x) for x in text.split(",") if x]


def _fig1_grids(tokens: list[str]) -> tuple[list[float], list[float]]:
    grids = {}
    for tok in tokens:
        key, sep, val = tok.partition("=")
        if not sep or key not in ("r", "lambda"):
            raise UsageError(f"--fig1 expects r=... lambda=..., got {tok!r}")
        grids[key] = _grid(val)
    if set(grids) != {"r", "lambda"}:
        raise UsageError("--fig1 needs both r=... and lambda=...")
    return grids["r"], grids["lambda"]


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _dump(doc) -> str:
    return json.dumps(doc, indent=1, sort_keys=True) + "\n"


def _require_file(path: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"no such file: {path}")
    return p


def cmd_analyze(args) -> int:
    model = load_model(_require_file(args.model))
    mode = args.mode or model.mode
    opts = certify.SearchOptions()
    if args.min_eps:
        res = certify.min_unreliability(model, args.lam, mode, opts)
        doc = res.to_json()
        doc.update({"lambda": args.lam, "mode": mode})
        if res.witness is not None:
            cert = certify.check_certificate(model, res.witness)
            doc["certificate"] = cert.to_json()
        _emit(_dump(doc), args.out)
        return EXIT_OK if res.certifiable else EXIT_INFEASIBLE
    res = certify.search_certificate(model, args.lam, args.eps, mode, opts)
    doc = res.to_json()
    doc.update({"lambda": args.lam, "eps": args.eps, "mode": mode})
    _emit(_dump(doc), args.out)
    return EXIT_OK if res.feasible else EXIT_INFEASIBLE


def cmd_design(args) -> int:
    fam = design.load_family(_require_file(args.family))
    try:
        res = design.solve_design(fam, eps=args.fixed_eps, lam=args.lam)
    except design.SurrogateError:
        raise
    except design.DesignError as exc:
        if "no design meets" in str(exc):
            print(f"infeasible: {exc}", file=sys.stderr)
            return EXIT_INFEASIBLE
        raise
    _emit(_dump(res.to_json()), args.out)
    if args.csv:
        lines = ["name,r_star"] + [f"{k},{v:.12g}" for k, v in res.r_star.items()]
        Path(args.csv).write_text("\n".join(lines) + "\n")
    return EXIT_OK


def cmd_validate(args) -> int:
    model = load_model(_require_file(args.model))
    rep = montecarlo.estimate_instability_prob(model, args.lam, args.samples, args.seed,
                                               args.rate_convention, args.threads)
    doc = rep.to_json()
    if args.exact:
        try:
            doc["exact"] = montecarlo.brute_force_prob(model, args.lam, args.rate_convention)
        except SupportOverflowError as exc:
            doc["exact"] = None
            doc["exact_error"] = str(exc)
    _emit(_dump(doc), args.out)
    if args.csv:
        Path(args.csv).write_text(rep.csv_row(header=True))
    return EXIT_OK


def cmd_demo_sis(args) -> int:
    if bool(args.fig1) == bool(args.fig2):
        raise UsageError("choose exactly one of --fig1 or --fig2")
    A = sis.erdos_renyi(args.nodes, args.edge_prob, args.seed)
    params = sis.calibrated_params(A, seed=args.seed, edge_prob=args.edge_prob)
    if args.fig1:
        rs, lams = _fig1_grids(args.fig1)
        table = sis.fig1_sweep(A, params, lams, rs, threads=args.threads)
        _emit(table.to_csv(), args.out)
        return EXIT_OK
    if args.cost_bound is None:
        raise UsageError("--fig2 needs --cost-bound")
    try:
        table = sis.fig2_run(A, params, args.cost_bound)
    except design.SurrogateError:
        raise
    except design.DesignError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    _emit(table.to_csv(), args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="posnet", description="Stability certificates for random positive networks.")
    ap.add_argument("--threads", type=int, default=1, help="worker threads (results do not depend on it)")
    sub = ap.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", help="certify stability with a decay rate")
    a.add_argument("--model", required=True)
    a.add_argument("--lambda", dest="lam", type=float, required=True)
    g = a.add_mutually_exclusive_group(required=True)
    g.add_argument("--eps", type=float)
    g.add_argument("--min-eps", action="store_true")
    a.add_argument("--mode", choices=["a1", "a2"])
    a.add_argument("--out")
    a.set_defaults(func=cmd_analyze)

    d = sub.add_parser("design", help="solve a distribution-design program")
    d.add_argument("--family", required=True)
    d.add_argument("--fixed-eps", type=float)
    d.add_argument("--lambda", dest="lam", type=float, help="pin the decay rate")
    d.add_argument("--out")
    d.add_argument("--csv", help="write r* as CSV")
    d.set_defaults(func=cmd_design)

    v = sub.add_parser("validate", help="Monte Carlo failure probability")
    v.add_argument("--model", required=True)
    v.add_argument("--lambda", dest="lam", type=float, required=True)
    v.add_argument("--samples", type=int, default=10000)
    v.add_argument("--seed", type=int, required=True)
    v.add_argument("--exact", action="store_true", help="also enumerate the joint support")
    v.add_argument("--rate-convention", choices=montecarlo.CONVENTIONS, default="lyapunov")
    v.add_argument("--out")
    v.add_argument("--csv")
    v.set_defaults(func=cmd_validate)

    s = sub.add_parser("demo-sis", help="SIS case study tables")
    s.add_argument("--nodes", type=int, default=200)
    s.add_argument("--edge-prob", type=float, default=0.05)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--fig1", nargs=2, metavar=("r=LIST", "lambda=GRID"))
    s.add_argument("--fig2", action="store_true")
    s.add_argument("--cost-bound", type=float)
    s.add_argument("--out")
    s.set_defaults(func=cmd_demo_sis)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_ERROR
    if args.threads < 1:
        print("error: usage: --threads must be at least 1", file=sys.stderr)
        return EXIT_ERROR
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: usage: {exc}", file=sys.stderr)
    except (ValueError, KeyError, TypeError, json.JSONDecodeError, OSError, ArithmeticError,
            RuntimeError) as exc:
        msg = " ".join(str(exc).split())
        print(f"error: {type(exc).__name__}: {msg}", file=sys.stderr)
    return EXIT_ERROR


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
