"""Command-line front end: generate instances, run solves, emit reports.

Subcommands:

  gen     write a shipped preset to a problem file
  solve   run one of the two algorithms, logging per-iteration CSV
  verify  run a solve and audit the full inequality ledger

Exit codes: 0 on success (solve converged / all checks passed), 2 when
the iteration limit was hit without convergence or a check failed, 1 on
any input error.
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
import time
from dataclasses import dataclass

import numpy as np

from . import instances, multiblock, probfile, twoblock, verify
from .blockalg import NotPositiveDefiniteError
from .model import ProblemSpec
from .schedules import ToleranceSchedule
from .twoblock import AdmissibilityError, SolveResult

__all__ = ["RunConfig", "build_parser", "run", "main"]

# Largest step-length the front end accepts (safely inside the open
# admissible interval).
MAX_TAU = 1.6180339

_LOG_COLUMNS = ["k", "primal_res", "dual_x_res", "dual_y_res", "kkt_total",
                "eps_k", "cert_x", "cert_y", "phi_k"]


@dataclass
class RunConfig:
    """Parsed command-line options for one run."""

    command: str
    preset: str | None = None
    input: str | None = None
    out: str | None = None
    algorithm: str = "sgs"
    sigma: float = 1.0
    tau: float = 1.618
    stop_tol: float = 1e-8
    max_iter: int = 10000
    eps: str = "zero"
    prox: str = "auto"
    inexact: str = "exact"
    cross_check: bool = False
    log: str | None = None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sgsadmm",
        description="Multi-block ADMM solver and verification harness.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--preset", help="name of a shipped instance preset")
        p.add_argument("--input", help="path to a problem file")
        p.add_argument("--algorithm", choices=("sgs", "twoblock"), default="sgs")
        p.add_argument("--sigma", type=float, default=1.0)
        p.add_argument("--tau", type=float, default=1.618)
        p.add_argument("--stop-tol", type=float, default=1e-8, dest="stop_tol")
        p.add_argument("--max-iter", type=int, default=10000, dest="max_iter")
        p.add_argument("--eps", default="zero",
                       help='tolerance schedule: "zero" | "geom:e0:r" | "pow:e0:p"')
        p.add_argument("--prox", default="auto",
                       help='proximal terms: "auto" | "zero" | "shift:lam" | "stress"')
        p.add_argument("--inexact", default="exact",
                       help='subproblem mode: "exact" | "tilt:seed"')
        p.add_argument("--cross-check", action="store_true", dest="cross_check")
        p.add_argument("--log", help="output CSV path")

    p_solve = sub.add_parser("solve", help="run a solver")
    add_common(p_solve)
    p_verify = sub.add_parser("verify", help="run a solver and audit the ledger")
    add_common(p_verify)
    p_gen = sub.add_parser("gen", help="write a preset to a problem file")
    p_gen.add_argument("--preset", required=True)
    p_gen.add_argument("--out", required=True)
    return parser


def _parse_inexact(text: str) -> tuple[str, int]:
    if text == "exact":
        return "exact", 0
    if text.startswith("tilt:"):
        return "tilt", int(text.split(":", 1)[1])
    raise ValueError(f'cannot parse inexact mode {text!r}; use "exact" or "tilt:<seed>"')


def _load_spec(cfg: RunConfig) -> ProblemSpec:
    if (cfg.preset is None) == (cfg.input is None):
        raise ValueError("exactly one of --preset / --input is required")
    if cfg.preset is not None:
        return instances.make_preset(cfg.preset)
    return probfile.read_problem(cfg.input)


def _run_solver(spec: ProblemSpec, cfg: RunConfig) -> SolveResult:
    if not 0.0 < cfg.tau < MAX_TAU + 1e-12:
        raise ValueError(f"tau must lie in (0, {MAX_TAU}], got {cfg.tau}")
    schedule = ToleranceSchedule.parse(cfg.eps)
    mode, seed = _parse_inexact(cfg.inexact)
    if cfg.algorithm == "twoblock":
        S, T = twoblock.default_prox_terms(spec, cfg.sigma, cfg.prox)
        run_cfg = twoblock.TwoBlockConfig(
            sigma=cfg.sigma, tau=cfg.tau, S=S, T=T, eps_schedule=schedule,
            stop_tol=cfg.stop_tol, max_iter=cfg.max_iter,
            tilt_seed=seed if mode == "tilt" else None)
        return twoblock.TwoBlockSolver(spec, run_cfg).solve()
    S, T = multiblock.default_prox_terms(spec, cfg.sigma, cfg.prox)
    run_cfg = multiblock.MultiBlockConfig(
        sigma=cfg.sigma, tau=cfg.tau, S_tilde=S, T_tilde=T, eps_schedule=schedule,
        stop_tol=cfg.stop_tol, max_iter=cfg.max_iter,
        inexact=mode, tilt_seed=seed, cross_check=cfg.cross_check)
    return multiblock.MultiBlockSolver(spec, run_cfg).solve()


def _anchor_or_none(spec: ProblemSpec):
    try:
        return instances.oracle_solve(spec, tol=1e-12)
    except (instances.OracleUnsupportedError, NotPositiveDefiniteError):
        return None


def _fmt(value) -> str:
    if value is None:
        return "nan"
    return repr(float(value))


def _write_solve_log(path: str, result: SolveResult, anchor):
    phi = {}
    if anchor is not None:
        ctx = verify.LedgerContext(result, anchor)
        phi = {k: ctx.phi(k) for k in range(1, len(result.records))}
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(_LOG_COLUMNS)
        for rec in result.records:
            writer.writerow([
                rec.k, _fmt(rec.kkt.primal), _fmt(rec.kkt.dual_x), _fmt(rec.kkt.dual_y),
                _fmt(rec.kkt.total), _fmt(rec.eps), _fmt(rec.cert_x), _fmt(rec.cert_y),
                _fmt(phi.get(rec.k)),
            ])


def run(cfg: RunConfig) -> int:
    """Execute one parsed command; returns the process exit code."""
    try:
        if cfg.command == "gen":
            spec = instances.make_preset(cfg.preset)
            probfile.write_problem(spec, cfg.out)
            print(f"wrote preset {cfg.preset!r} to {cfg.out}")
            return 0
        spec = _load_spec(cfg)
    except (ValueError, KeyError, OSError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 1

    try:
        start = time.perf_counter()
        result = _run_solver(spec, cfg)
        elapsed = time.perf_counter() - start
    except (ValueError, AdmissibilityError, NotPositiveDefiniteError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 1

    final = result.final
    if cfg.command == "solve":
        log_path = cfg.log or "solve_log.csv"
        _write_solve_log(log_path, result, _anchor_or_none(spec))
        print(f"{result.algorithm}: iterations={result.iterations} "
              f"kkt_total={final.kkt.total:.6e} converged={result.converged} "
              f"wall_time={elapsed:.3f}s log={log_path}")
        return 0 if result.converged else 2

    # verify: run the full ledger against an oracle anchor.
    anchor = _anchor_or_none(spec)
    if anchor is None:
        print("input error: no ground-truth anchor available for this problem",
              file=sys.stderr)
        return 1
    rows = verify.run_all_checks(result, anchor)
    rows.append(verify.check_gradient_bound(spec.f, seed=11))
    rows.append(verify.check_gradient_bound(spec.g, seed=12))
    log_path = cfg.log or "verify_report.csv"
    verify.write_report(log_path, rows)
    failed = [r for r in rows if not r.passed]
    print(f"{result.algorithm}: iterations={result.iterations} "
          f"kkt_total={final.kkt.total:.6e} converged={result.converged} "
          f"checks={len(rows)} failed={len(failed)} wall_time={elapsed:.3f}s "
          f"report={log_path}")
    for row in failed[:10]:
        print(f"  FAIL {row.check} k={row.k} lhs={row.lhs!r} rhs={row.rhs!r}")
    return 0 if result.converged and not failed else 2


def main(argv=None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    cfg = RunConfig(**vars(ns))
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
