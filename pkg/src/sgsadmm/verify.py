"""Numerical verification of the convergence theory along solver traces.

Every check evaluates both sides of an inequality that holds exactly in
real arithmetic, with an additive slack of 1e-8 times
(1 + max(|lhs|, |rhs|)) covering floating-point accumulation only.
Shadow iterates (the exact minimizers paired with each inexact step)
are recomputed post hoc from the trace so the solver hot loop stays
clean.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .model import CompositeQuadraticSolver, SmoothConvexFunction, kkt_residual
from .blockalg import operator_inv_sqrt, operator_sqrt, spectral_norm
from .twoblock import SolveResult

__all__ = [
    "CheckRow",
    "ShadowIterate",
    "VerificationRecord",
    "LedgerContext",
    "check_key_inequality",
    "check_residual_inequality",
    "check_error_bounds",
    "check_fejer",
    "check_gradient_bound",
    "build_ledger",
    "run_all_checks",
    "write_report",
]

SLACK_RTOL = 1e-8
MONOTONE_SLACK = 1e-10


def _slack(lhs: float, rhs: float, rtol: float = SLACK_RTOL) -> float:
    return rtol * (1.0 + max(abs(lhs), abs(rhs)))


@dataclass(frozen=True)
class CheckRow:
    """One verified inequality instance."""

    check: str
    k: int
    lhs: float
    rhs: float
    slack: float
    passed: bool


@dataclass(frozen=True)
class ShadowIterate:
    """Exact minimizers paired with the inexact iterate at one step."""

    x_bar: np.ndarray
    y_bar: np.ndarray
    r_bar: np.ndarray
    z_bar: np.ndarray


@dataclass(frozen=True)
class VerificationRecord:
    """Ledger entry at iteration k for a fixed reference solution."""

    k: int
    phi: float
    xi_norm: float
    xi_bar_norm: float
    key_lhs: float
    key_rhs: float
    rr_lhs: float
    rr_rhs: float
    varrho: float
    fejer_bound: float


class LedgerContext:
    """Precomputed weights and shadow solvers for one trace and anchor.

    The anchor must satisfy the optimality system to anchor_tol; pass
    validate_anchor=False to evaluate the ledger at a non-certified
    point such as the trajectory's own limit.
    """

    def __init__(self, result: SolveResult, anchor, anchor_tol: float = 1e-10,
                 validate_anchor: bool = True):
        self.result = result
        spec = result.spec
        self.spec = spec
        x_bar, y_bar, z_bar = (np.asarray(v, dtype=float).reshape(-1) for v in anchor)
        if validate_anchor:
            res = kkt_residual(spec, x_bar, y_bar, z_bar).total
            if res > anchor_tol:
                raise ValueError(
                    f"anchor is not a verified solution: residual {res:.3e} > {anchor_tol:.1e}")
        self.x_bar, self.y_bar, self.z_bar = x_bar, y_bar, z_bar
        con = result.constants
        self.con = con
        self.sigma, self.tau = result.sigma, result.tau
        self.SfS = spec.f.sigma_hat.matrix + result.S.matrix
        self.SgT = spec.g.sigma_hat.matrix + result.T.matrix
        xs, ys = spec.x_structure, spec.y_structure
        from .blockalg import BlockOperator  # local to avoid a cycle at import time
        self._sqrt_SfS = operator_sqrt(
            BlockOperator(xs, xs, self.SfS, self_adjoint=True)).matrix
        self._sqrt_SgT = operator_sqrt(
            BlockOperator(ys, ys, self.SgT, self_adjoint=True)).matrix
        self._sqrt_N = operator_sqrt(con.N).matrix
        self._M_inv_sqrt = operator_inv_sqrt(con.M).matrix
        self._N_inv_sqrt = operator_inv_sqrt(con.N).matrix
        self._G_inv_sqrt = operator_inv_sqrt(con.G).matrix
        self._A = spec.A.matrix
        self._B = spec.B.matrix
        # sigma * ||N^{-1/2} B A^T M^{-1/2}||, the x-to-y error transfer.
        self.omega = self.sigma * spectral_norm(
            self._N_inv_sqrt @ self._B @ self._A.T @ self._M_inv_sqrt)
        self.varrho = math.sqrt(5.0 * (1.0 + (1.0 + self.omega) ** 2))
        self.gn_norm = spectral_norm(self._G_inv_sqrt @ self._sqrt_N)
        self._xsolver = CompositeQuadraticSolver(xs, con.M, spec.p1)
        self._ysolver = CompositeQuadraticSolver(ys, con.N, spec.q1)
        self._Cx = spec.f.Q.matrix - spec.f.sigma_hat.matrix - result.S.matrix
        self._Cy = spec.g.Q.matrix - spec.g.sigma_hat.matrix - result.T.matrix
        self._shadow_cache: dict[int, ShadowIterate] = {}
        self._xi_cache: dict[int, float] = {}

    # -- per-iteration quantities ------------------------------------

    def phi(self, k: int) -> float:
        """Merit value at iteration k >= 1 for the fixed anchor."""
        rec = self.result.records[k]
        prev = self.result.records[k - 1]
        sigma, tau = self.sigma, self.tau
        con = self.con
        dz = rec.z - self.z_bar
        dx = rec.x - self.x_bar
        dy = rec.y - self.y_bar
        cross = self._A.T @ self.x_bar + self._B.T @ rec.y - self.spec.c
        dly = prev.y - rec.y
        return float(
            dz @ dz / (tau * sigma)
            + dx @ (self.SfS @ dx)
            + dy @ (self.SgT @ dy)
            + sigma * (cross @ cross)
            + con.alpha_hat * sigma * (rec.r @ rec.r)
            + con.alpha * (dly @ (self.SgT @ dly)))

    def xi(self, k: int) -> np.ndarray:
        """Weighted deviation vector whose squared norm equals phi(k)."""
        rec = self.result.records[k]
        prev = self.result.records[k - 1]
        sigma, tau = self.sigma, self.tau
        con = self.con
        return np.concatenate([
            (rec.z - self.z_bar) / math.sqrt(tau * sigma),
            self._sqrt_SfS @ (rec.x - self.x_bar),
            self._sqrt_N @ (rec.y - self.y_bar),
            math.sqrt(con.alpha_hat * sigma) * rec.r,
            math.sqrt(con.alpha) * (self._sqrt_SgT @ (prev.y - rec.y)),
        ])

    def xi_norm(self, k: int) -> float:
        val = self._xi_cache.get(k)
        if val is None:
            val = float(np.linalg.norm(self.xi(k)))
            self._xi_cache[k] = val
        return val

    def shadow(self, k: int) -> ShadowIterate:
        """Exact one-step map applied to state k-1 (so 1 <= k <= K)."""
        cached = self._shadow_cache.get(k)
        if cached is not None:
            return cached
        prev = self.result.records[k - 1]
        spec = self.spec
        sigma, tau = self.sigma, self.tau
        w_x = (self._Cx @ prev.x + spec.f.lin
               + self._A @ (prev.z + sigma * (self._B.T @ prev.y - spec.c)))
        x_bar = self._xsolver.minimize(w_x)
        w_y = (self._Cy @ prev.y + spec.g.lin
               + self._B @ (prev.z + sigma * (self._A.T @ x_bar - spec.c)))
        y_bar = self._ysolver.minimize(w_y)
        r_bar = self._A.T @ x_bar + self._B.T @ y_bar - spec.c
        out = ShadowIterate(x_bar=x_bar, y_bar=y_bar, r_bar=r_bar,
                            z_bar=prev.z + tau * sigma * r_bar)
        self._shadow_cache[k] = out
        return out

    def xi_bar_norm(self, k: int) -> float:
        sh = self.shadow(k)
        prev = self.result.records[k - 1]
        sigma, tau = self.sigma, self.tau
        con = self.con
        vec = np.concatenate([
            (sh.z_bar - self.z_bar) / math.sqrt(tau * sigma),
            self._sqrt_SfS @ (sh.x_bar - self.x_bar),
            self._sqrt_N @ (sh.y_bar - self.y_bar),
            math.sqrt(con.alpha_hat * sigma) * sh.r_bar,
            math.sqrt(con.alpha) * (self._sqrt_SgT @ (prev.y - sh.y_bar)),
        ])
        return float(np.linalg.norm(vec))

    def weighted_norm_sq(self, mat: np.ndarray, v: np.ndarray) -> float:
        return float(v @ (mat @ v))


# -- checks ------------------------------------------------------------


def check_key_inequality(result: SolveResult, w_bar, context: LedgerContext | None = None
                         ) -> list[CheckRow]:
    """Per-iteration merit decrease bound against the anchor."""
    ctx = context or LedgerContext(result, w_bar)
    rows = []
    recs = result.records
    con = result.constants
    for k in range(1, len(recs) - 1):
        rec, nxt = recs[k], recs[k + 1]
        dy_step = rec.y - nxt.y
        dx_step = rec.x - nxt.x
        lhs = (2.0 * con.alpha * float((rec.d_y - recs[k - 1].d_y) @ dy_step)
               - 2.0 * float(rec.d_x @ (nxt.x - ctx.x_bar))
               - 2.0 * float(rec.d_y @ (nxt.y - ctx.y_bar))
               + ctx.weighted_norm_sq(con.F.matrix, dx_step)
               + ctx.weighted_norm_sq(con.G.matrix, dy_step)
               + con.beta * result.sigma * float(nxt.r @ nxt.r))
        rhs = ctx.phi(k) - ctx.phi(k + 1)
        s = _slack(lhs, rhs)
        rows.append(CheckRow("key_inequality", k, lhs, rhs, s, lhs <= rhs + s))
    return rows


def check_residual_inequality(result: SolveResult) -> list[CheckRow]:
    """Per-iteration lower bound on the dual-residual cross terms."""
    rows = []
    recs = result.records
    con = result.constants
    sigma, tau = result.sigma, result.tau
    A = result.spec.A.matrix
    B = result.spec.B.matrix
    SgT = result.spec.g.sigma_hat.matrix + result.T.matrix
    rho = min(tau, 1.0 + tau - tau * tau)
    for k in range(1, len(recs) - 1):
        prev, rec, nxt = recs[k - 1], recs[k], recs[k + 1]
        dy_step = rec.y - nxt.y
        dx_step = rec.x - nxt.x
        mixed = A.T @ nxt.x + B.T @ rec.y - result.spec.c
        lhs = ((1.0 - tau) * sigma * float(nxt.r @ nxt.r)
               + sigma * float(mixed @ mixed)
               + 2.0 * con.alpha * float((prev.d_y - rec.d_y) @ dy_step))
        adx = A.T @ dx_step
        bdy = B.T @ dy_step
        dly = prev.y - rec.y
        rhs = (con.alpha_hat * sigma * (float(nxt.r @ nxt.r) - float(rec.r @ rec.r))
               + con.beta * sigma * float(nxt.r @ nxt.r)
               + ((1.0 - con.alpha) * sigma / 2.0) * float(adx @ adx)
               - con.alpha * float(dly @ (SgT @ dly))
               + con.alpha * float(dy_step @ (SgT @ dy_step))
               + rho * con.alpha * sigma * float(bdy @ bdy))
        s = _slack(lhs, rhs)
        rows.append(CheckRow("residual_inequality", k, lhs, rhs, s, lhs >= rhs - s))
    return rows


def check_error_bounds(result: SolveResult, context: LedgerContext | None = None
                       ) -> list[CheckRow]:
    """Distance of each iterate to its shadow, in the subproblem metrics."""
    ctx = context or LedgerContext(result, _trivial_anchor(result), validate_anchor=False)
    rows = []
    recs = result.records
    M = result.constants.M.matrix
    N = result.constants.N.matrix
    for k in range(len(recs) - 1):
        sh = ctx.shadow(k + 1)
        nxt = recs[k + 1]
        eps = recs[k].eps
        dx = nxt.x - sh.x_bar
        lhs_x = math.sqrt(max(float(dx @ (M @ dx)), 0.0))
        s = _slack(lhs_x, eps)
        rows.append(CheckRow("error_bound_x", k, lhs_x, eps, s, lhs_x <= eps + s))
        dy = nxt.y - sh.y_bar
        lhs_y = math.sqrt(max(float(dy @ (N @ dy)), 0.0))
        rhs_y = (1.0 + ctx.omega) * eps
        s = _slack(lhs_y, rhs_y)
        rows.append(CheckRow("error_bound_y", k, lhs_y, rhs_y, s, lhs_y <= rhs_y + s))
    return rows


def check_fejer(result: SolveResult, w_bar, context: LedgerContext | None = None
                ) -> list[CheckRow]:
    """Boundedness of the deviation sequence under the summable budget.

    Emits the cumulative bound at every iteration, the per-step bound,
    the remaining-budget tail bound, and (for exact runs) monotonicity.
    """
    ctx = context or LedgerContext(result, w_bar)
    recs = result.records
    K = len(recs) - 1
    rows: list[CheckRow] = []
    if K < 1:
        return rows
    total = result.schedule.total()
    coef = ctx.varrho + ctx.gn_norm
    xi = [ctx.xi_norm(k) for k in range(1, K + 1)]  # xi[j] is iteration j+1
    bound = xi[0] + coef * total
    for k in range(1, K + 1):
        lhs = xi[k - 1]
        s = _slack(lhs, bound)
        rows.append(CheckRow("xi_cumulative", k, lhs, bound, s, lhs <= bound + s))
    for k in range(1, K):
        lhs = xi[k]
        rhs = xi[k - 1] + ctx.varrho * recs[k].eps + ctx.gn_norm * recs[k - 1].eps
        s = _slack(lhs, rhs)
        rows.append(CheckRow("xi_step", k, lhs, rhs, s, lhs <= rhs + s))
    run_max = np.maximum.accumulate(np.array(xi)[::-1])[::-1]
    for k in range(1, K):
        lhs = float(run_max[k])  # max over iterations > k
        rhs = xi[k - 1] + coef * _schedule_tail(result.schedule, k - 1)
        s = _slack(lhs, rhs)
        rows.append(CheckRow("xi_tail", k, lhs, rhs, s, lhs <= rhs + s))
    if total == 0.0:
        for k in range(1, K):
            lhs, rhs = xi[k], xi[k - 1]
            rows.append(CheckRow("xi_monotone", k, lhs, rhs, MONOTONE_SLACK,
                                 lhs <= rhs + MONOTONE_SLACK))
    return rows


def _schedule_tail(schedule, k: int) -> float:
    """Sum of eps_j for j >= k."""
    if k <= 0:
        return schedule.total()
    if schedule.kind == "geometric":
        return schedule.eps0 * schedule.ratio ** k / (1.0 - schedule.ratio)
    head = sum(schedule(j) for j in range(k))
    return max(schedule.total() - head, 0.0)


def check_gradient_bound(fn: SmoothConvexFunction, trials: int = 10000,
                         seed: int = 0) -> CheckRow:
    """Curvature lower bound on gradient cross products, worst case reported.

    For random (u, u', v) the inner product of the gradient difference
    at u, u' with v - u' is bounded below by minus a quarter of the
    squared upper-curvature norm of v - u.
    """
    rng = np.random.default_rng(seed)
    dim = fn.structure.total_dim
    Q = fn.Q.matrix
    Sh = fn.sigma_hat.matrix
    U = rng.standard_normal((trials, dim)) * 2.0
    Up = rng.standard_normal((trials, dim)) * 2.0
    V = rng.standard_normal((trials, dim)) * 2.0
    lhs = np.einsum("ij,ij->i", (U - Up) @ Q, V - Up)
    W = V - U
    rhs = -0.25 * np.einsum("ij,ij->i", W @ Sh, W)
    margins = lhs - rhs + 1e-10 * (1.0 + np.maximum(np.abs(lhs), np.abs(rhs)))
    worst = int(np.argmin(margins))
    s = float(1e-10 * (1.0 + max(abs(lhs[worst]), abs(rhs[worst]))))
    return CheckRow("gradient_bound", worst, float(lhs[worst]), float(rhs[worst]),
                    s, bool(np.all(margins >= 0.0)))


def build_ledger(result: SolveResult, w_bar) -> list[VerificationRecord]:
    """Full per-iteration ledger against a verified anchor."""
    ctx = LedgerContext(result, w_bar)
    key = {r.k: r for r in check_key_inequality(result, w_bar, context=ctx)}
    rr = {r.k: r for r in check_residual_inequality(result)}
    recs = result.records
    K = len(recs) - 1
    total = result.schedule.total()
    out = []
    for k in range(1, K + 1):
        fejer_bound = ctx.xi_norm(1) + (ctx.varrho + ctx.gn_norm) * total
        kr = key.get(k)
        rrr = rr.get(k)
        out.append(VerificationRecord(
            k=k, phi=ctx.phi(k), xi_norm=ctx.xi_norm(k),
            xi_bar_norm=ctx.xi_bar_norm(k),
            key_lhs=kr.lhs if kr else math.nan, key_rhs=kr.rhs if kr else math.nan,
            rr_lhs=rrr.lhs if rrr else math.nan, rr_rhs=rrr.rhs if rrr else math.nan,
            varrho=ctx.varrho, fejer_bound=fejer_bound))
    return out


def run_all_checks(result: SolveResult, w_bar) -> list[CheckRow]:
    """Key, residual, error-bound and boundedness checks for one trace."""
    ctx = LedgerContext(result, w_bar)
    rows = check_key_inequality(result, w_bar, context=ctx)
    rows += check_residual_inequality(result)
    rows += check_error_bounds(result, context=ctx)
    rows += check_fejer(result, w_bar, context=ctx)
    return rows


def _trivial_anchor(result: SolveResult):
    rec = result.records[-1]
    return rec.x, rec.y, rec.z


def write_report(path, rows: list[CheckRow]):
    """CSV report, one row per (check, iteration)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["check", "k", "lhs", "rhs", "slack", "pass"])
        for row in rows:
            writer.writerow([row.check, row.k, repr(row.lhs), repr(row.rhs),
                             repr(row.slack), int(row.passed)])
