"""Two-block inexact majorized indefinite-proximal ADMM.

Each iteration performs an inexact proximal minimization of the
majorized augmented Lagrangian in x, then in y, then a dual ascent step
with step-length tau in (0, (1+sqrt(5))/2).  The proximal weights S and
T may be indefinite as long as they dominate minus half the curvature
bounds and keep the combined subproblem operators positive definite.
Inexactness is realized by tilting: each subproblem is solved exactly
after subtracting a linear term whose weighted norm respects the
iteration's tolerance, so the tilt itself is an exact subgradient
certificate at the returned point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .blockalg import (
    BlockOperator,
    min_eig,
    operator_inv_sqrt,
    operator_sqrt,
    spectral_norm,
)
from .model import (
    CompositeQuadraticSolver,
    KKTResidual,
    ProblemSpec,
    kkt_residual,
)
from .schedules import ToleranceSchedule

__all__ = [
    "GOLDEN_RATIO",
    "AdmissibilityError",
    "step_constants",
    "DerivedConstants",
    "derive_constants",
    "TwoBlockConfig",
    "IterationRecord",
    "SolveResult",
    "TwoBlockSolver",
    "solve",
]

GOLDEN_RATIO = (1.0 + math.sqrt(5.0)) / 2.0

# Eigenvalue slack for the semidefinite admissibility comparisons.
_PSD_SLACK = 1e-10
# Required relative margin for the strict positive definiteness checks.
_PD_MARGIN = 1e-12


class AdmissibilityError(ValueError):
    """A proximal-term admissibility condition fails; names the condition."""


def step_constants(tau: float) -> tuple[float, float, float]:
    """Contraction constants (alpha, alpha_hat, beta) for a step-length tau.

    All three are positive, with alpha and alpha_hat in (0, 1), for any
    tau in (0, (1+sqrt(5))/2).
    """
    alpha = (1.0 + tau / min(1.0 + tau, 1.0 + 1.0 / tau)) / 2.0
    alpha_hat = 1.0 - alpha * min(tau, 1.0 / tau)
    beta = min(1.0, 1.0 - tau + 1.0 / tau) * alpha - (1.0 - alpha) * tau
    return alpha, alpha_hat, beta


@dataclass(frozen=True)
class DerivedConstants:
    """Scalars and operators entering the convergence certificates."""

    alpha: float
    alpha_hat: float
    beta: float
    F: BlockOperator
    G: BlockOperator
    M: BlockOperator
    N: BlockOperator


def _check_psd(op: BlockOperator, name: str):
    lam = min_eig(op)
    scale = 1.0 + spectral_norm(op)
    if lam < -_PSD_SLACK * scale:
        raise AdmissibilityError(
            f"condition '{name}' fails: min eigenvalue {lam:.3e}")


def _check_pd(op: BlockOperator, name: str):
    lam = min_eig(op)
    scale = max(1.0, spectral_norm(op))
    if lam <= _PD_MARGIN * scale:
        raise AdmissibilityError(
            f"condition '{name}' fails: min eigenvalue {lam:.3e} is not positive")


def derive_constants(spec: ProblemSpec, sigma: float, tau: float,
                     S: BlockOperator, T: BlockOperator) -> DerivedConstants:
    """Validate admissibility and build the certificate operators.

    Checks, in order: S dominates minus half the x curvature bound, T
    likewise for y, and the two combined subproblem operators with half
    curvature are positive definite.  Then asserts the derived scalars
    and the operators F, G, M, N land in their guaranteed ranges.
    """
    if sigma <= 0:
        raise AdmissibilityError("condition 'sigma > 0' fails")
    if not 0.0 < tau < GOLDEN_RATIO:
        raise AdmissibilityError(
            f"condition 'tau in (0, (1+sqrt(5))/2)' fails: tau = {tau}")
    sf = spec.f.sigma_hat
    sg = spec.g.sigma_hat
    _check_psd(S + 0.5 * sf, "S + Sigma_hat_f/2 >= 0")
    _check_psd(T + 0.5 * sg, "T + Sigma_hat_g/2 >= 0")
    half_x = 0.5 * sf + sigma * spec.AAt + S
    half_y = 0.5 * sg + sigma * spec.BBt + T
    _check_pd(half_x, "Sigma_hat_f/2 + sigma A A^T + S > 0")
    _check_pd(half_y, "Sigma_hat_g/2 + sigma B B^T + T > 0")

    alpha, alpha_hat, beta = step_constants(tau)
    assert 0.0 < alpha < 1.0 and 0.0 < alpha_hat < 1.0 and beta > 0.0
    F = 0.5 * sf + S + ((1.0 - alpha) * sigma / 2.0) * spec.AAt
    rho = min(tau, 1.0 + tau - tau * tau)
    G = 0.5 * sg + T + (rho * alpha * sigma) * spec.BBt
    M = sf + sigma * spec.AAt + S
    N = sg + sigma * spec.BBt + T
    _check_pd(F, "F > 0")
    _check_pd(G, "G > 0")
    _check_pd(M, "M > 0")
    _check_pd(N, "N > 0")
    return DerivedConstants(alpha=alpha, alpha_hat=alpha_hat, beta=beta,
                            F=F, G=G, M=M, N=N)


@dataclass(frozen=True)
class TwoBlockConfig:
    """Parameters of a two-block solve.

    tilt_seed None means exact subproblem solves; an integer seeds the
    deterministic tilt generator, which draws a direction per subproblem
    and scales it so the certificate bound holds with a 0.9 factor.
    """

    sigma: float = 1.0
    tau: float = 1.618
    S: BlockOperator | None = None
    T: BlockOperator | None = None
    eps_schedule: ToleranceSchedule = field(default_factory=ToleranceSchedule.zero)
    stop_tol: float = 1e-8
    max_iter: int = 10000
    tilt_seed: int | None = None


@dataclass(frozen=True)
class IterationRecord:
    """State k plus the certificates of the step leaving it.

    The tolerance and certificate fields describe the step from state k
    to state k+1; the final record of a trace has no outgoing step and
    carries None certificates.
    """

    k: int
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    r: np.ndarray
    kkt: KKTResidual
    eps: float
    d_x: np.ndarray | None = None
    d_y: np.ndarray | None = None
    cert_x: float | None = None
    cert_y: float | None = None


@dataclass(frozen=True)
class SolveResult:
    """A full trace plus the effective two-block view of the run.

    For the multi-block algorithm the proximal terms are the
    constructed ones and the schedule is the per-sweep schedule scaled
    by the certificate transport constant, so each trace can be checked
    against the two-block theory uniformly.
    """

    spec: ProblemSpec
    sigma: float
    tau: float
    S: BlockOperator
    T: BlockOperator
    constants: DerivedConstants
    schedule: ToleranceSchedule
    records: list[IterationRecord]
    converged: bool
    iterations: int
    algorithm: str
    info: dict = field(default_factory=dict)

    @property
    def final(self) -> IterationRecord:
        return self.records[-1]


class TwoBlockSolver:
    """Iterates the two-block scheme for a fixed problem and config."""

    def __init__(self, spec: ProblemSpec, cfg: TwoBlockConfig):
        self.spec = spec
        self.cfg = cfg
        S = cfg.S if cfg.S is not None else BlockOperator.zeros(spec.x_structure)
        T = cfg.T if cfg.T is not None else BlockOperator.zeros(spec.y_structure)
        self.S = S
        self.T = T
        self.constants = derive_constants(spec, cfg.sigma, cfg.tau, S, T)
        self._xsolver = CompositeQuadraticSolver(spec.x_structure, self.constants.M, spec.p1)
        self._ysolver = CompositeQuadraticSolver(spec.y_structure, self.constants.N, spec.q1)
        self._M_sqrt = operator_sqrt(self.constants.M).matrix
        self._M_inv_sqrt = operator_inv_sqrt(self.constants.M).matrix
        self._N_sqrt = operator_sqrt(self.constants.N).matrix
        self._N_inv_sqrt = operator_inv_sqrt(self.constants.N).matrix
        # Constant parts of the subproblem linear terms.
        sigma = cfg.sigma
        self._A = spec.A.matrix
        self._B = spec.B.matrix
        self._Cx = spec.f.Q.matrix - spec.f.sigma_hat.matrix - S.matrix
        self._Cy = spec.g.Q.matrix - spec.g.sigma_hat.matrix - T.matrix

    def _draw_tilt(self, rng: np.random.Generator, eps: float, side: str) -> np.ndarray:
        root = self._M_sqrt if side == "x" else self._N_sqrt
        v = rng.standard_normal(root.shape[0])
        nrm = np.linalg.norm(v)
        if nrm == 0.0 or eps == 0.0:
            return np.zeros(root.shape[0])
        return root @ (v * (0.9 * eps / nrm))

    def step(self, x: np.ndarray, y: np.ndarray, z: np.ndarray, eps: float,
             rng: np.random.Generator | None = None,
             tilt_x: np.ndarray | None = None, tilt_y: np.ndarray | None = None):
        """One iteration from (x, y, z); returns the new triple and certificates.

        Tilts may be prescribed (cross-check mode); otherwise they are
        zero in exact mode or drawn from the seeded generator.
        """
        spec = self.spec
        sigma = self.cfg.sigma
        if tilt_x is not None:
            d_x = np.asarray(tilt_x, dtype=float)
        elif rng is not None and eps > 0.0:
            d_x = self._draw_tilt(rng, eps, "x")
        else:
            d_x = np.zeros(x.size)
        w_x = self._Cx @ x + spec.f.lin + self._A @ (z + sigma * (self._B.T @ y - spec.c))
        x_new = self._xsolver.minimize(w_x - d_x)

        if tilt_y is not None:
            d_y = np.asarray(tilt_y, dtype=float)
        elif rng is not None and eps > 0.0:
            d_y = self._draw_tilt(rng, eps, "y")
        else:
            d_y = np.zeros(y.size)
        w_y = self._Cy @ y + spec.g.lin + self._B @ (z + sigma * (self._A.T @ x_new - spec.c))
        y_new = self._ysolver.minimize(w_y - d_y)

        r_new = self._A.T @ x_new + self._B.T @ y_new - spec.c
        z_new = z + self.cfg.tau * sigma * r_new

        cert_x = float(np.linalg.norm(self._M_inv_sqrt @ d_x))
        cert_y = float(np.linalg.norm(self._N_inv_sqrt @ d_y))
        slack = eps * (1.0 + 1e-9) + 1e-14
        if tilt_x is None and (cert_x > slack or cert_y > slack):
            raise AssertionError(
                f"certificate bound violated: {max(cert_x, cert_y):.3e} > eps {eps:.3e}")
        return x_new, y_new, z_new, r_new, d_x, d_y, cert_x, cert_y

    def solve(self, init=None) -> SolveResult:
        """Iterate until the KKT residual clears stop_tol or max_iter hits."""
        spec = self.spec
        cfg = self.cfg
        if init is None:
            x, y, z = spec.feasible_start()
        else:
            x, y, z = (np.array(v, dtype=float).reshape(-1) for v in init)
        rng = np.random.default_rng(cfg.tilt_seed) if cfg.tilt_seed is not None else None
        records: list[IterationRecord] = []
        converged = False
        k = 0
        while True:
            res = kkt_residual(spec, x, y, z)
            r = spec.residual(x, y)
            if res.total <= cfg.stop_tol:
                converged = True
            if converged or k >= cfg.max_iter:
                records.append(IterationRecord(
                    k=k, x=x, y=y, z=z, r=r, kkt=res, eps=cfg.eps_schedule(k)))
                break
            eps = cfg.eps_schedule(k)
            x1, y1, z1, _, d_x, d_y, cert_x, cert_y = self.step(x, y, z, eps, rng)
            records.append(IterationRecord(
                k=k, x=x, y=y, z=z, r=r, kkt=res, eps=eps,
                d_x=d_x, d_y=d_y, cert_x=cert_x, cert_y=cert_y))
            x, y, z = x1, y1, z1
            k += 1
        return SolveResult(
            spec=spec, sigma=cfg.sigma, tau=cfg.tau, S=self.S, T=self.T,
            constants=self.constants, schedule=cfg.eps_schedule, records=records,
            converged=converged, iterations=k, algorithm="twoblock")


def solve(spec: ProblemSpec, cfg: TwoBlockConfig, init=None) -> SolveResult:
    """Convenience wrapper building a solver and running it once."""
    return TwoBlockSolver(spec, cfg).solve(init=init)


def _feasible(spec: ProblemSpec, sigma: float, S: BlockOperator, T: BlockOperator) -> bool:
    try:
        derive_constants(spec, sigma, 1.0, S, T)
        return True
    except AdmissibilityError:
        return False


def default_prox_terms(spec: ProblemSpec, sigma: float, mode: str = "auto"
                       ) -> tuple[BlockOperator, BlockOperator]:
    """Proximal-term presets for the two-block algorithm.

    Same modes as the multi-block counterpart: "zero", "auto" (smallest
    admissible diagonal shift), "shift:<lam>", and "stress" (-0.49 times
    each curvature bound, diagonally corrected back to admissibility).
    """
    Zx = BlockOperator.zeros(spec.x_structure)
    Zy = BlockOperator.zeros(spec.y_structure)
    Ix = BlockOperator.identity(spec.x_structure)
    Iy = BlockOperator.identity(spec.y_structure)

    def min_shift(base_S: BlockOperator, base_T: BlockOperator) -> float:
        def ok(lam: float) -> bool:
            return _feasible(spec, sigma, base_S + lam * Ix, base_T + lam * Iy)
        if ok(0.0):
            return 0.0
        hi = 1.0
        while not ok(hi):
            hi *= 2.0
            if hi > 1e8:
                raise AdmissibilityError("no diagonal shift below 1e8 restores admissibility")
        lo = 0.0
        while hi - lo > 1e-8:
            mid = (lo + hi) / 2.0
            if ok(mid):
                hi = mid
            else:
                lo = mid
        return hi

    if mode == "zero":
        derive_constants(spec, sigma, 1.0, Zx, Zy)
        return Zx, Zy
    if mode == "auto":
        lam = min_shift(Zx, Zy)
        if lam == 0.0:
            return Zx, Zy
        return lam * Ix, lam * Iy
    if mode.startswith("shift:"):
        lam = float(mode.split(":", 1)[1])
        S, T = lam * Ix, lam * Iy
        derive_constants(spec, sigma, 1.0, S, T)
        return S, T
    if mode == "stress":
        base_S = -0.49 * spec.f.sigma_hat
        base_T = -0.49 * spec.g.sigma_hat
        lam = min_shift(base_S, base_T)
        return base_S + lam * Ix, base_T + lam * Iy
    raise ValueError(f"unknown proximal-term mode {mode!r}")
