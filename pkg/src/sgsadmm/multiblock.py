"""Multi-block ADMM driven by symmetric Gauss-Seidel sweeps.

Each iteration runs a backward-then-forward sweep over the x blocks of
the proximal majorized augmented Lagrangian (holding y at its current
value), the same over the y blocks (holding x at its new value), and a
dual ascent step.  Per block, the subproblem's quadratic coefficient is
a diagonal block of M_tilde = Sigma_hat_f + sigma A A^T + S_tilde (or
its y counterpart), assembled once and reused every iteration.

The run is exactly a two-block iteration with the constructed proximal
terms S_sgs = S_tilde + sGS(M_tilde) and T_sgs likewise, with aggregate
subgradient certificates obtained from the per-block error vectors; the
solver records those aggregates so every trace can be audited against
the two-block theory.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .blockalg import (
    BlockOperator,
    BlockStructure,
    BlockVector,
    min_eig,
    operator_inv_sqrt,
    spectral_norm,
)
from .model import ProblemSpec, kkt_residual
from .schedules import ToleranceSchedule
from .sweep import SweepSolver, SweepTolerances, tilt_vector
from .twoblock import (
    AdmissibilityError,
    DerivedConstants,
    GOLDEN_RATIO,
    IterationRecord,
    SolveResult,
    TwoBlockConfig,
    TwoBlockSolver,
    derive_constants,
)

__all__ = [
    "MultiBlockConfig",
    "ConstructedOperators",
    "construct_operators",
    "default_prox_terms",
    "MultiBlockSolver",
    "solve",
]

_PSD_SLACK = 1e-10
_PD_MARGIN = 1e-12


@dataclass(frozen=True)
class MultiBlockConfig:
    """Parameters of a multi-block solve.

    inexact is one of "exact", "tilt" (random per-block error vectors of
    norm 0.9 eps_k drawn from tilt_seed, realized by exact solves of the
    tilted subproblems) or "cg" (a conjugate-direction inner solver on
    the quadratic blocks stopped at gradient norm eps_k).  cross_check
    additionally runs the equivalent two-block iteration in lockstep and
    records the per-iteration gap.
    """

    sigma: float = 1.0
    tau: float = 1.618
    S_tilde: BlockOperator | None = None
    T_tilde: BlockOperator | None = None
    eps_schedule: ToleranceSchedule = field(default_factory=ToleranceSchedule.zero)
    stop_tol: float = 1e-8
    max_iter: int = 10000
    inexact: str = "exact"
    tilt_seed: int = 0
    cross_check: bool = False

    def __post_init__(self):
        if self.inexact not in ("exact", "tilt", "cg"):
            raise ValueError(f"unknown inexact mode {self.inexact!r}")


@dataclass(frozen=True)
class _SideOperators:
    """Constructed operators for one variable side."""

    M_tilde: BlockOperator
    M_diag: np.ndarray
    M_upper: np.ndarray
    S_sgs: BlockOperator
    M_sgs: BlockOperator
    kappa: float


@dataclass(frozen=True)
class ConstructedOperators:
    """Both sides' constructed operators and transport constants."""

    x: _SideOperators
    y: _SideOperators

    @property
    def kappa(self) -> float:
        return self.x.kappa

    @property
    def kappa_prime(self) -> float:
        return self.y.kappa

    @property
    def transport(self) -> float:
        return max(self.x.kappa, self.y.kappa)


def _side_operators(label: str, structure: BlockStructure, sigma_hat: BlockOperator,
                    coupling: np.ndarray, sigma: float,
                    prox_term: BlockOperator) -> _SideOperators:
    """Build M_tilde, its split, S_sgs and M_sgs for one side; validate."""
    lam = min_eig(prox_term + 0.5 * sigma_hat)
    scale = 1.0 + spectral_norm(prox_term + 0.5 * sigma_hat)
    if lam < -_PSD_SLACK * scale:
        raise AdmissibilityError(
            f"condition '{label}_tilde + Sigma_hat/2 >= 0' fails: min eigenvalue {lam:.3e}")

    AAt = BlockOperator(structure, structure, coupling @ coupling.T, self_adjoint=True)
    M_tilde = sigma_hat + sigma * AAt + prox_term
    mat = M_tilde.matrix
    nblocks = structure.nblocks
    diag = np.zeros_like(mat)
    upper = np.zeros_like(mat)
    for i in range(nblocks):
        sl = structure.block_slice(i)
        blk = mat[sl, sl]
        diag[sl, sl] = blk
        lam_i = np.linalg.eigvalsh(blk)[0]
        if lam_i <= _PD_MARGIN * max(1.0, abs(np.linalg.eigvalsh(blk)[-1])):
            raise AdmissibilityError(
                f"condition 'diagonal block of M_tilde ({label} side) > 0' fails "
                f"at block {i}: min eigenvalue {lam_i:.3e}")
        for j in range(i + 1, nblocks):
            upper[sl, structure.block_slice(j)] = mat[sl, structure.block_slice(j)]

    sgs = upper @ np.linalg.solve(diag, upper.T)
    sgs = (sgs + sgs.T) / 2.0
    S_sgs = prox_term + BlockOperator(structure, structure, sgs, self_adjoint=True)
    M_sgs = sigma_hat + sigma * AAt + S_sgs
    half = 0.5 * sigma_hat + sigma * AAt + S_sgs
    lam_half = min_eig(half)
    if lam_half <= _PD_MARGIN * max(1.0, spectral_norm(half)):
        raise AdmissibilityError(
            f"condition 'Sigma_hat/2 + sigma A A^T + {label}_sgs > 0' fails: "
            f"min eigenvalue {lam_half:.3e}")

    m = nblocks
    diag_inv_sqrt = operator_inv_sqrt(
        BlockOperator(structure, structure, diag, self_adjoint=True)).matrix
    diag_sqrt = np.linalg.inv(diag_inv_sqrt)
    kappa = (2.0 * math.sqrt(m - 1) * spectral_norm(diag_inv_sqrt)
             + math.sqrt(m) * spectral_norm(diag_sqrt @ np.linalg.inv(diag + upper)))
    return _SideOperators(M_tilde=M_tilde, M_diag=diag, M_upper=upper,
                          S_sgs=S_sgs, M_sgs=M_sgs, kappa=kappa)


def construct_operators(spec: ProblemSpec, sigma: float,
                        S_tilde: BlockOperator | None = None,
                        T_tilde: BlockOperator | None = None) -> ConstructedOperators:
    """Assemble and validate the sweep operators for both sides."""
    S_tilde = S_tilde if S_tilde is not None else BlockOperator.zeros(spec.x_structure)
    T_tilde = T_tilde if T_tilde is not None else BlockOperator.zeros(spec.y_structure)
    side_x = _side_operators("S", spec.x_structure, spec.f.sigma_hat,
                             spec.A.matrix, sigma, S_tilde)
    side_y = _side_operators("T", spec.y_structure, spec.g.sigma_hat,
                             spec.B.matrix, sigma, T_tilde)
    return ConstructedOperators(x=side_x, y=side_y)


def _feasible(spec: ProblemSpec, sigma: float, S: BlockOperator, T: BlockOperator) -> bool:
    try:
        construct_operators(spec, sigma, S, T)
        return True
    except AdmissibilityError:
        return False


def _min_shift(spec: ProblemSpec, sigma: float, base_S: BlockOperator,
               base_T: BlockOperator, tol: float = 1e-8) -> float:
    """Smallest lam >= 0 making base + lam I admissible, by bisection."""
    Ix = BlockOperator.identity(spec.x_structure)
    Iy = BlockOperator.identity(spec.y_structure)

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
    while hi - lo > tol:
        mid = (lo + hi) / 2.0
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi


def default_prox_terms(spec: ProblemSpec, sigma: float, mode: str = "auto"
                       ) -> tuple[BlockOperator, BlockOperator]:
    """Proximal-term presets.

    "zero" uses no proximal terms and fails if they are inadmissible;
    "auto" falls back to the smallest admissible diagonal shift;
    "shift:<lam>" uses lam times the identity on both sides; "stress"
    uses -0.49 times each curvature bound, diagonally corrected back to
    admissibility, to exercise genuinely indefinite proximal terms.
    """
    Zx = BlockOperator.zeros(spec.x_structure)
    Zy = BlockOperator.zeros(spec.y_structure)
    if mode == "zero":
        construct_operators(spec, sigma, Zx, Zy)
        return Zx, Zy
    if mode == "auto":
        lam = _min_shift(spec, sigma, Zx, Zy)
        if lam == 0.0:
            return Zx, Zy
        return (lam * BlockOperator.identity(spec.x_structure),
                lam * BlockOperator.identity(spec.y_structure))
    if mode.startswith("shift:"):
        lam = float(mode.split(":", 1)[1])
        S = lam * BlockOperator.identity(spec.x_structure)
        T = lam * BlockOperator.identity(spec.y_structure)
        construct_operators(spec, sigma, S, T)
        return S, T
    if mode == "stress":
        base_S = -0.49 * spec.f.sigma_hat
        base_T = -0.49 * spec.g.sigma_hat
        lam = _min_shift(spec, sigma, base_S, base_T)
        Ix = BlockOperator.identity(spec.x_structure)
        Iy = BlockOperator.identity(spec.y_structure)
        return base_S + lam * Ix, base_T + lam * Iy
    raise ValueError(f"unknown proximal-term mode {mode!r}")


class MultiBlockSolver:
    """Iterates the sweep-based scheme for a fixed problem and config."""

    def __init__(self, spec: ProblemSpec, cfg: MultiBlockConfig):
        self.spec = spec
        self.cfg = cfg
        if not 0.0 < cfg.tau < GOLDEN_RATIO:
            raise AdmissibilityError(
                f"condition 'tau in (0, (1+sqrt(5))/2)' fails: tau = {cfg.tau}")
        S_tilde = cfg.S_tilde if cfg.S_tilde is not None else BlockOperator.zeros(spec.x_structure)
        T_tilde = cfg.T_tilde if cfg.T_tilde is not None else BlockOperator.zeros(spec.y_structure)
        self.S_tilde = S_tilde
        self.T_tilde = T_tilde
        self.ops = construct_operators(spec, cfg.sigma, S_tilde, T_tilde)
        self.constants: DerivedConstants = derive_constants(
            spec, cfg.sigma, cfg.tau, self.ops.x.S_sgs, self.ops.y.S_sgs)
        self._sweep_x = SweepSolver(self.ops.x.M_tilde, spec.p1)
        self._sweep_y = SweepSolver(self.ops.y.M_tilde, spec.q1)
        self._Msgs_inv_sqrt = operator_inv_sqrt(self.ops.x.M_sgs).matrix
        self._Nsgs_inv_sqrt = operator_inv_sqrt(self.ops.y.M_sgs).matrix
        self._A = spec.A.matrix
        self._B = spec.B.matrix
        # Constant parts of the sweep linear terms b = D u - grad-const.
        self._Dx = spec.f.sigma_hat.matrix + S_tilde.matrix - spec.f.Q.matrix
        self._Dy = spec.g.sigma_hat.matrix + T_tilde.matrix - spec.g.Q.matrix
        self._twin = None
        if cfg.cross_check:
            self._twin = TwoBlockSolver(spec, TwoBlockConfig(
                sigma=cfg.sigma, tau=cfg.tau, S=self.ops.x.S_sgs, T=self.ops.y.S_sgs,
                stop_tol=cfg.stop_tol, max_iter=cfg.max_iter))

    def _draw_tols(self, rng: np.random.Generator, structure: BlockStructure,
                   eps: float) -> SweepTolerances:
        if eps == 0.0:
            return SweepTolerances.zero(structure)
        tilde = np.zeros(structure.total_dim)
        fwd = np.zeros(structure.total_dim)
        for i in range(1, structure.nblocks):
            tilde[structure.block_slice(i)] = _unit(rng, structure.block_dims[i]) * (0.9 * eps)
        for i in range(structure.nblocks):
            fwd[structure.block_slice(i)] = _unit(rng, structure.block_dims[i]) * (0.9 * eps)
        tilde[structure.block_slice(0)] = fwd[structure.block_slice(0)]
        return SweepTolerances.from_arrays(structure, tilde, fwd)

    def iterate(self, x: np.ndarray, y: np.ndarray, z: np.ndarray, eps: float,
                rng: np.random.Generator | None):
        """Sweep x, sweep y, update z; returns the new state and certificates."""
        spec = self.spec
        cfg = self.cfg
        sigma = cfg.sigma
        inner = "cg" if cfg.inexact == "cg" else "direct"

        if cfg.inexact == "tilt" and rng is not None:
            tols_x = self._draw_tols(rng, spec.x_structure, eps)
        else:
            tols_x = SweepTolerances.zero(spec.x_structure)
        b_x = self._Dx @ x - spec.f.lin - self._A @ (z + sigma * (self._B.T @ y - spec.c))
        _, x_new, realized_x = self._sweep_x.sweep(b_x, x, tols_x, inner=inner, cg_tol=eps)
        d_x = realized_x.delta.data + self.ops.x.M_upper @ np.linalg.solve(
            self.ops.x.M_diag, realized_x.delta.data - realized_x.delta_tilde.data)

        if cfg.inexact == "tilt" and rng is not None:
            tols_y = self._draw_tols(rng, spec.y_structure, eps)
        else:
            tols_y = SweepTolerances.zero(spec.y_structure)
        b_y = self._Dy @ y - spec.g.lin - self._B @ (z + sigma * (self._A.T @ x_new - spec.c))
        _, y_new, realized_y = self._sweep_y.sweep(b_y, y, tols_y, inner=inner, cg_tol=eps)
        d_y = realized_y.delta.data + self.ops.y.M_upper @ np.linalg.solve(
            self.ops.y.M_diag, realized_y.delta.data - realized_y.delta_tilde.data)

        r_new = self._A.T @ x_new + self._B.T @ y_new - spec.c
        z_new = z + cfg.tau * sigma * r_new

        cert_x = float(np.linalg.norm(self._Msgs_inv_sqrt @ d_x))
        cert_y = float(np.linalg.norm(self._Nsgs_inv_sqrt @ d_y))
        slack = 1e-12 * (1.0 + eps)
        if cert_x > self.ops.kappa * eps + slack or cert_y > self.ops.kappa_prime * eps + slack:
            raise AssertionError(
                "certificate transport bound violated: "
                f"({cert_x:.3e}, {cert_y:.3e}) vs eps {eps:.3e}")
        return x_new, y_new, z_new, r_new, d_x, d_y, cert_x, cert_y

    def solve(self, init=None) -> SolveResult:
        """Iterate to the stopping tolerance, recording the two-block view."""
        spec = self.spec
        cfg = self.cfg
        if init is None:
            x, y, z = spec.feasible_start()
        else:
            x, y, z = (np.array(v, dtype=float).reshape(-1) for v in init)
        rng = np.random.default_rng(cfg.tilt_seed) if cfg.inexact == "tilt" else None
        transport = self.ops.transport
        records: list[IterationRecord] = []
        eps_tilde_trace: list[float] = []
        cross_trace: list[float] = []
        converged = False
        k = 0
        while True:
            res = kkt_residual(spec, x, y, z)
            r = spec.residual(x, y)
            if res.total <= cfg.stop_tol:
                converged = True
            if converged or k >= cfg.max_iter:
                records.append(IterationRecord(
                    k=k, x=x, y=y, z=z, r=r, kkt=res,
                    eps=transport * cfg.eps_schedule(k)))
                break
            eps = cfg.eps_schedule(k)
            x1, y1, z1, _, d_x, d_y, cert_x, cert_y = self.iterate(x, y, z, eps, rng)
            if self._twin is not None:
                tx, ty, tz, *_ = self._twin.step(x, y, z, eps, None,
                                                 tilt_x=d_x, tilt_y=d_y)
                gap = max(np.max(np.abs(tx - x1)), np.max(np.abs(ty - y1)),
                          np.max(np.abs(tz - z1)))
                cross_trace.append(float(gap))
            records.append(IterationRecord(
                k=k, x=x, y=y, z=z, r=r, kkt=res, eps=transport * eps,
                d_x=d_x, d_y=d_y, cert_x=cert_x, cert_y=cert_y))
            eps_tilde_trace.append(eps)
            x, y, z = x1, y1, z1
            k += 1
        info = {
            "kappa": self.ops.kappa,
            "kappa_prime": self.ops.kappa_prime,
            "eps_tilde": eps_tilde_trace,
            "operators": self.ops,
        }
        if self._twin is not None:
            info["cross_max_diff"] = cross_trace
        return SolveResult(
            spec=spec, sigma=cfg.sigma, tau=cfg.tau,
            S=self.ops.x.S_sgs, T=self.ops.y.S_sgs,
            constants=self.constants,
            schedule=cfg.eps_schedule.scaled(transport),
            records=records, converged=converged, iterations=k,
            algorithm="sgs", info=info)


def _unit(rng: np.random.Generator, dim: int) -> np.ndarray:
    v = rng.standard_normal(dim)
    nrm = np.linalg.norm(v)
    while nrm == 0.0:
        v = rng.standard_normal(dim)
        nrm = np.linalg.norm(v)
    return v / nrm


def solve(spec: ProblemSpec, cfg: MultiBlockConfig, init=None) -> SolveResult:
    """Convenience wrapper building a solver and running it once."""
    return MultiBlockSolver(spec, cfg).solve(init=init)
