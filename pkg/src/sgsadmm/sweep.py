"""Inexact block symmetric Gauss-Seidel decomposition.

One sweep minimizes a convex quadratic h(u) = u^T H u / 2 - b^T u plus a
prox-friendly term on block 1 by a backward pass over blocks s..2
followed by a forward pass over blocks 1..s.  The sweep output equals
the unique minimizer of the same objective augmented with the proximal
term ||u - u_prev||^2 / 2 weighted by sGS(H) = H_u H_d^{-1} H_u^*, and
per-block error vectors aggregate into a single tilt vector of the
proximal problem whose weighted norm obeys a computable bound.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .blockalg import (
    BlockOperator,
    BlockVector,
    DimensionMismatchError,
    OperatorSplit,
    _vector_data,
    operator_inv_sqrt,
    operator_sqrt,
    spd_factor,
    split,
)
from .model import CompositeQuadraticSolver, ProxFriendlyFunction, _ProxQP

__all__ = [
    "QuadraticBlockObjective",
    "SweepTolerances",
    "sgs_operator",
    "hat_operator",
    "tilt_vector",
    "tilt_error_bound",
    "SweepSolver",
    "sgs_sweep",
    "proximal_sweep_target",
]


@dataclass(frozen=True)
class QuadraticBlockObjective:
    """Quadratic h(u) = u^T H u / 2 - b^T u plus theta on block 1.

    The block-diagonal part of H must be positive definite for the
    sweep to be well defined.
    """

    H: BlockOperator
    b: BlockVector
    theta: ProxFriendlyFunction | None = None

    def __post_init__(self):
        if self.H.row_structure != self.b.structure:
            raise DimensionMismatchError("b does not match the structure of H")
        if self.theta is not None and self.theta.dim != self.H.row_structure.block_dims[0]:
            raise DimensionMismatchError("theta dimension != first block of H")


@dataclass(frozen=True)
class SweepTolerances:
    """Per-block error vectors for the backward (tilde) and forward passes.

    Block 1 of the backward vector always equals block 1 of the forward
    vector; the backward pass never visits block 1.
    """

    delta_tilde: BlockVector
    delta: BlockVector

    def __post_init__(self):
        if self.delta_tilde.structure != self.delta.structure:
            raise DimensionMismatchError("tolerance vectors have different structures")
        if not np.array_equal(self.delta_tilde.block(0), self.delta.block(0)):
            raise ValueError("block 1 of delta_tilde must equal block 1 of delta exactly")

    @classmethod
    def zero(cls, structure) -> "SweepTolerances":
        z = BlockVector.zeros(structure)
        return cls(z, z)

    @classmethod
    def from_arrays(cls, structure, delta_tilde, delta) -> "SweepTolerances":
        return cls(BlockVector(structure, delta_tilde), BlockVector(structure, delta))


def sgs_operator(H: BlockOperator) -> BlockOperator:
    """The PSD operator H_u H_d^{-1} H_u^* induced by one sweep."""
    sp = split(H)
    return _sgs_from_split(sp)


def _sgs_from_split(sp: OperatorSplit) -> BlockOperator:
    Hd = sp.diag.matrix
    Hu = sp.upper.matrix
    X = np.linalg.solve(Hd, Hu.T)
    mat = Hu @ X
    return BlockOperator(sp.diag.row_structure, sp.diag.col_structure,
                         (mat + mat.T) / 2.0, self_adjoint=True)


def hat_operator(H: BlockOperator) -> BlockOperator:
    """(H_d + H_u) H_d^{-1} (H_d + H_u^*), the sweep's effective quadratic.

    Equals H + sgs_operator(H) and is positive definite whenever the
    block diagonal of H is.
    """
    sp = split(H)
    L = sp.diag.matrix + sp.upper.matrix
    mat = L @ np.linalg.solve(sp.diag.matrix, L.T)
    return BlockOperator(H.row_structure, H.col_structure, (mat + mat.T) / 2.0,
                         self_adjoint=True)


def tilt_vector(tols: SweepTolerances, split_H: OperatorSplit) -> BlockVector:
    """Aggregate tilt delta + H_u H_d^{-1} (delta - delta_tilde)."""
    delta = tols.delta.data
    diff = delta - tols.delta_tilde.data
    correction = split_H.upper.matrix @ np.linalg.solve(split_H.diag.matrix, diff)
    return BlockVector(tols.delta.structure, delta + correction)


def tilt_error_bound(tols: SweepTolerances, split_H: OperatorSplit,
                     hat_H: BlockOperator) -> tuple[float, float]:
    """Both sides of the tilt-vector bound; lhs <= rhs up to round-off.

    lhs is the hat-inverse-weighted norm of the aggregate tilt; rhs adds
    the diagonal-inverse-weighted norm of the pass difference and the
    weighted norm of the backward errors pushed through the lower
    triangular factor.
    """
    d = tilt_vector(tols, split_H).data
    lhs = float(np.linalg.norm(operator_inv_sqrt(hat_H).matrix @ d))
    Hd = split_H.diag
    diff = tols.delta.data - tols.delta_tilde.data
    term1 = float(np.linalg.norm(operator_inv_sqrt(Hd).matrix @ diff))
    L = Hd.matrix + split_H.upper.matrix
    term2 = float(np.linalg.norm(operator_sqrt(Hd).matrix
                                 @ np.linalg.solve(L, tols.delta_tilde.data)))
    return lhs, term1 + term2


def _cg_block_solve(Hii: np.ndarray, rhs: np.ndarray, u0: np.ndarray,
                    tol: float) -> tuple[np.ndarray, np.ndarray]:
    """Conjugate-direction solve of Hii u = rhs stopping at gradient norm <= tol.

    Returns the iterate and the exact gradient Hii u - rhs there, which
    serves as the realized error vector.  When the tolerance is below
    the floating-point floor the best iterate found is returned, so the
    realized error is at worst a machine-precision gradient.
    """
    u = u0.astype(float).copy()
    g = Hii @ u - rhs
    best_u, best_g, best_norm = u.copy(), g.copy(), float(np.linalg.norm(g))
    if best_norm <= tol:
        return best_u, best_g
    p = -g
    for _ in range(3 * rhs.size + 5):
        Hp = Hii @ p
        denom = float(p @ Hp)
        if not np.isfinite(denom) or denom <= 0.0:
            break
        alpha = float(g @ g) / denom
        u = u + alpha * p
        g_new = Hii @ u - rhs
        nrm = float(np.linalg.norm(g_new))
        if not np.isfinite(nrm):
            break
        if nrm < best_norm:
            best_u, best_g, best_norm = u.copy(), g_new.copy(), nrm
        if nrm <= tol:
            return u, g_new
        beta = float(g_new @ g_new) / float(g @ g)
        p = -g_new + beta * p
        g = g_new
    return best_u, best_g


class SweepSolver:
    """Runs sweeps for a fixed quadratic coefficient H and block-1 term.

    Per-block diagonal factorizations are cached, so repeated sweeps
    with fresh linear terms (the solver hot loop) cost one small
    triangular solve per block.  Two inner modes are supported for the
    quadratic blocks: "direct" solves each tilted subproblem exactly, so
    the prescribed error vectors are realized verbatim; "cg" runs a
    conjugate-direction loop on the untilted subproblem until its
    gradient norm falls below the prescribed tolerance and reports that
    gradient as the realized error.  Block 1 always goes through the
    exact prox path.
    """

    def __init__(self, H: BlockOperator, theta: ProxFriendlyFunction | None = None):
        self.H = H
        self.structure = H.row_structure
        self.split = split(H)
        self.theta = theta
        s = self.structure
        self._mat = H.matrix
        self._diag_factors = []
        for i in range(s.nblocks):
            sl = s.block_slice(i)
            self._diag_factors.append(
                spd_factor(self._mat[sl, sl], f"diagonal block {i} of the sweep quadratic"))
        self._block1 = _ProxQP(theta, self._mat[s.block_slice(0), s.block_slice(0)])

    def sweep(self, b: np.ndarray, u_prev: np.ndarray, tols: SweepTolerances,
              inner: str = "direct", cg_tol: float = 0.0
              ) -> tuple[np.ndarray, np.ndarray, SweepTolerances]:
        """One backward-then-forward sweep from u_prev.

        Returns the backward-pass vector (block 1 carries u_prev's block
        1 as an unused placeholder), the forward-pass output, and the
        realized per-block error vectors.
        """
        s = self.structure
        b = np.asarray(b, dtype=float).reshape(-1)
        u_prev = np.asarray(u_prev, dtype=float).reshape(-1)
        if inner not in ("direct", "cg"):
            raise ValueError(f"unknown inner mode {inner!r}")
        d_tilde = tols.delta_tilde.data
        d_fwd = tols.delta.data
        realized_tilde = np.array(d_tilde)
        realized_fwd = np.array(d_fwd)

        u_t = u_prev.copy()
        for i in range(s.nblocks - 1, 0, -1):
            sl = s.block_slice(i)
            base = b[sl] - self._mat[sl, :] @ u_t + self._mat[sl, sl] @ u_t[sl]
            if inner == "cg" and cg_tol > 0.0:
                u_t[sl], g = _cg_block_solve(self._mat[sl, sl], base, u_t[sl], cg_tol)
                realized_tilde[sl] = g
            else:
                u_t[sl] = scipy.linalg.cho_solve(self._diag_factors[i], base + d_tilde[sl])

        u_p = u_t.copy()
        sl1 = s.block_slice(0)
        q1 = self._mat[sl1, :] @ u_p - self._mat[sl1, sl1] @ u_p[sl1] - b[sl1] - d_fwd[sl1]
        u_p[sl1] = self._block1.minimize(q1)
        for i in range(1, s.nblocks):
            sl = s.block_slice(i)
            base = b[sl] - self._mat[sl, :] @ u_p + self._mat[sl, sl] @ u_p[sl]
            if inner == "cg" and cg_tol > 0.0:
                u_p[sl], g = _cg_block_solve(self._mat[sl, sl], base, u_p[sl], cg_tol)
                realized_fwd[sl] = g
            else:
                u_p[sl] = scipy.linalg.cho_solve(self._diag_factors[i], base + d_fwd[sl])

        if inner == "cg" and cg_tol > 0.0:
            realized_tilde[sl1] = realized_fwd[sl1]
            realized = SweepTolerances.from_arrays(s, realized_tilde, realized_fwd)
        else:
            realized = tols
        return u_t, u_p, realized


def sgs_sweep(obj: QuadraticBlockObjective, u_prev: BlockVector,
              tols: SweepTolerances) -> tuple[BlockVector, BlockVector]:
    """One sweep on the given objective; see SweepSolver for the mechanics."""
    solver = SweepSolver(obj.H, obj.theta)
    u_t, u_p, _ = solver.sweep(obj.b.data, _vector_data(u_prev, obj.H.row_structure), tols)
    s = obj.H.row_structure
    return BlockVector(s, u_t), BlockVector(s, u_p)


def proximal_sweep_target(obj: QuadraticBlockObjective, u_prev: BlockVector,
                          tols: SweepTolerances) -> BlockVector:
    """Direct minimizer of the proximal problem the sweep reproduces.

    Solves min theta(u_1) + h(u) + ||u - u_prev||^2_{sGS(H)} / 2 minus
    the aggregate tilt in one shot, without visiting blocks in sequence.
    """
    sp = split(obj.H)
    sgs = _sgs_from_split(sp)
    hat = BlockOperator(obj.H.row_structure, obj.H.col_structure,
                        obj.H.matrix + sgs.matrix, self_adjoint=True)
    d = tilt_vector(tols, sp).data
    t = obj.b.data + sgs.matrix @ _vector_data(u_prev, obj.H.row_structure) + d
    solver = CompositeQuadraticSolver(obj.H.row_structure, hat, obj.theta)
    return BlockVector(obj.H.row_structure, solver.minimize(-t))
