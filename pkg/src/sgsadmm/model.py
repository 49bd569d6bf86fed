"""Problem data model.

A problem couples two variable groups x and y through a linear equality
constraint: minimize p1(x_1) + f(x) + q1(y_1) + g(y) subject to
A^T x + B^T y = c.  The nonsmooth pieces p1, q1 act on the first block
of each side and must be prox friendly; the smooth couplers f, g are
convex quadratics carrying explicit curvature upper and lower bounds, so
every majorization inequality used by the solvers holds with computable
slack.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg

from .blockalg import (
    BlockOperator,
    BlockStructure,
    BlockVector,
    DimensionMismatchError,
    NotPositiveDefiniteError,
    _vector_data,
    min_eig,
    spd_factor,
    spectral_norm,
)

__all__ = [
    "ProxFriendlyFunction",
    "SmoothConvexFunction",
    "ProblemSpec",
    "KKTResidual",
    "prox",
    "kkt_residual",
    "majorized_aug_lagrangian",
    "minimize_prox_quadratic",
    "CompositeQuadraticSolver",
]

# Activity tolerance when classifying coordinates as "at a kink" or
# "on a bound" for subgradient distance computations.
ACTIVE_TOL = 1e-9


class ProxFriendlyFunction:
    """Closed proper convex function with an exact proximal map.

    Supported kinds: the zero function, a weighted l1 norm, and the
    indicator of a coordinatewise box.
    """

    __slots__ = ("kind", "dim", "lam", "lo", "hi")

    def __init__(self, kind: str, dim: int, lam: float = 0.0, lo=None, hi=None):
        if kind not in ("zero", "l1", "box"):
            raise ValueError(f"unsupported kind {kind!r}")
        dim = int(dim)
        if dim < 1:
            raise ValueError("dimension must be >= 1")
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "dim", dim)
        if kind == "l1":
            lam = float(lam)
            if lam < 0:
                raise ValueError("l1 weight must be >= 0")
        object.__setattr__(self, "lam", float(lam))
        if kind == "box":
            lo_arr = np.broadcast_to(np.asarray(lo, dtype=float), (dim,)).copy()
            hi_arr = np.broadcast_to(np.asarray(hi, dtype=float), (dim,)).copy()
            if np.any(lo_arr > hi_arr):
                raise ValueError("box needs lo <= hi coordinatewise")
            lo_arr.flags.writeable = False
            hi_arr.flags.writeable = False
        else:
            lo_arr = None
            hi_arr = None
        object.__setattr__(self, "lo", lo_arr)
        object.__setattr__(self, "hi", hi_arr)

    def __setattr__(self, name, value):
        raise AttributeError("ProxFriendlyFunction is immutable")

    @classmethod
    def zero(cls, dim: int) -> "ProxFriendlyFunction":
        return cls("zero", dim)

    @classmethod
    def l1(cls, dim: int, lam: float) -> "ProxFriendlyFunction":
        return cls("l1", dim, lam=lam)

    @classmethod
    def box(cls, lo, hi) -> "ProxFriendlyFunction":
        lo = np.atleast_1d(np.asarray(lo, dtype=float))
        hi = np.broadcast_to(np.asarray(hi, dtype=float), lo.shape)
        return cls("box", lo.size, lo=lo, hi=hi)

    def value(self, v) -> float:
        v = np.asarray(v, dtype=float).reshape(-1)
        if self.kind == "zero":
            return 0.0
        if self.kind == "l1":
            return float(self.lam * np.abs(v).sum())
        if np.any(v < self.lo - ACTIVE_TOL) or np.any(v > self.hi + ACTIVE_TOL):
            return math.inf
        return 0.0

    def in_domain(self, v, tol: float = ACTIVE_TOL) -> bool:
        return self.value(np.asarray(v)) < math.inf if self.kind == "box" else True

    def prox(self, t: float, v) -> np.ndarray:
        """argmin_u fn(u) + ||u - v||^2 / (2 t)."""
        if t <= 0:
            raise ValueError("prox needs t > 0")
        v = np.asarray(v, dtype=float).reshape(-1)
        if self.kind == "zero":
            return v.copy()
        if self.kind == "l1":
            return np.sign(v) * np.maximum(np.abs(v) - t * self.lam, 0.0)
        return np.clip(v, self.lo, self.hi)

    def subgradient_distance(self, v, g, active_tol: float = ACTIVE_TOL) -> float:
        """Euclidean distance from g to the subdifferential at v."""
        v = np.asarray(v, dtype=float).reshape(-1)
        g = np.asarray(g, dtype=float).reshape(-1)
        if self.kind == "zero":
            return float(np.linalg.norm(g))
        if self.kind == "l1":
            d = np.empty_like(g)
            at_kink = np.abs(v) <= active_tol
            d[at_kink] = np.maximum(np.abs(g[at_kink]) - self.lam, 0.0)
            d[~at_kink] = np.abs(g[~at_kink] - self.lam * np.sign(v[~at_kink]))
            return float(np.linalg.norm(d))
        d = np.zeros_like(g)
        at_lo = v <= self.lo + active_tol
        at_hi = v >= self.hi - active_tol
        interior = ~(at_lo | at_hi)
        # Normal cone is (-inf, 0] at the lower bound, [0, inf) at the
        # upper bound, {0} in the interior; a coordinate pinned on both
        # bounds accepts anything.
        both = at_lo & at_hi
        d[at_lo & ~both] = np.maximum(g[at_lo & ~both], 0.0)
        d[at_hi & ~both] = np.maximum(-g[at_hi & ~both], 0.0)
        d[interior] = np.abs(g[interior])
        return float(np.linalg.norm(d))

    def __repr__(self):
        if self.kind == "l1":
            return f"ProxFriendlyFunction(l1, dim={self.dim}, lam={self.lam})"
        if self.kind == "box":
            return f"ProxFriendlyFunction(box, lo={self.lo}, hi={self.hi})"
        return f"ProxFriendlyFunction(zero, dim={self.dim})"


def prox(fn: ProxFriendlyFunction, t: float, v) -> np.ndarray:
    """Proximal map of t * fn evaluated at v."""
    return fn.prox(t, v)


class _ProxQP:
    """Exact minimizer of fn(u) + u^T Q u / 2 + q^T u for SPD Q.

    For the l1 and box kinds the minimizer is found by enumerating the
    finitely many activity patterns of the first-order conditions and
    picking the candidate with the smallest stationarity violation, so
    the solve terminates after finitely many Cholesky solves.
    """

    def __init__(self, fn: ProxFriendlyFunction | None, Q: np.ndarray):
        self.Q = np.asarray(Q, dtype=float)
        d = self.Q.shape[0]
        self.fn = fn if (fn is not None and fn.kind != "zero") else None
        if self.fn is not None and self.fn.dim != d:
            raise DimensionMismatchError(
                f"function dimension {self.fn.dim} != quadratic dimension {d}")
        if self.fn is not None and d > 16:
            raise ValueError("pattern enumeration is limited to dimension <= 16")
        self._full = spd_factor(self.Q, "prox subproblem quadratic")
        self._pattern_cache: dict[tuple, object] = {}

    def _pattern_factor(self, free: tuple):
        fac = self._pattern_cache.get(free)
        if fac is None:
            idx = np.array(free, dtype=int)
            fac = (idx, spd_factor(self.Q[np.ix_(idx, idx)], "pattern subsystem"))
            self._pattern_cache[free] = fac
        return fac

    def minimize(self, q: np.ndarray) -> np.ndarray:
        q = np.asarray(q, dtype=float).reshape(-1)
        if self.fn is None:
            return scipy.linalg.cho_solve(self._full, -q)
        if self.fn.kind == "l1":
            return self._minimize_l1(q)
        return self._minimize_box(q)

    def _score(self, u: np.ndarray, q: np.ndarray) -> float:
        return self.fn.subgradient_distance(u, -(self.Q @ u + q))

    def _minimize_l1(self, q: np.ndarray) -> np.ndarray:
        lam = self.fn.lam
        d = q.size
        best, best_score = None, math.inf
        for pattern in itertools.product((-1, 0, 1), repeat=d):
            s = np.array(pattern, dtype=float)
            free = tuple(i for i in range(d) if pattern[i] != 0)
            u = np.zeros(d)
            if free:
                idx, fac = self._pattern_factor(free)
                u[idx] = scipy.linalg.cho_solve(fac, -(q[idx] + lam * s[idx]))
                if np.any(u[idx] * s[idx] < -1e-12):
                    continue
            score = self._score(u, q)
            if score < best_score:
                best, best_score = u, score
        return best

    def _minimize_box(self, q: np.ndarray) -> np.ndarray:
        lo, hi = self.fn.lo, self.fn.hi
        d = q.size
        best, best_score = None, math.inf
        for pattern in itertools.product((0, 1, 2), repeat=d):
            u = np.where(np.array(pattern) == 0, lo, hi)
            u = np.asarray(u, dtype=float).copy()
            free = tuple(i for i in range(d) if pattern[i] == 1)
            fixed = [i for i in range(d) if pattern[i] != 1]
            if free:
                idx, fac = self._pattern_factor(free)
                rhs = -q[idx]
                if fixed:
                    rhs -= self.Q[np.ix_(idx, np.array(fixed))] @ u[np.array(fixed)]
                u[idx] = scipy.linalg.cho_solve(fac, rhs)
                if np.any(u[idx] < lo[idx] - 1e-12) or np.any(u[idx] > hi[idx] + 1e-12):
                    continue
            score = self._score(u, q)
            if score < best_score:
                best, best_score = u, score
        return best


def minimize_prox_quadratic(fn: ProxFriendlyFunction | None, Q, q) -> np.ndarray:
    """One-shot exact solve of min fn(u) + u^T Q u / 2 + q^T u."""
    return _ProxQP(fn, np.asarray(Q, dtype=float)).minimize(np.asarray(q, dtype=float))


class CompositeQuadraticSolver:
    """Exact minimizer of theta(u_1) + u^T M u / 2 + w^T u over all blocks.

    The quadratic is reduced to block 1 by a Schur complement (the
    remaining coordinates are eliminated in closed form), after which a
    single finitely-terminating prox solve on block 1 finishes the job.
    Factorizations depend only on M and are cached across calls.
    """

    def __init__(self, structure: BlockStructure, M: BlockOperator | np.ndarray,
                 theta: ProxFriendlyFunction | None):
        mat = M.matrix if isinstance(M, BlockOperator) else np.asarray(M, dtype=float)
        if mat.shape != (structure.total_dim, structure.total_dim):
            raise DimensionMismatchError("quadratic matrix does not match the structure")
        self.structure = structure
        self.M = np.array(mat)
        self.theta = theta if (theta is not None and theta.kind != "zero") else None
        if self.theta is None:
            self._full = spd_factor(self.M, "composite quadratic")
        else:
            sl1 = structure.block_slice(0)
            rest = np.r_[0:0] if structure.nblocks == 1 else np.r_[sl1.stop:structure.total_dim]
            self._sl1 = sl1
            self._rest = rest
            if rest.size:
                M_rr = self.M[np.ix_(rest, rest)]
                M_r1 = self.M[np.ix_(rest, np.r_[sl1])]
                self._rr = spd_factor(M_rr, "eliminated-block quadratic")
                self._cross = M_r1
                schur = (self.M[sl1, sl1] - M_r1.T @ scipy.linalg.cho_solve(self._rr, M_r1))
            else:
                schur = self.M[sl1, sl1]
            self._qp = _ProxQP(self.theta, (schur + schur.T) / 2.0)

    def minimize(self, w) -> np.ndarray:
        w = np.asarray(w, dtype=float).reshape(-1)
        if self.theta is None:
            return scipy.linalg.cho_solve(self._full, -w)
        sl1 = self._sl1
        rest = self._rest
        u = np.zeros(self.structure.total_dim)
        if rest.size:
            back = scipy.linalg.cho_solve(self._rr, w[rest])
            q1 = w[sl1] - self._cross.T @ back
            u[sl1] = self._qp.minimize(q1)
            u[rest] = -scipy.linalg.cho_solve(
                self._rr, w[rest] + self._cross @ u[sl1])
        else:
            u[sl1] = self._qp.minimize(w[sl1])
        return u


@dataclass(frozen=True)
class SmoothConvexFunction:
    """Convex quadratic with explicit curvature upper and lower bounds.

    value(x) = x^T Q x / 2 + lin^T x + const.  The upper curvature bound
    is either Q itself ("tight") or ||Q|| times the identity ("loose");
    the lower bound is zero ("zero") or the smallest eigenvalue of Q
    times the identity ("eig").
    """

    Q: BlockOperator
    lin: np.ndarray
    const: float = 0.0
    majorizer_mode: str = "tight"
    minorizer_mode: str = "zero"

    def __post_init__(self):
        if not self.Q.self_adjoint:
            raise ValueError("smooth quadratic needs a self-adjoint Q")
        lin = _vector_data(self.lin, self.Q.row_structure).copy()
        lin.flags.writeable = False
        object.__setattr__(self, "lin", lin)
        if self.majorizer_mode not in ("tight", "loose"):
            raise ValueError(f"unknown majorizer mode {self.majorizer_mode!r}")
        if self.minorizer_mode not in ("zero", "eig"):
            raise ValueError(f"unknown minorizer mode {self.minorizer_mode!r}")
        if min_eig(self.Q) < -1e-10 * max(1.0, spectral_norm(self.Q)):
            raise NotPositiveDefiniteError("smooth quadratic must be convex (Q PSD)")

    @property
    def structure(self) -> BlockStructure:
        return self.Q.row_structure

    @cached_property
    def sigma_hat(self) -> BlockOperator:
        """Curvature upper bound used by the majorized surrogates."""
        if self.majorizer_mode == "tight":
            return self.Q
        return spectral_norm(self.Q) * BlockOperator.identity(self.structure)

    @cached_property
    def sigma_low(self) -> BlockOperator:
        """Curvature lower bound certifying strong convexity."""
        if self.minorizer_mode == "zero":
            return BlockOperator.zeros(self.structure)
        return max(min_eig(self.Q), 0.0) * BlockOperator.identity(self.structure)

    def value(self, x) -> float:
        x = _vector_data(x, self.structure)
        return float(0.5 * x @ (self.Q.matrix @ x) + self.lin @ x + self.const)

    def gradient(self, x) -> np.ndarray:
        x = _vector_data(x, self.structure)
        return self.Q.matrix @ x + self.lin

    def quadratic_upper(self, x, anchor) -> float:
        """Majorizing quadratic model around the anchor, evaluated at x."""
        x = _vector_data(x, self.structure)
        a = _vector_data(anchor, self.structure)
        d = x - a
        return float(self.value(a) + self.gradient(a) @ d
                     + 0.5 * d @ (self.sigma_hat.matrix @ d))

    def quadratic_lower(self, x, anchor) -> float:
        x = _vector_data(x, self.structure)
        a = _vector_data(anchor, self.structure)
        d = x - a
        return float(self.value(a) + self.gradient(a) @ d
                     + 0.5 * d @ (self.sigma_low.matrix @ d))


@dataclass(eq=False)
class ProblemSpec:
    """Full problem instance.

    A maps the constraint space into the x space (so the constraint
    reads A^T x + B^T y = c), B likewise for y.  p1 and q1 act on the
    first block of each side.
    """

    x_structure: BlockStructure
    y_structure: BlockStructure
    z_dim: int
    p1: ProxFriendlyFunction
    q1: ProxFriendlyFunction
    f: SmoothConvexFunction
    g: SmoothConvexFunction
    A: BlockOperator
    B: BlockOperator
    c: np.ndarray

    def __post_init__(self):
        self.z_dim = int(self.z_dim)
        z_struct = BlockStructure.single(self.z_dim)
        c = _vector_data(self.c, z_struct).copy()
        c.flags.writeable = False
        self.c = c
        if self.f.structure != self.x_structure or self.g.structure != self.y_structure:
            raise DimensionMismatchError("smooth function structures do not match x/y")
        if self.A.row_structure != self.x_structure or self.A.col_structure.total_dim != self.z_dim:
            raise DimensionMismatchError("A must map the constraint space into x")
        if self.B.row_structure != self.y_structure or self.B.col_structure.total_dim != self.z_dim:
            raise DimensionMismatchError("B must map the constraint space into y")
        if self.p1.dim != self.x_structure.block_dims[0]:
            raise DimensionMismatchError("p1 dimension != first x block")
        if self.q1.dim != self.y_structure.block_dims[0]:
            raise DimensionMismatchError("q1 dimension != first y block")

    @property
    def m(self) -> int:
        return self.x_structure.nblocks

    @property
    def n(self) -> int:
        return self.y_structure.nblocks

    @cached_property
    def AAt(self) -> BlockOperator:
        return BlockOperator(self.x_structure, self.x_structure,
                             self.A.matrix @ self.A.matrix.T, self_adjoint=True)

    @cached_property
    def BBt(self) -> BlockOperator:
        return BlockOperator(self.y_structure, self.y_structure,
                             self.B.matrix @ self.B.matrix.T, self_adjoint=True)

    def residual(self, x, y) -> np.ndarray:
        """Constraint residual A^T x + B^T y - c."""
        x = _vector_data(x, self.x_structure)
        y = _vector_data(y, self.y_structure)
        return self.A.matrix.T @ x + self.B.matrix.T @ y - self.c

    def objective(self, x, y) -> float:
        x = _vector_data(x, self.x_structure)
        y = _vector_data(y, self.y_structure)
        x1 = x[self.x_structure.block_slice(0)]
        y1 = y[self.y_structure.block_slice(0)]
        return (self.p1.value(x1) + self.f.value(x)
                + self.q1.value(y1) + self.g.value(y))

    def feasible_start(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Zero start projected into the domains of p and q."""
        x0 = np.zeros(self.x_structure.total_dim)
        y0 = np.zeros(self.y_structure.total_dim)
        sl = self.x_structure.block_slice(0)
        x0[sl] = self.p1.prox(1.0, x0[sl])
        sl = self.y_structure.block_slice(0)
        y0[sl] = self.q1.prox(1.0, y0[sl])
        return x0, y0, np.zeros(self.z_dim)


@dataclass(frozen=True)
class KKTResidual:
    """Relatively scaled first-order optimality residuals."""

    primal: float
    dual_x: float
    dual_y: float

    @property
    def total(self) -> float:
        return max(self.primal, self.dual_x, self.dual_y)


def _natural_map_residual(structure: BlockStructure, fn: ProxFriendlyFunction,
                          v: np.ndarray, grad: np.ndarray) -> float:
    """Norm of v - prox_p(v - grad) where p acts on block 1 only."""
    step = v - grad
    sl = structure.block_slice(0)
    proxed = step.copy()
    proxed[sl] = fn.prox(1.0, step[sl])
    return float(np.linalg.norm(v - proxed))


def kkt_residual(spec: ProblemSpec, x, y, z) -> KKTResidual:
    """Natural-map optimality residuals with (1 + norm) relative scaling."""
    x = _vector_data(x, spec.x_structure)
    y = _vector_data(y, spec.y_structure)
    z = np.asarray(z, dtype=float).reshape(-1)
    if z.size != spec.z_dim:
        raise DimensionMismatchError(f"z has length {z.size}, expected {spec.z_dim}")
    primal = float(np.linalg.norm(spec.residual(x, y))) / (1.0 + float(np.linalg.norm(spec.c)))
    gx = spec.f.gradient(x) + spec.A.matrix @ z
    dual_x = _natural_map_residual(spec.x_structure, spec.p1, x, gx) / (1.0 + float(np.linalg.norm(x)))
    gy = spec.g.gradient(y) + spec.B.matrix @ z
    dual_y = _natural_map_residual(spec.y_structure, spec.q1, y, gy) / (1.0 + float(np.linalg.norm(y)))
    return KKTResidual(primal=primal, dual_x=dual_x, dual_y=dual_y)


def majorized_aug_lagrangian(spec: ProblemSpec, sigma: float, x, y, anchor,
                             S: BlockOperator | None = None,
                             T: BlockOperator | None = None) -> float:
    """Majorized augmented Lagrangian at (x, y) around the given anchor.

    The anchor is an (x', y', z') triple.  When S and T are supplied the
    proximal variant is evaluated, adding half the squared S- and
    T-weighted distances to the anchor.  Domain violations of the
    nonsmooth terms yield +inf.
    """
    x = _vector_data(x, spec.x_structure)
    y = _vector_data(y, spec.y_structure)
    xa, ya, za = anchor
    xa = _vector_data(xa, spec.x_structure)
    ya = _vector_data(ya, spec.y_structure)
    za = np.asarray(za, dtype=float).reshape(-1)
    x1 = x[spec.x_structure.block_slice(0)]
    y1 = y[spec.y_structure.block_slice(0)]
    p_val = spec.p1.value(x1)
    q_val = spec.q1.value(y1)
    if math.isinf(p_val) or math.isinf(q_val):
        return math.inf
    r = spec.residual(x, y)
    total = (p_val + spec.f.quadratic_upper(x, xa)
             + q_val + spec.g.quadratic_upper(y, ya)
             + float(za @ r) + 0.5 * sigma * float(r @ r))
    if S is not None:
        dx = x - xa
        total += 0.5 * float(dx @ (S.matrix @ dx))
    if T is not None:
        dy = y - ya
        total += 0.5 * float(dy @ (T.matrix @ dy))
    return float(total)
