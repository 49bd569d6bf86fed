"""Deterministic test-problem generators and an independent ground truth.

The generated instances are always feasible by construction (the right
hand side is built from sampled interior points), so a primal-dual
solution exists.  Ground truth comes from enumerating the finitely many
activity patterns of the first-order conditions and solving the
resulting linear systems, which is independent of the iterative solvers
and auditable at desk scale.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .blockalg import BlockOperator, BlockStructure
from .model import (
    ProblemSpec,
    ProxFriendlyFunction,
    SmoothConvexFunction,
    kkt_residual,
)

__all__ = [
    "InstancePreset",
    "PRESET_NAMES",
    "generate",
    "make_preset",
    "oracle_solve",
    "OracleUnsupportedError",
    "random_orthogonal",
    "spd_with_spectrum",
]

# Pattern enumeration explodes beyond this many candidates.
_MAX_PATTERNS = 600_000


class OracleUnsupportedError(ValueError):
    """The ground-truth enumeration would be too large or is impossible."""


def random_orthogonal(rng: np.random.Generator, n: int) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.sign(np.diag(r))


def spd_with_spectrum(rng: np.random.Generator, n: int, lo: float, hi: float) -> np.ndarray:
    """SPD matrix with eigenvalues log-uniform in [lo, hi]."""
    if not 0 < lo <= hi:
        raise ValueError("need 0 < lo <= hi for the eigenvalue range")
    eigs = np.exp(rng.uniform(math.log(lo), math.log(hi), size=n))
    v = random_orthogonal(rng, n)
    mat = (v * eigs) @ v.T
    return (mat + mat.T) / 2.0


@dataclass(frozen=True)
class InstancePreset:
    """Knobs for the random instance family.

    p1 / q1 are ("zero",), ("l1", lam) or ("box", lo, hi) with scalar
    bounds broadcast over the first block.
    """

    name: str
    x_dims: tuple[int, ...]
    y_dims: tuple[int, ...]
    z_dim: int
    p1: tuple = ("zero",)
    q1: tuple = ("zero",)
    f_eig_range: tuple[float, float] = (0.5, 2.0)
    g_eig_range: tuple[float, float] = (0.5, 2.0)
    lin_scale: float = 0.5
    coupling_scale: float = 1.0
    majorizer_mode: str = "tight"
    minorizer_mode: str = "zero"
    seed: int = 0


def _make_prox(kind_tuple: tuple, dim: int) -> ProxFriendlyFunction:
    kind = kind_tuple[0]
    if kind == "zero":
        return ProxFriendlyFunction.zero(dim)
    if kind == "l1":
        return ProxFriendlyFunction.l1(dim, kind_tuple[1])
    if kind == "box":
        lo = np.full(dim, float(kind_tuple[1]))
        hi = np.full(dim, float(kind_tuple[2]))
        return ProxFriendlyFunction.box(lo, hi)
    raise ValueError(f"unknown prox kind {kind!r}")


def _interior_point(rng: np.random.Generator, fn: ProxFriendlyFunction,
                    total: int, structure: BlockStructure) -> np.ndarray:
    pt = rng.standard_normal(total) * 0.5
    if fn.kind == "box":
        sl = structure.block_slice(0)
        width = fn.hi - fn.lo
        frac = rng.uniform(0.25, 0.75, size=fn.dim)
        pt[sl] = fn.lo + frac * width
    return pt


def generate(preset: InstancePreset) -> ProblemSpec:
    """Deterministically generate a dimension-consistent instance."""
    rng = np.random.default_rng(preset.seed)
    xs = BlockStructure(tuple(preset.x_dims))
    ys = BlockStructure(tuple(preset.y_dims))
    dim_x, dim_y, z = xs.total_dim, ys.total_dim, int(preset.z_dim)

    Qf = spd_with_spectrum(rng, dim_x, *preset.f_eig_range)
    Qg = spd_with_spectrum(rng, dim_y, *preset.g_eig_range)
    lf = preset.lin_scale * rng.standard_normal(dim_x)
    lg = preset.lin_scale * rng.standard_normal(dim_y)

    A = preset.coupling_scale * rng.standard_normal((dim_x, z)) / math.sqrt(max(dim_x, z))
    B = preset.coupling_scale * rng.standard_normal((dim_y, z)) / math.sqrt(max(dim_y, z))
    stacked = np.vstack([A, B])
    if np.linalg.matrix_rank(stacked) < z:
        raise ValueError("coupling maps are rank deficient; pick another seed")

    p1 = _make_prox(preset.p1, xs.block_dims[0])
    q1 = _make_prox(preset.q1, ys.block_dims[0])
    x_star = _interior_point(rng, p1, dim_x, xs)
    y_star = _interior_point(rng, q1, dim_y, ys)
    c = A.T @ x_star + B.T @ y_star

    f = SmoothConvexFunction(Q=BlockOperator(xs, xs, Qf, self_adjoint=True), lin=lf,
                             majorizer_mode=preset.majorizer_mode,
                             minorizer_mode=preset.minorizer_mode)
    g = SmoothConvexFunction(Q=BlockOperator(ys, ys, Qg, self_adjoint=True), lin=lg,
                             majorizer_mode=preset.majorizer_mode,
                             minorizer_mode=preset.minorizer_mode)
    return ProblemSpec(
        x_structure=xs, y_structure=ys, z_dim=z, p1=p1, q1=q1, f=f, g=g,
        A=BlockOperator(xs, BlockStructure.single(z), A),
        B=BlockOperator(ys, BlockStructure.single(z), B),
        c=c)


def _hand_instance(x_dims, y_dims, z_dim, Qf, lf, Qg, lg, A, B, c, p1, q1,
                   f_const=0.0) -> ProblemSpec:
    xs = BlockStructure(tuple(x_dims))
    ys = BlockStructure(tuple(y_dims))
    f = SmoothConvexFunction(Q=BlockOperator(xs, xs, Qf, self_adjoint=True),
                             lin=lf, const=f_const)
    g = SmoothConvexFunction(Q=BlockOperator(ys, ys, Qg, self_adjoint=True), lin=lg)
    return ProblemSpec(
        x_structure=xs, y_structure=ys, z_dim=z_dim, p1=p1, q1=q1, f=f, g=g,
        A=BlockOperator(xs, BlockStructure.single(z_dim), A),
        B=BlockOperator(ys, BlockStructure.single(z_dim), B),
        c=np.asarray(c, dtype=float))


def _tiny() -> ProblemSpec:
    # min x^2/2 + y^2/2 subject to x + y = 1; solution (0.5, 0.5, -0.5).
    return _hand_instance(
        (1,), (1,), 1, [[1.0]], [0.0], [[1.0]], [0.0], [[1.0]], [[1.0]], [1.0],
        ProxFriendlyFunction.zero(1), ProxFriendlyFunction.zero(1))


def _l1pair() -> ProblemSpec:
    # min |x| + (x-2)^2/2 + y^2/2 subject to x + y = 2; solution (1.5, 0.5, -0.5).
    return _hand_instance(
        (1,), (1,), 1, [[1.0]], [-2.0], [[1.0]], [0.0], [[1.0]], [[1.0]], [2.0],
        ProxFriendlyFunction.l1(1, 1.0), ProxFriendlyFunction.zero(1), f_const=2.0)


def _boxcorner() -> ProblemSpec:
    # Box-constrained first block whose solution pins x_1 at its upper bound.
    return _hand_instance(
        (2,), (1,), 1,
        np.eye(2), [-2.0, -0.5], [[1.0]], [0.0],
        [[1.0], [1.0]], [[1.0]], [1.2],
        ProxFriendlyFunction.box([0.0, 0.0], [1.0, 1.0]),
        ProxFriendlyFunction.zero(1))


def _threeby2() -> ProblemSpec:
    return generate(InstancePreset(
        name="threeby2", x_dims=(2, 2, 1), y_dims=(2, 1), z_dim=3,
        p1=("l1", 0.5), q1=("zero",),
        f_eig_range=(0.6, 2.5), g_eig_range=(0.6, 2.5),
        lin_scale=0.5, coupling_scale=0.8, seed=20240917))


def _loosebox() -> ProblemSpec:
    return generate(InstancePreset(
        name="loosebox", x_dims=(2, 1), y_dims=(2,), z_dim=2,
        p1=("zero",), q1=("box", -0.4, 0.6),
        f_eig_range=(0.5, 2.0), g_eig_range=(0.5, 2.0),
        lin_scale=0.7, coupling_scale=1.0,
        majorizer_mode="loose", seed=7))


_PRESETS = {
    "tiny": _tiny,
    "l1pair": _l1pair,
    "boxcorner": _boxcorner,
    "threeby2": _threeby2,
    "loosebox": _loosebox,
}

PRESET_NAMES = tuple(_PRESETS)


def make_preset(name: str) -> ProblemSpec:
    """Instantiate one of the shipped presets by name."""
    try:
        builder = _PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; available: {', '.join(PRESET_NAMES)}")
    return builder()


def _pattern_space(fn: ProxFriendlyFunction):
    if fn.kind == "zero":
        return [None]
    if fn.kind == "l1":
        return list(itertools.product((-1, 0, 1), repeat=fn.dim))
    return list(itertools.product((0, 1, 2), repeat=fn.dim))


def _fixed_values(fn: ProxFriendlyFunction, pattern):
    """(fixed_mask, values, stationarity-shift) for block-1 coordinates."""
    d = fn.dim
    fixed = np.zeros(d, dtype=bool)
    values = np.zeros(d)
    shift = np.zeros(d)
    if fn.kind == "zero" or pattern is None:
        return fixed, values, shift
    if fn.kind == "l1":
        for j, s in enumerate(pattern):
            if s == 0:
                fixed[j] = True
            else:
                shift[j] = fn.lam * s
        return fixed, values, shift
    for j, s in enumerate(pattern):
        if s == 0:
            fixed[j] = True
            values[j] = fn.lo[j]
        elif s == 2:
            fixed[j] = True
            values[j] = fn.hi[j]
    return fixed, values, shift


def oracle_solve(spec: ProblemSpec, tol: float = 1e-10):
    """Ground-truth KKT point by activity-pattern enumeration.

    For each combination of block-1 activity patterns the remaining
    stationarity plus feasibility equations are linear; every candidate
    is scored by its full KKT residual and the best one is returned,
    provided it clears the tolerance.
    """
    px_space = _pattern_space(spec.p1)
    py_space = _pattern_space(spec.q1)
    if len(px_space) * len(py_space) > _MAX_PATTERNS:
        raise OracleUnsupportedError(
            f"{len(px_space) * len(py_space)} activity patterns exceed the "
            f"enumeration limit {_MAX_PATTERNS}")
    dim_x = spec.x_structure.total_dim
    dim_y = spec.y_structure.total_dim
    z = spec.z_dim
    Qf, lf = spec.f.Q.matrix, spec.f.lin
    Qg, lg = spec.g.Q.matrix, spec.g.lin
    A, B = spec.A.matrix, spec.B.matrix
    slx = spec.x_structure.block_slice(0)
    sly = spec.y_structure.block_slice(0)

    best = None
    best_res = math.inf
    for pat_x in px_space:
        fx, vx, sx = _fixed_values(spec.p1, pat_x)
        fixed_x = np.zeros(dim_x, dtype=bool)
        fixed_x[slx] = fx
        val_x = np.zeros(dim_x)
        val_x[slx] = vx
        shift_x = np.zeros(dim_x)
        shift_x[slx] = sx
        free_x = ~fixed_x
        for pat_y in py_space:
            fy, vy, sy = _fixed_values(spec.q1, pat_y)
            fixed_y = np.zeros(dim_y, dtype=bool)
            fixed_y[sly] = fy
            val_y = np.zeros(dim_y)
            val_y[sly] = vy
            shift_y = np.zeros(dim_y)
            shift_y[sly] = sy
            free_y = ~fixed_y

            nfx, nfy = int(free_x.sum()), int(free_y.sum())
            n_unknown = nfx + nfy + z
            mat = np.zeros((n_unknown, n_unknown))
            rhs = np.zeros(n_unknown)
            # Stationarity for free x coordinates.
            mat[:nfx, :nfx] = Qf[np.ix_(free_x, free_x)]
            mat[:nfx, nfx + nfy:] = A[free_x, :]
            rhs[:nfx] = -(lf[free_x] + shift_x[free_x]
                          + Qf[np.ix_(free_x, fixed_x)] @ val_x[fixed_x])
            # Stationarity for free y coordinates.
            ry = slice(nfx, nfx + nfy)
            mat[ry, nfx:nfx + nfy] = Qg[np.ix_(free_y, free_y)]
            mat[ry, nfx + nfy:] = B[free_y, :]
            rhs[ry] = -(lg[free_y] + shift_y[free_y]
                        + Qg[np.ix_(free_y, fixed_y)] @ val_y[fixed_y])
            # Coupling constraint.
            rz = slice(nfx + nfy, n_unknown)
            mat[rz, :nfx] = A[free_x, :].T
            mat[rz, nfx:nfx + nfy] = B[free_y, :].T
            rhs[rz] = (spec.c - A[fixed_x, :].T @ val_x[fixed_x]
                       - B[fixed_y, :].T @ val_y[fixed_y])

            sol, *_ = np.linalg.lstsq(mat, rhs, rcond=None)
            x = np.array(val_x)
            x[free_x] = sol[:nfx]
            y = np.array(val_y)
            y[free_y] = sol[nfx:nfx + nfy]
            zz = sol[nfx + nfy:]
            res = kkt_residual(spec, x, y, zz).total
            if res < best_res:
                best, best_res = (x, y, zz), res
    if best is None or best_res > tol:
        raise OracleUnsupportedError(
            f"no activity pattern reached KKT residual {tol:.1e} "
            f"(best {best_res:.3e})")
    return best
