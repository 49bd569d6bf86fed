import math

import numpy as np
import pytest

from sgsadmm.blockalg import BlockOperator, BlockStructure, weighted_inner, weighted_norm
from sgsadmm.instances import make_preset
from sgsadmm.model import (
    CompositeQuadraticSolver,
    ProxFriendlyFunction,
    SmoothConvexFunction,
    kkt_residual,
    majorized_aug_lagrangian,
    minimize_prox_quadratic,
    prox,
)

from _helpers import random_spd, random_theta


def test_prox_zero_is_identity():
    fn = ProxFriendlyFunction.zero(3)
    v = np.array([1.0, -2.0, 0.5])
    assert np.array_equal(prox(fn, 0.7, v), v)


def test_prox_l1_soft_threshold():
    fn = ProxFriendlyFunction.l1(2, 1.0)
    out = prox(fn, 1.0, [2.0, -0.5])
    assert np.allclose(out, [1.0, 0.0], atol=1e-15)
    # Optimality: (v - u)/t is a subgradient at the prox output.
    cert = (np.array([2.0, -0.5]) - out) / 1.0
    assert fn.subgradient_distance(out, cert) <= 1e-12


def test_prox_box_projection():
    fn = ProxFriendlyFunction.box([0.0, 0.0, 0.0], [1.0, 1.0, 1.0])
    v = np.array([-3.0, 0.4, 7.0])
    out = prox(fn, 2.0, v)
    assert np.allclose(out, [0.0, 0.4, 1.0], atol=1e-15)
    cert = (v - out) / 2.0
    assert fn.subgradient_distance(out, cert) <= 1e-12


def test_prox_optimality_random():
    rng = np.random.default_rng(0)
    for kind in ("zero", "l1", "box"):
        for _ in range(50):
            fn = random_theta(rng, 3, kind)
            t = float(rng.uniform(0.1, 3.0))
            v = rng.standard_normal(3) * 2.0
            u = prox(fn, t, v)
            assert fn.subgradient_distance(u, (v - u) / t) <= 1e-10


def test_prox_firm_nonexpansive():
    rng = np.random.default_rng(1)
    for kind in ("zero", "l1", "box"):
        fn = random_theta(rng, 4, kind)
        for _ in range(100):
            v1 = rng.standard_normal(4) * 3.0
            v2 = rng.standard_normal(4) * 3.0
            d = np.linalg.norm(prox(fn, 1.3, v1) - prox(fn, 1.3, v2))
            assert d <= np.linalg.norm(v1 - v2) + 1e-12


@pytest.mark.parametrize("kind", ["zero", "l1", "box"])
def test_minimize_prox_quadratic_is_optimal(kind):
    rng = np.random.default_rng(2)
    for _ in range(40):
        d = int(rng.integers(1, 5))
        fn = random_theta(rng, d, kind)
        Q = random_spd(rng, d)
        q = rng.standard_normal(d)
        u = minimize_prox_quadratic(fn, Q, q)
        # Stationarity certificate.
        assert fn.subgradient_distance(u, -(Q @ u + q)) <= 1e-9
        # No nearby point does better.
        obj = fn.value(u) + 0.5 * u @ Q @ u + q @ u
        for _ in range(25):
            w = u + rng.standard_normal(d) * 0.3
            if fn.kind == "box":
                w = np.clip(w, fn.lo, fn.hi)
            other = fn.value(w) + 0.5 * w @ Q @ w + q @ w
            assert obj <= other + 1e-9


def test_composite_quadratic_solver_matches_one_shot():
    rng = np.random.default_rng(3)
    s = BlockStructure((2, 3, 1))
    for kind in ("zero", "l1", "box"):
        fn = random_theta(rng, 2, kind)
        M = random_spd(rng, 6)
        solver = CompositeQuadraticSolver(s, M, fn)
        for _ in range(10):
            w = rng.standard_normal(6)
            u = solver.minimize(w)
            grad = M @ u + w
            # Stationarity: block 1 subgradient, zero gradient elsewhere.
            assert fn.subgradient_distance(u[:2], -grad[:2]) <= 1e-9
            assert np.linalg.norm(grad[2:]) <= 1e-9


def _random_quadratic(rng, dims, majorizer="tight", minorizer="zero"):
    s = BlockStructure(tuple(dims))
    n = s.total_dim
    Q = BlockOperator(s, s, random_spd(rng, n, shift=0.1), self_adjoint=True)
    return SmoothConvexFunction(Q=Q, lin=rng.standard_normal(n), const=float(rng.normal()),
                                majorizer_mode=majorizer, minorizer_mode=minorizer)


@pytest.mark.parametrize("majorizer,minorizer", [("tight", "zero"), ("loose", "eig")])
def test_majorization_sandwich(majorizer, minorizer):
    rng = np.random.default_rng(4)
    fn = _random_quadratic(rng, (2, 3), majorizer, minorizer)
    n = fn.structure.total_dim
    X = rng.standard_normal((10000, n)) * 2.0
    Xa = rng.standard_normal((10000, n)) * 2.0
    for x, a in zip(X[:200], Xa[:200]):
        val = fn.value(x)
        scale = 1e-10 * (1.0 + abs(val))
        assert fn.quadratic_lower(x, a) <= val + scale
        assert val <= fn.quadratic_upper(x, a) + scale
    # Vectorized check over the full sample.
    Q, Sh, Sl = fn.Q.matrix, fn.sigma_hat.matrix, fn.sigma_low.matrix
    D = X - Xa
    grad_a = Xa @ Q + fn.lin
    base = (0.5 * np.einsum("ij,ij->i", Xa @ Q, Xa) + Xa @ fn.lin + fn.const
            + np.einsum("ij,ij->i", grad_a, D))
    vals = 0.5 * np.einsum("ij,ij->i", X @ Q, X) + X @ fn.lin + fn.const
    upper = base + 0.5 * np.einsum("ij,ij->i", D @ Sh, D)
    lower = base + 0.5 * np.einsum("ij,ij->i", D @ Sl, D)
    scale = 1e-10 * (1.0 + np.abs(vals))
    assert np.all(lower <= vals + scale)
    assert np.all(vals <= upper + scale)


def test_gradient_curvature_inequality():
    rng = np.random.default_rng(5)
    fn = _random_quadratic(rng, (3,), "loose")
    Q, Sh = fn.Q.matrix, fn.sigma_hat.matrix
    for _ in range(2000):
        u, up, v = (rng.standard_normal(3) * 2.0 for _ in range(3))
        lhs = float((Q @ (u - up)) @ (v - up))
        rhs = -0.25 * float((v - u) @ Sh @ (v - u))
        assert lhs >= rhs - 1e-10 * (1.0 + abs(lhs) + abs(rhs))


def test_triangle_identity():
    rng = np.random.default_rng(6)
    s = BlockStructure((2, 2))
    H = BlockOperator(s, s, random_spd(rng, 4), self_adjoint=True)
    for _ in range(100):
        u = rng.standard_normal(4)
        v = rng.standard_normal(4)
        ip = weighted_inner(u, v, H)
        a = 0.5 * (weighted_norm(u, H) ** 2 + weighted_norm(v, H) ** 2
                   - weighted_norm(u - v, H) ** 2)
        b = 0.5 * (weighted_norm(u + v, H) ** 2 - weighted_norm(u, H) ** 2
                   - weighted_norm(v, H) ** 2)
        scale = 1e-12 * (1.0 + abs(ip))
        assert abs(ip - a) <= 20 * scale
        assert abs(ip - b) <= 20 * scale


def test_kkt_residual_all_zeros_on_tiny():
    spec = make_preset("tiny")
    res = kkt_residual(spec, [0.0], [0.0], [0.0])
    assert res.primal == pytest.approx(0.5, abs=1e-15)
    assert res.total == pytest.approx(0.5, abs=1e-15)


def test_kkt_residual_at_solution_and_wrong_dual():
    spec = make_preset("tiny")
    res = kkt_residual(spec, [0.5], [0.5], [-0.5])
    assert res.total <= 1e-12
    wrong = kkt_residual(spec, [0.5], [0.5], [0.5])
    assert wrong.primal <= 1e-12
    assert wrong.dual_x > 0.1 and wrong.dual_y > 0.1


def test_aug_lagrangian_feasible_anchor():
    spec = make_preset("tiny")
    x, y = np.array([0.25]), np.array([0.75])  # feasible: x + y = 1
    anchor = (x, y, np.zeros(1))
    val = majorized_aug_lagrangian(spec, 1.0, x, y, anchor)
    expected = spec.objective(x, y)
    assert val == pytest.approx(expected, abs=1e-14)
    assert majorized_aug_lagrangian(spec, 2.0, x, y, anchor) == pytest.approx(expected, abs=1e-14)


def test_aug_lagrangian_term_by_term():
    spec = make_preset("threeby2")
    rng = np.random.default_rng(7)
    x = rng.standard_normal(spec.x_structure.total_dim)
    y = rng.standard_normal(spec.y_structure.total_dim)
    xa = rng.standard_normal(x.size)
    ya = rng.standard_normal(y.size)
    za = rng.standard_normal(spec.z_dim)
    sigma = 1.7
    S = BlockOperator.identity(spec.x_structure) * 0.3
    T = BlockOperator.identity(spec.y_structure) * 0.2
    r = spec.residual(x, y)
    expected = (spec.p1.value(x[:2]) + spec.f.quadratic_upper(x, xa)
                + spec.q1.value(y[:2]) + spec.g.quadratic_upper(y, ya)
                + za @ r + 0.5 * sigma * r @ r
                + 0.15 * (x - xa) @ (x - xa) + 0.1 * (y - ya) @ (y - ya))
    got = majorized_aug_lagrangian(spec, sigma, x, y, (xa, ya, za), S=S, T=T)
    assert got == pytest.approx(expected, rel=1e-12)


def test_aug_lagrangian_domain_sentinel():
    spec = make_preset("boxcorner")
    x = np.array([5.0, 0.5])  # violates the box on block 1
    y = np.zeros(1)
    anchor = (np.zeros(2), y, np.zeros(1))
    assert majorized_aug_lagrangian(spec, 1.0, x, y, anchor) == math.inf
