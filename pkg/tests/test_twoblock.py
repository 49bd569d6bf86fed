import numpy as np
import pytest

from sgsadmm.blockalg import BlockOperator, min_eig
from sgsadmm.instances import make_preset, oracle_solve
from sgsadmm.model import minimize_prox_quadratic
from sgsadmm.schedules import ToleranceSchedule
from sgsadmm.twoblock import (
    GOLDEN_RATIO,
    AdmissibilityError,
    TwoBlockConfig,
    TwoBlockSolver,
    default_prox_terms,
    derive_constants,
    solve,
    step_constants,
)


def test_step_constants_tau_one():
    alpha, alpha_hat, beta = step_constants(1.0)
    assert abs(alpha - 0.75) <= 1e-15
    assert abs(alpha_hat - 0.25) <= 1e-15
    assert abs(beta - 0.5) <= 1e-15


def test_step_constants_tau_three_halves():
    alpha, alpha_hat, beta = step_constants(1.5)
    assert alpha == pytest.approx(0.95, abs=1e-12)
    assert alpha_hat == pytest.approx(11.0 / 30.0, abs=1e-12)
    assert beta == pytest.approx(1.0 / 12.0, abs=1e-12)


def test_step_constants_near_golden_ratio():
    _, _, beta = step_constants(1.618)
    assert 0.0 < beta < 2e-3


def test_step_constants_ranges():
    for tau in np.linspace(0.05, 1.615, 50):
        alpha, alpha_hat, beta = step_constants(float(tau))
        assert 0.0 < alpha < 1.0
        assert 0.0 < alpha_hat < 1.0
        assert beta > 0.0


def test_derive_constants_admissibility_errors():
    spec = make_preset("tiny")
    Zx = BlockOperator.zeros(spec.x_structure)
    Zy = BlockOperator.zeros(spec.y_structure)
    bad_S = -1.0 * spec.f.sigma_hat
    with pytest.raises(AdmissibilityError, match="Sigma_hat_f/2"):
        derive_constants(spec, 1.0, 1.0, bad_S, Zy)
    with pytest.raises(AdmissibilityError, match="tau"):
        derive_constants(spec, 1.0, GOLDEN_RATIO, Zx, Zy)
    with pytest.raises(AdmissibilityError, match="sigma"):
        derive_constants(spec, 0.0, 1.0, Zx, Zy)


def test_derive_constants_operators_positive():
    spec = make_preset("threeby2")
    Zx = BlockOperator.zeros(spec.x_structure)
    Zy = BlockOperator.zeros(spec.y_structure)
    con = derive_constants(spec, 1.0, 1.0, Zx, Zy)
    for op in (con.F, con.G, con.M, con.N):
        assert min_eig(op) > 0.0
    assert np.allclose(con.M.matrix,
                       spec.f.sigma_hat.matrix + spec.AAt.matrix, atol=1e-14)


def test_hand_stepped_tiny_iteration():
    spec = make_preset("tiny")
    solver = TwoBlockSolver(spec, TwoBlockConfig(sigma=1.0, tau=1.0))
    x, y, z, r, *_ = solver.step(np.zeros(1), np.zeros(1), np.zeros(1), 0.0)
    assert x[0] == pytest.approx(0.5, abs=1e-15)
    assert y[0] == pytest.approx(0.25, abs=1e-15)
    assert z[0] == pytest.approx(-0.25, abs=1e-15)
    assert r[0] == pytest.approx(-0.25, abs=1e-15)


def test_fixed_point_is_stationary():
    spec = make_preset("tiny")
    solver = TwoBlockSolver(spec, TwoBlockConfig(sigma=1.0, tau=1.0))
    x, y, z, r, d_x, d_y, *_ = solver.step(
        np.array([0.5]), np.array([0.5]), np.array([-0.5]), 0.0)
    assert abs(x[0] - 0.5) <= 1e-15
    assert abs(y[0] - 0.5) <= 1e-15
    assert abs(z[0] + 0.5) <= 1e-15
    assert abs(r[0]) <= 1e-15
    assert np.all(d_x == 0.0) and np.all(d_y == 0.0)
    result = solver.solve(init=(np.array([0.5]), np.array([0.5]), np.array([-0.5])))
    assert result.converged and result.iterations == 0


@pytest.mark.parametrize("tau", [1.0, 1.5])
def test_solve_tiny_converges_to_solution(tau):
    spec = make_preset("tiny")
    result = solve(spec, TwoBlockConfig(sigma=1.0, tau=tau, stop_tol=1e-8))
    assert result.converged and result.iterations <= 200
    assert np.max(np.abs(result.final.x - 0.5)) <= 1e-7
    assert np.max(np.abs(result.final.y - 0.5)) <= 1e-7
    assert np.max(np.abs(result.final.z + 0.5)) <= 1e-7


def test_indefinite_proximal_term_still_converges():
    spec = make_preset("tiny")
    S = -0.25 * spec.f.sigma_hat
    assert min_eig(S) < 0.0
    result = solve(spec, TwoBlockConfig(sigma=1.0, tau=1.0, S=S, stop_tol=1e-8))
    assert result.converged
    assert np.max(np.abs(result.final.x - 0.5)) <= 1e-7


def test_dual_update_fixed_when_residual_zero():
    spec = make_preset("l1pair")
    xs, ys, zs = oracle_solve(spec)
    solver = TwoBlockSolver(spec, TwoBlockConfig(sigma=1.0, tau=1.618))
    _, _, z1, r1, *_ = solver.step(xs, ys, zs, 0.0)
    assert np.linalg.norm(r1) <= 1e-14
    assert np.allclose(z1, zs, atol=1e-13)


def test_certificate_discipline_in_tilted_mode():
    spec = make_preset("threeby2")
    cfg = TwoBlockConfig(sigma=1.0, tau=1.0, stop_tol=1e-8,
                         eps_schedule=ToleranceSchedule.geometric(1e-2, 0.5),
                         tilt_seed=5)
    result = solve(spec, cfg)
    assert result.converged
    steps = [rec for rec in result.records if rec.d_x is not None]
    assert any(rec.cert_x > 0 for rec in steps[:3])
    for rec in steps:
        assert rec.cert_x <= rec.eps * (1.0 + 1e-9) + 1e-14
        assert rec.cert_y <= rec.eps * (1.0 + 1e-9) + 1e-14


def test_subgradient_membership_of_certificates():
    spec = make_preset("threeby2")
    cfg = TwoBlockConfig(sigma=1.0, tau=1.0, stop_tol=1e-8,
                         eps_schedule=ToleranceSchedule.geometric(1e-2, 0.5),
                         tilt_seed=5)
    solver = TwoBlockSolver(spec, cfg)
    result = solver.solve()
    recs = result.records
    sl = spec.x_structure.block_slice(0)
    for k in range(min(10, len(recs) - 1)):
        rec, nxt = recs[k], recs[k + 1]
        w_x = (solver._Cx @ rec.x + spec.f.lin
               + spec.A.matrix @ (rec.z + cfg.sigma * (spec.B.matrix.T @ rec.y - spec.c)))
        # d_x minus the smooth gradient at the new point lies in the
        # subdifferential of the block-1 nonsmooth term.
        g = rec.d_x - (solver.constants.M.matrix @ nxt.x + w_x)
        assert spec.p1.subgradient_distance(nxt.x[sl], g[sl]) <= 1e-8
        assert np.linalg.norm(g[sl.stop:]) <= 1e-8


def _textbook_admm_tiny(spec, sigma, tau, iters):
    # Independent route: solve each subproblem by a direct linear solve
    # of its stationarity system, no majorization bookkeeping.
    Qf, lf = spec.f.Q.matrix, spec.f.lin
    Qg, lg = spec.g.Q.matrix, spec.g.lin
    A, B, c = spec.A.matrix, spec.B.matrix, spec.c
    x = np.zeros(Qf.shape[0])
    y = np.zeros(Qg.shape[0])
    z = np.zeros(c.size)
    out = [(x, y, z)]
    for _ in range(iters):
        x = np.linalg.solve(Qf + sigma * A @ A.T,
                            -(lf + A @ (z + sigma * (B.T @ y - c))))
        y = np.linalg.solve(Qg + sigma * B @ B.T,
                            -(lg + B @ (z + sigma * (A.T @ x - c))))
        z = z + tau * sigma * (A.T @ x + B.T @ y - c)
        out.append((x, y, z))
    return out


def _textbook_admm_l1pair(spec, sigma, tau, iters):
    # Scalar route with an explicit soft threshold for the x update.
    lam = spec.p1.lam
    a = 1.0 + sigma  # quadratic coefficient of the scalar x subproblem
    x = np.zeros(1)
    y = np.zeros(1)
    z = np.zeros(1)
    out = [(x, y, z)]
    for _ in range(iters):
        v = 2.0 - z[0] - sigma * (y[0] - 2.0)  # negative linear coefficient
        x = np.array([np.sign(v) * max(abs(v) - lam, 0.0) / a])
        y = np.array([-(z[0] + sigma * (x[0] - 2.0)) / (1.0 + sigma)])
        z = z + tau * sigma * (x + y - 2.0)
        out.append((x, y, z))
    return out


@pytest.mark.parametrize("name,textbook", [
    ("tiny", _textbook_admm_tiny), ("l1pair", _textbook_admm_l1pair)])
def test_exact_mode_reduces_to_classic_admm(name, textbook):
    spec = make_preset(name)
    sigma, tau, iters = 1.0, 1.0, 40
    solver = TwoBlockSolver(spec, TwoBlockConfig(sigma=sigma, tau=tau,
                                                 stop_tol=0.0, max_iter=iters))
    result = solver.solve(init=(np.zeros(1), np.zeros(1), np.zeros(1)))
    reference = textbook(spec, sigma, tau, iters)
    assert len(result.records) == iters + 1
    for rec, (x, y, z) in zip(result.records, reference):
        assert np.max(np.abs(rec.x - x)) <= 1e-10
        assert np.max(np.abs(rec.y - y)) <= 1e-10
        assert np.max(np.abs(rec.z - z)) <= 1e-10


def test_default_prox_terms_modes():
    spec = make_preset("threeby2")
    S, T = default_prox_terms(spec, 1.0, "zero")
    assert np.all(S.matrix == 0.0) and np.all(T.matrix == 0.0)
    S, T = default_prox_terms(spec, 1.0, "shift:0.7")
    assert np.allclose(S.matrix, 0.7 * np.eye(S.matrix.shape[0]))
    S, T = default_prox_terms(spec, 1.0, "stress")
    assert min_eig(S) < 0.0
    derive_constants(spec, 1.0, 1.0, S, T)
    with pytest.raises(ValueError):
        default_prox_terms(spec, 1.0, "bogus")
