import numpy as np
import pytest

from sgsadmm.blockalg import BlockOperator, BlockStructure, min_eig
from sgsadmm.instances import make_preset, oracle_solve
from sgsadmm.model import ProblemSpec, ProxFriendlyFunction, SmoothConvexFunction
from sgsadmm.multiblock import (
    MultiBlockConfig,
    MultiBlockSolver,
    construct_operators,
    default_prox_terms,
    solve,
)
from sgsadmm.schedules import ToleranceSchedule
from sgsadmm.sweep import sgs_operator
from sgsadmm.twoblock import AdmissibilityError, TwoBlockConfig, TwoBlockSolver


def _single_block_spec(q=2.0, a=None):
    """One block per side; the x-side sweep quadratic is q + sigma * a^2."""
    xs = BlockStructure((1,))
    ys = BlockStructure((1,))
    zs = BlockStructure((1,))
    if a is None:
        a = np.sqrt(2.0)
    f = SmoothConvexFunction(Q=BlockOperator(xs, xs, [[q]], self_adjoint=True), lin=[0.0])
    g = SmoothConvexFunction(Q=BlockOperator(ys, ys, [[1.0]], self_adjoint=True), lin=[0.0])
    return ProblemSpec(
        x_structure=xs, y_structure=ys, z_dim=1,
        p1=ProxFriendlyFunction.zero(1), q1=ProxFriendlyFunction.zero(1),
        f=f, g=g,
        A=BlockOperator(xs, zs, [[a]]), B=BlockOperator(ys, zs, [[1.0]]),
        c=[1.0])


def test_kappa_single_block():
    # One x block with sweep quadratic 2 + 1*2 = 4: kappa = 1/sqrt(4).
    spec = _single_block_spec(q=2.0, a=np.sqrt(2.0))
    ops = construct_operators(spec, sigma=1.0)
    assert np.allclose(ops.x.M_tilde.matrix, [[4.0]], atol=1e-12)
    assert ops.kappa == pytest.approx(0.5, abs=1e-12)


def test_single_block_sides_have_trivial_sweep_terms():
    spec = _single_block_spec()
    S_tilde = 0.3 * BlockOperator.identity(spec.x_structure)
    T_tilde = -0.1 * BlockOperator.identity(spec.y_structure)
    ops = construct_operators(spec, 1.0, S_tilde, T_tilde)
    assert np.array_equal(ops.x.S_sgs.matrix, S_tilde.matrix)
    assert np.array_equal(ops.y.S_sgs.matrix, T_tilde.matrix)


def test_constructed_operators_match_sweep_identity():
    spec = make_preset("threeby2")
    ops = construct_operators(spec, sigma=1.3)
    ident = ops.x.M_tilde.matrix + sgs_operator(ops.x.M_tilde).matrix
    err = np.linalg.norm(ops.x.M_sgs.matrix - ident, "fro")
    assert err <= 1e-12 * (1.0 + np.linalg.norm(ident, "fro"))
    assert min_eig(ops.x.M_sgs) > 0.0
    assert min_eig(ops.y.M_sgs) > 0.0


def test_admissibility_failure_names_block():
    # Second x block has zero curvature and zero coupling, so its
    # diagonal sweep block is singular without a proximal shift.
    xs = BlockStructure((1, 1))
    ys = BlockStructure((1,))
    zs = BlockStructure((1,))
    Q = np.array([[1.0, 0.0], [0.0, 0.0]])
    f = SmoothConvexFunction(Q=BlockOperator(xs, xs, Q, self_adjoint=True), lin=[0.0, 0.0])
    g = SmoothConvexFunction(Q=BlockOperator(ys, ys, [[1.0]], self_adjoint=True), lin=[0.0])
    spec = ProblemSpec(
        x_structure=xs, y_structure=ys, z_dim=1,
        p1=ProxFriendlyFunction.zero(1), q1=ProxFriendlyFunction.zero(1),
        f=f, g=g,
        A=BlockOperator(xs, zs, [[1.0], [0.0]]), B=BlockOperator(ys, zs, [[1.0]]),
        c=[1.0])
    with pytest.raises(AdmissibilityError, match="block 1"):
        construct_operators(spec, 1.0)
    # The automatic shift restores admissibility.
    S, T = default_prox_terms(spec, 1.0, "auto")
    ops = construct_operators(spec, 1.0, S, T)
    assert ops.kappa > 0.0


def test_degenerate_single_blocks_match_twoblock_algorithm():
    spec = _single_block_spec()
    S_tilde = 0.2 * BlockOperator.identity(spec.x_structure)
    multi = MultiBlockSolver(spec, MultiBlockConfig(sigma=1.0, tau=1.0, S_tilde=S_tilde))
    two = TwoBlockSolver(spec, TwoBlockConfig(sigma=1.0, tau=1.0, S=S_tilde))
    x = np.array([0.3])
    y = np.array([-0.2])
    z = np.array([0.1])
    mx, my, mz, *_ = multi.iterate(x, y, z, 0.0, None)
    tx, ty, tz, *_ = two.step(x, y, z, 0.0)
    assert np.max(np.abs(mx - tx)) <= 1e-10
    assert np.max(np.abs(my - ty)) <= 1e-10
    assert np.max(np.abs(mz - tz)) <= 1e-10


def test_stationary_at_solution():
    spec = make_preset("threeby2")
    xs, ys, zs = oracle_solve(spec)
    solver = MultiBlockSolver(spec, MultiBlockConfig(sigma=1.0, tau=1.618))
    x1, y1, z1, r1, *_ = solver.iterate(xs, ys, zs, 0.0, None)
    assert np.linalg.norm(r1) <= 1e-12
    assert np.allclose(z1, zs, atol=1e-12)
    assert np.max(np.abs(x1 - xs)) <= 1e-10
    assert np.max(np.abs(y1 - ys)) <= 1e-10


@pytest.mark.parametrize("mode,seed", [("exact", 0), ("tilt", 11)])
def test_cross_check_agreement(mode, seed):
    spec = make_preset("threeby2")
    cfg = MultiBlockConfig(
        sigma=1.0, tau=1.618, stop_tol=0.0, max_iter=40,
        eps_schedule=ToleranceSchedule.zero() if mode == "exact"
        else ToleranceSchedule.geometric(1e-2, 0.5),
        inexact=mode, tilt_seed=seed, cross_check=True)
    result = solve(spec, cfg)
    gaps = result.info["cross_max_diff"]
    assert len(gaps) == 40
    assert max(gaps) <= 1e-9


def test_solve_converges_and_matches_oracle():
    spec = make_preset("threeby2")
    anchor = oracle_solve(spec)
    exact = solve(spec, MultiBlockConfig(sigma=1.0, tau=1.618, stop_tol=1e-7))
    assert exact.converged
    assert np.max(np.abs(exact.final.x - anchor[0])) <= 1e-6
    tilted = solve(spec, MultiBlockConfig(
        sigma=1.0, tau=1.618, stop_tol=1e-7, inexact="tilt", tilt_seed=3,
        eps_schedule=ToleranceSchedule.geometric(1e-2, 0.5)))
    assert tilted.converged
    assert np.max(np.abs(tilted.final.x - anchor[0])) <= 1e-5
    assert np.max(np.abs(tilted.final.y - anchor[1])) <= 1e-5
    assert np.max(np.abs(tilted.final.z - anchor[2])) <= 1e-5


def test_certificate_transport_along_run():
    spec = make_preset("threeby2")
    cfg = MultiBlockConfig(sigma=1.0, tau=1.0, stop_tol=1e-8, inexact="tilt",
                           tilt_seed=9, eps_schedule=ToleranceSchedule.geometric(1e-2, 0.5))
    result = solve(spec, cfg)
    kappa = result.info["kappa"]
    kappa_p = result.info["kappa_prime"]
    eps_tilde = result.info["eps_tilde"]
    steps = [rec for rec in result.records if rec.d_x is not None]
    assert len(steps) == len(eps_tilde)
    for rec, et in zip(steps, eps_tilde):
        assert rec.cert_x <= kappa * et + 1e-12
        assert rec.cert_y <= kappa_p * et + 1e-12


def test_cg_inner_mode_converges_with_certificates():
    spec = make_preset("threeby2")
    cfg = MultiBlockConfig(sigma=1.0, tau=1.0, stop_tol=1e-8, inexact="cg",
                           eps_schedule=ToleranceSchedule.geometric(1e-2, 0.5))
    result = solve(spec, cfg)
    assert result.converged
    kappa = result.info["kappa"]
    for rec, et in zip([r for r in result.records if r.d_x is not None],
                       result.info["eps_tilde"]):
        assert rec.cert_x <= kappa * et + 1e-12
    anchor = oracle_solve(spec)
    assert np.max(np.abs(result.final.x - anchor[0])) <= 1e-5


def test_stress_prox_terms_are_indefinite_but_admissible():
    spec = make_preset("threeby2")
    S, T = default_prox_terms(spec, 1.0, "stress")
    assert min_eig(S) < 0.0
    result = solve(spec, MultiBlockConfig(sigma=1.0, tau=1.618, S_tilde=S, T_tilde=T,
                                          stop_tol=1e-8))
    assert result.converged
    anchor = oracle_solve(spec)
    assert np.max(np.abs(result.final.x - anchor[0])) <= 1e-5


def test_schedule_in_result_is_transport_scaled():
    spec = make_preset("threeby2")
    sched = ToleranceSchedule.geometric(1e-2, 0.5)
    result = solve(spec, MultiBlockConfig(sigma=1.0, tau=1.0, stop_tol=1e-8,
                                          inexact="tilt", tilt_seed=1,
                                          eps_schedule=sched))
    transport = max(result.info["kappa"], result.info["kappa_prime"])
    assert result.schedule(0) == pytest.approx(transport * sched(0), rel=1e-12)
    for rec in result.records[:5]:
        assert rec.eps == pytest.approx(result.schedule(rec.k), rel=1e-12)
