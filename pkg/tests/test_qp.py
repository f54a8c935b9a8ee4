import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cdfilter.errors import Infeasible, IterationLimit
from cdfilter.qp import QpProblem, kkt_ok, kkt_residuals, solve_qp

from .oracles import dual_projected_gradient, random_qp_batch


def test_unconstrained_separable():
    u, rep = solve_qp(QpProblem(np.eye(2), [-1.0, -2.0]))
    np.testing.assert_allclose(u, [1.0, 2.0])
    assert rep.active == ()


def test_separable_clamping():
    p = QpProblem(np.eye(2), [-1.0, -2.0], np.eye(2), [0.5, 0.5])
    u, rep = solve_qp(p)
    np.testing.assert_allclose(u, [0.5, 0.5], atol=1e-14)
    np.testing.assert_allclose(rep.multipliers, [0.5, 1.5], atol=1e-12)
    assert kkt_ok(rep.kkt, 1e-8)


def test_scalar_bound():
    # scalar MPC case: H = b^2 q + r, f = -b q ref
    p = QpProblem([[0.02]], [-0.1], [[1.0]], [2.0])
    u, rep = solve_qp(p)
    assert u[0] == pytest.approx(2.0, abs=1e-14)
    assert rep.active == (0,)


def test_infeasible():
    p = QpProblem(np.eye(1), [0.0], [[1.0], [-1.0]], [-1.0, -1.0])
    with pytest.raises(Infeasible):
        solve_qp(p)


def test_phase1_finds_interior_start():
    # neither the unconstrained optimum nor zero is feasible
    p = QpProblem(np.eye(2), [0.0, 0.0], [[-1.0, 0.0], [0.0, -1.0], [1.0, 1.0]], [-1.0, -1.0, 3.0])
    u, rep = solve_qp(p)
    assert rep.used_phase1
    np.testing.assert_allclose(u, [1.0, 1.0], atol=1e-10)
    assert kkt_ok(rep.kkt, 1e-8)


def test_iteration_limit_carries_feasible_iterate():
    rng = np.random.default_rng(3)
    n = 8
    m = rng.normal(size=(n, n))
    p = QpProblem(m.T @ m + np.eye(n), -10 * np.ones(n), np.eye(n), np.full(n, 0.1))
    with pytest.raises(IterationLimit) as info:
        solve_qp(p, max_iter=2)
    x = info.value.x
    assert x is not None and np.all(p.ineq_matrix @ x <= p.ineq_rhs + 1e-12)
    assert info.value.report.iterations == 2


def test_singular_hessian_is_regularized():
    p = QpProblem([[0.0]], [1.0], [[1.0], [-1.0]], [1.0, 1.0])
    u, rep = solve_qp(p)
    assert u[0] == pytest.approx(-1.0)
    assert kkt_ok(kkt_residuals(p, u, rep.multipliers), 1e-8)


def test_validation():
    with pytest.raises(ValueError):
        QpProblem([[1.0, 1.0], [0.0, 1.0]], [0.0, 0.0])
    with pytest.raises(ValueError):
        QpProblem(np.eye(2), [0.0])
    with pytest.raises(ValueError):
        QpProblem(np.eye(2), [0.0, 0.0], np.eye(2), [1.0])


def test_warm_start_gives_same_answer():
    rng = np.random.default_rng(5)
    problems, _ = random_qp_batch(rng, 20)
    for h, f, a, b in problems:
        p = QpProblem(h, f, a, b)
        cold, rep = solve_qp(p)
        warm, _ = solve_qp(p, x0=cold, working_hint=rep.active)
        np.testing.assert_allclose(warm, cold, atol=1e-9)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_kkt_and_monotone_cost(seed):
    rng = np.random.default_rng(seed)
    (h, f, a, b), = random_qp_batch(rng, 1)[0]
    p = QpProblem(h, f, a, b)
    u, rep = solve_qp(p)
    assert kkt_ok(rep.kkt, 1e-8)
    costs = np.array(rep.cost_history)
    assert np.all(np.diff(costs) <= 1e-12 * (1 + np.abs(costs[:-1])))


def test_matches_dual_oracle():
    rng = np.random.default_rng(11)
    problems, batch = random_qp_batch(rng, 100)
    u_ref, _ = dual_projected_gradient(*batch, iters=5000)
    for k, (h, f, a, b) in enumerate(problems):
        p = QpProblem(h, f, a, b)
        u, _ = solve_qp(p)
        ref = u_ref[k, : f.size]
        assert np.max(a @ ref - b) < 1e-9  # the oracle itself converged
        assert abs(p.objective(u) - p.objective(ref)) < 1e-7
