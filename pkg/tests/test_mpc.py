import numpy as np
import pytest

from cdfilter import mpc as mpc_mod
from cdfilter import simulate as sim_mod
from cdfilter.errors import IterationLimit
from cdfilter.linearize import DiscreteLinearModel
from cdfilter.mpc import (
    MpcConfig,
    QpBuilder,
    assemble_qp,
    build_prediction_matrices,
    mpc_step,
    prediction,
    shift_sequence,
)
from cdfilter.qp import kkt_ok, solve_qp
from cdfilter.simulate import ControllerKind, ControllerSpec, Scenario, Signal, run_closed_loop


def scalar_model(a=0.9, b=0.1):
    return DiscreteLinearModel(np.array([[a]]), np.array([[b]]), 0.1)


def scalar_config(n_pred=1, n_ctrl=1, u_bound=None, y_bound=None, r=0.01):
    return MpcConfig(
        n_pred=n_pred,
        n_ctrl=n_ctrl,
        q_weights=(1.0,),
        r_weights=(r,),
        u_bounds=(u_bound,),
        y_bounds=(y_bound,),
        penalize_moves=False,
        scale_by_op=False,
        manipulated=(0,),
        measured_disturbances=(),
    )


def test_prediction_trivial_cases(dm):
    ident = DiscreteLinearModel(np.eye(5), np.zeros((5, 6)), 0.1)
    f, phi = build_prediction_matrices(ident, (0, 1, 4), 4, 2)
    np.testing.assert_array_equal(f, np.vstack([np.eye(5)] * 4))
    assert not phi.any()
    f, phi = build_prediction_matrices(dm, (0, 1, 4), 1, 1)
    np.testing.assert_array_equal(f, dm.a_d)
    np.testing.assert_allclose(phi, dm.b_d[:, [0, 1, 4]])


def test_prediction_scalar_hand_expansion():
    f, phi = build_prediction_matrices(scalar_model(), (0,), 2, 1)
    np.testing.assert_allclose(f.ravel(), [0.9, 0.81])
    np.testing.assert_allclose(phi.ravel(), [0.1, 0.19])


def test_prediction_matches_simulation(dm):
    rng = np.random.default_rng(2)
    n_pred, n_ctrl, manip = 12, 4, (0, 1, 4)
    f, phi = build_prediction_matrices(dm, manip, n_pred, n_ctrl)
    x0 = rng.normal(size=5)
    moves = rng.normal(size=(n_ctrl, 3))
    x, ys = x0.copy(), []
    for k in range(n_pred):
        u = np.zeros(6)
        u[list(manip)] = moves[min(k, n_ctrl - 1)]
        x = dm.a_d @ x + dm.b_d @ u
        ys.append(x)
    np.testing.assert_allclose(f @ x0 + phi @ moves.ravel(), np.concatenate(ys), rtol=1e-10, atol=1e-12)
    # strictly lower block-triangular impulse blocks before the hold block
    nu = 3
    for i in range(n_pred):
        for j in range(n_ctrl - 1):
            block = phi[5 * i:5 * i + 5, nu * j:nu * j + nu]
            if j > i:
                assert not block.any()
            else:
                expected = np.linalg.matrix_power(dm.a_d, i - j) @ dm.b_d[:, list(manip)]
                np.testing.assert_allclose(block, expected, rtol=1e-12, atol=1e-300)


def test_scalar_analytic_optimum():
    cfg = scalar_config()
    pred = prediction(scalar_model(), cfg)
    qp = assemble_qp(pred, [0.0], [1.0], cfg)
    u, _ = solve_qp(qp)
    assert u[0] == pytest.approx(5.0, abs=1e-10)
    res = mpc_step(cfg, scalar_model(), [0.0], [1.0])
    assert res.moves[0] == pytest.approx(5.0, abs=1e-10)


def test_scalar_bound_clamps():
    cfg = scalar_config(u_bound=(None, 2.0))
    res = mpc_step(cfg, scalar_model(), [0.0], [1.0])
    assert res.moves[0] == pytest.approx(2.0, abs=1e-12)
    assert res.report.active


def test_hessian_structure(dm):
    cfg = MpcConfig(q_weights=(0, 0, 0, 0, 2.0), penalize_moves=False, scale_by_op=False,
                    n_pred=8, n_ctrl=3)
    pred = prediction(dm, cfg)
    qp = assemble_qp(pred, np.zeros(5), np.zeros(5), cfg)
    rows = np.arange(pred.forced.shape[0]) % 5 == 4
    phi_r = pred.forced[rows]
    expected = 2.0 * phi_r.T @ phi_r + np.diag(np.tile(cfg.r_weights, 3))
    np.testing.assert_allclose(qp.hessian, expected, rtol=1e-12, atol=1e-300)


def test_equilibrium_hold(dm, op):
    cfg = MpcConfig()
    qp = assemble_qp(prediction(dm, cfg), np.zeros(5), np.zeros(5), cfg, u_prev=np.zeros(3), op=op)
    assert not qp.linear.any()
    res = mpc_step(cfg, dm, np.zeros(5), np.zeros(5), u_prev=np.zeros(3), disturbance=np.zeros(3), op=op,
                   input_names=["t_m", "q_air_in", "c_in"])
    assert res.overrides == {"t_m": 0.0, "q_air_in": 0.0, "c_in": 0.0}


def test_unconstrained_first_move_is_least_squares(dm, op):
    cfg = MpcConfig(u_bounds=(None, None, None), y_bounds=(None,) * 5, n_pred=20, n_ctrl=5)
    x = np.array([0.0, 500.0, 0.5, 0.0, 1e-5])
    ref = np.array([0.0, 0.0, 1.0, 0.0, 2e-5])
    pred = prediction(dm, cfg)
    qp = QpBuilder(pred, cfg, op).build(x, ref, u_prev=np.zeros(3), disturbance=np.zeros(3))
    expected = np.linalg.solve(qp.hessian, -qp.linear)[:3]
    res = mpc_step(cfg, dm, x, ref, u_prev=np.zeros(3), disturbance=np.zeros(3), op=op)
    np.testing.assert_allclose(res.moves, expected, rtol=1e-8)


def test_receding_horizon_consistency():
    a, b, q, r = 0.9, 0.1, 1.0, 0.01
    cfg = scalar_config()
    model = scalar_model(a, b)
    x = 0.0
    for k in range(100):
        ref = 1.0 if k < 50 else -0.5
        res = mpc_step(cfg, model, [x], [ref])
        analytic = b * q * (ref - a * x) / (b * b * q + r)
        assert abs(res.moves[0] - analytic) < 1e-10
        x = a * x + b * res.moves[0]


def test_infeasible_output_bound_is_softened(caplog):
    cfg = scalar_config(u_bound=(-1.0, 1.0), y_bound=(None, -10.0))
    res = mpc_step(cfg, scalar_model(), [0.0], [0.0])
    assert "soft_y" in res.flags
    assert res.moves[0] == pytest.approx(-1.0, abs=1e-9)
    assert any("infeasible" in rec.message for rec in caplog.records)


def test_iteration_limit_applies_best_iterate(monkeypatch):
    def stub(problem, **kwargs):
        raise IterationLimit("stop", x=np.array([0.25]), report=object())

    monkeypatch.setattr(mpc_mod, "solve_qp", stub)
    res = mpc_step(scalar_config(), scalar_model(), [0.0], [1.0])
    assert res.flags == ["iter_limit"]
    assert res.moves[0] == 0.25


def test_config_validation():
    with pytest.raises(ValueError):
        MpcConfig(n_pred=5, n_ctrl=6)
    with pytest.raises(ValueError):
        MpcConfig(q_weights=(0, 0, 0, 0, 0))
    with pytest.raises(ValueError):
        MpcConfig(r_weights=(-1, 0, 0))
    with pytest.raises(ValueError):
        MpcConfig(u_bounds=((1, 0), (0, 1), (0, 1)))


def test_shift_sequence():
    np.testing.assert_array_equal(shift_sequence([1, 2, 3, 4, 5, 6], 2), [3, 4, 5, 6, 5, 6])


def test_closed_loop_kkt_and_constraints(params, op, monkeypatch):
    reports = []

    def recording(*args, **kwargs):
        res = mpc_step(*args, **kwargs)
        reports.append(res)
        return res

    monkeypatch.setattr(sim_mod, "mpc_step", recording)
    cfg = MpcConfig(u_bounds=((1.0, 2.5), (0.0, 0.15), (0.0, 300.0)))
    sc = Scenario(40.0, op, controller=ControllerSpec(ControllerKind.MPC, mpc=cfg),
                  references={"q_f": Signal.step(3.2e-4, 10.0, 3.52e-4), "c_r": Signal.step(25, 20.0, 30)})
    traj = run_closed_loop(params, sc)
    assert len(reports) == traj.t.size
    assert all(kkt_ok(r.report.kkt, 1e-8) for r in reports)
    for col, (lo, hi) in zip(("t_m", "q_air_in", "c_in"), cfg.u_bounds):
        u = traj.column(col)
        assert u.min() >= lo - 1e-9 and u.max() <= hi + 1e-9
