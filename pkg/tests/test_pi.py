import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cdfilter.equilibrium import OperatingPoint
from cdfilter.errors import DegenerateLoop, ZeroSteadyFlow
from cdfilter.linearize import LinearModel
from cdfilter.pi import (
    Loop,
    PiGains,
    PiState,
    RefDirection,
    map_fin_ref_to_omega_ref,
    pi_architecture_step,
    pi_step,
    simc_gains,
    tune_default_gains,
)


def test_proportional_only():
    out, state = pi_step(PiGains(kp=2.0), PiState(), 1.0, 0.37)
    assert out == 2.0 and state.integral == 0.0


def test_single_integral_step():
    out, state = pi_step(PiGains(kp=0.0, ki=1.0), PiState(), 1.0, 0.1)
    assert out == pytest.approx(0.1) and state.integral == pytest.approx(0.1)


def test_saturation_and_back_calculation():
    out, state = pi_step(PiGains(kp=10.0, u_max=5.0), PiState(), 1.0, 0.1)
    assert out == 5.0 and state.integral == 0.0
    out, state = pi_step(PiGains(kp=10.0, u_max=5.0, kaw=1.0), PiState(), 1.0, 0.1)
    assert out == 5.0 and state.integral == pytest.approx(-0.5)


def test_gain_validation():
    with pytest.raises(ValueError):
        PiGains(kp=1.0, ki=-1.0)
    with pytest.raises(ValueError):
        PiGains(kp=1.0, u_min=1.0, u_max=1.0)
    with pytest.raises(ValueError):
        PiGains(kp=1.0, kaw=-1.0)
    with pytest.raises(ValueError):
        pi_step(PiGains(kp=1.0), PiState(), 1.0, 0.0)
    # reverse-acting loops flip both gains together
    PiGains(kp=-1.0, ki=-0.5)


def test_reference_map(op):
    assert map_fin_ref_to_omega_ref(op, op.u_ss.f_in) == pytest.approx(op.x_ss.omega)
    for direction in RefDirection:
        assert map_fin_ref_to_omega_ref(op, 0.0, direction) == 0.0
    assert map_fin_ref_to_omega_ref(op, 0.025) == pytest.approx(0.2094, rel=1e-12)
    literal = map_fin_ref_to_omega_ref(op, 0.025, RefDirection.PAPER_LITERAL)
    assert literal == pytest.approx(0.0125 / 0.1047 * 0.025)


def test_reference_map_zero_flow(op):
    dry = OperatingPoint(op.x_ss, op.u_ss.replace(f_in=0.0))
    with pytest.raises(ZeroSteadyFlow):
        map_fin_ref_to_omega_ref(dry, 0.01)


def test_tuning_examples(lin):
    arch = tune_default_gains(lin)
    g = arch.loop1.gains
    assert g.kp == pytest.approx(7.0, rel=1e-12)
    assert g.ki == pytest.approx(7.0 / 0.2, rel=1e-12)
    slower = tune_default_gains(lin, tau_cl={"loop1": 1.0})
    assert slower.loop1.gains.kp == pytest.approx(3.5, rel=1e-12)


def test_simc_integrating_channel():
    kp, ki = simc_gains(2.0, 0.0, 0.5)
    assert kp == pytest.approx(1.0) and ki == pytest.approx(0.5)


def test_degenerate_loop(lin):
    b = lin.b.copy()
    b[0, 0] = 0.0
    with pytest.raises(DegenerateLoop):
        tune_default_gains(LinearModel(lin.a, b, lin.c, lin.d, lin.op))


def test_cascade_sign(lin):
    arch = tune_default_gains(lin)
    out, _ = pi_architecture_step(arch, np.zeros(5), {"q_f": 1e-5}, 0.1)
    assert out["p_v_ref"] < 0  # deeper vacuum raises filtrate flow


def test_bumpless_hold(lin):
    arch = tune_default_gains(lin)
    for _ in range(100):
        out, arch = pi_architecture_step(arch, np.zeros(5), {"q_f": 0.0, "c_r": 0.0, "f_in": 0.0}, 0.1)
        assert all(v == 0.0 for v in out.values())


def test_speed_loop_proportional_pass_through(lin):
    arch = tune_default_gains(lin)
    arch = arch.__class__(**{**arch.__dict__, "loop1": Loop(PiGains(kp=2.0))})
    x = np.array([-1.0, 0, 0, 0, 0])
    out, _ = pi_architecture_step(arch, x, {}, 0.1)
    assert out["t_m"] == pytest.approx(2.0)


def _first_order_closed_loop(a, b, tau_cl, step, dt, horizon, limits=(-math.inf, math.inf)):
    kp, ki = simc_gains(b, a, tau_cl)
    gains = PiGains(kp, ki, *limits, kaw=abs(ki / kp))
    phi = math.exp(-a * dt)
    gamma = (1 - phi) / a * b if a > 0 else b * dt
    y, state, trace = 0.0, PiState(), []
    for _ in range(int(round(horizon / dt))):
        u, state = pi_step(gains, state, step - y, dt)
        y = phi * y + gamma * u
        trace.append((y, u, state.integral))
    return gains, np.array(trace)


@given(b=st.floats(0.1, 10.0), tau_cl=st.floats(0.5, 5.0), ratio=st.floats(0.05, 1.0))
def test_zero_steady_state_error(b, tau_cl, ratio):
    # plant lag no longer than 4 tau_cl: the loop closes at tau_cl exactly
    a = 1.0 / (4.0 * tau_cl * ratio)
    _, trace = _first_order_closed_loop(a, b, tau_cl, 1.0, 0.01, 10 * tau_cl)
    assert abs(1.0 - trace[-1, 0]) < 0.005


@given(a=st.floats(0.01, 5.0), b=st.floats(0.1, 10.0), tau_cl=st.floats(0.5, 5.0))
def test_zero_steady_state_error_lag_dominant(a, b, tau_cl):
    dt = 0.01
    kp, ki = simc_gains(b, a, tau_cl)
    phi = math.exp(-a * dt)
    gamma = (1 - phi) / a * b
    loop = np.array([[phi - gamma * (kp + ki * dt), gamma], [-ki * dt, 1.0]])
    slowest = -dt / math.log(np.abs(np.linalg.eigvals(loop)).max())
    horizon = 10 * max(tau_cl, slowest)
    _, trace = _first_order_closed_loop(a, b, tau_cl, 1.0, dt, horizon)
    assert abs(1.0 - trace[-1, 0]) < 0.005


@given(a=st.floats(0.05, 5.0), b=st.floats(0.1, 10.0), tau_cl=st.floats(0.5, 5.0), step=st.floats(2, 50))
def test_anti_windup_keeps_integral_bounded(a, b, tau_cl, step):
    u_max = 0.5 * a / b  # cannot reach the reference: the loop saturates for good
    gains, trace = _first_order_closed_loop(a, b, tau_cl, step, 0.01, 20 * tau_cl, (-u_max, u_max))
    bound = (2 * u_max) / max(gains.ki * 0.01, 1e-12)
    assert np.all(np.abs(trace[:, 2]) <= bound)
    assert np.all(np.abs(trace[:, 1]) <= u_max)


def test_determinism(lin):
    def run():
        arch = tune_default_gains(lin, limits={"loop1": (-1.0, 1.0)})
        outs = []
        for k in range(200):
            x = np.array([1e-3 * math.sin(k), 10.0 * math.cos(k), 0.1, 0.0, 1e-6])
            out, arch = pi_architecture_step(arch, x, {"q_f": 1e-5, "c_r": 1.0, "f_in": 1e-3}, 0.1)
            outs.append(tuple(out.values()))
        return outs

    assert run() == run()
