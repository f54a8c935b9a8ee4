import numpy as np
import pytest
from hypothesis import given, settings

from cdfilter.equilibrium import (
    OperatingPoint,
    SteadyKnowns,
    residual,
    scaled_derivative_norm,
    scaled_residual_norm,
    solve_steady_state,
)
from cdfilter.errors import InvalidVacuum
from cdfilter.model import PlantParams, ResistanceMode, derivative

from .conftest import steady_knowns


def test_default_operating_point(params, op):
    x, u = op.x_ss, op.u_ss
    assert x.q_f == pytest.approx(3.2e-4, rel=1e-12)
    assert x.h_cake == pytest.approx(1.819e-6, rel=1e-3)
    assert u.t_m == pytest.approx(1.8341, rel=1e-4)
    assert u.f_in == pytest.approx(0.0125, rel=1e-12)
    assert u.q_air_in == u.q_air_out
    assert scaled_residual_norm(params, op) < 1e-9


def test_closed_forms_against_hand_values(params, op):
    q_f = (101_300 - 61_300) / 1.25e8
    h = 25 * q_f / (1050 * 40 * 0.1047)
    assert op.x_ss.h_cake == pytest.approx(h, rel=1e-14)
    assert op.u_ss.t_m == pytest.approx(17.5 * 0.1047 + 1000 * h, rel=1e-14)


def test_zero_driving_pressure(params):
    k = SteadyKnowns(p_v_ss=params.p_atm)
    with pytest.raises(InvalidVacuum):
        solve_steady_state(params, k)
    op = solve_steady_state(params, k, allow_zero_drive=True)
    assert op.x_ss.q_f == 0.0 and op.x_ss.h_cake == 0.0
    assert op.u_ss.t_m == pytest.approx(params.k_d * k.omega_ss)


def test_vacuum_above_atmosphere_rejected(params):
    with pytest.raises(InvalidVacuum):
        solve_steady_state(params, SteadyKnowns(p_v_ss=params.p_atm + 1.0), allow_zero_drive=True)


def test_solids_free_slurry(params):
    op = solve_steady_state(params, SteadyKnowns(c_r_ss=0.0))
    assert op.x_ss.h_cake == 0.0 and op.u_ss.f_in == 0.0
    assert op.u_ss.t_m == pytest.approx(params.k_d * 0.1047)


def test_residual_perturbations(params, op):
    bumped = OperatingPoint(op.x_ss, op.u_ss.replace(t_m=op.u_ss.t_m + 1.0))
    r = residual(params, bumped)
    assert r[0] == pytest.approx(1.0, abs=1e-12)
    bumped = OperatingPoint(op.x_ss, op.u_ss.replace(q_air_in=op.u_ss.q_air_out + 0.01))
    assert residual(params, bumped)[1] == pytest.approx(0.01, abs=1e-15)


def test_residual_matches_scaled_derivative(params, op):
    x = op.x_ss.replace(omega=0.2, c_r=30.0)
    trial = OperatingPoint(x, op.u_ss)
    d = derivative(params, x, op.u_ss).as_array()
    factors = np.array([1 / params.j_inertia, params.gas_gain, 1 / params.v_vat, 1.0, 1 / params.tau_q])
    np.testing.assert_allclose(d, residual(params, trial) * factors, rtol=1e-12, atol=1e-18)


def test_knowns_validation():
    with pytest.raises(ValueError):
        SteadyKnowns(omega_ss=0.0)
    with pytest.raises(ValueError):
        SteadyKnowns(c_in_ss=0.0)
    with pytest.raises(ValueError):
        SteadyKnowns(p_v_ss=-1.0)


@given(k=steady_knowns())
def test_round_trip_residual_is_zero(k):
    p = PlantParams()
    op = solve_steady_state(p, k)
    assert scaled_residual_norm(p, op) < 1e-9
    assert scaled_derivative_norm(p, op) < 1e-9


@settings(max_examples=50)
@given(k=steady_knowns())
def test_linear_in_cake_equilibrium(k):
    p = PlantParams(r_medium=6e7, r_cake_specific=5e12, resistance_mode=ResistanceMode.LINEAR_IN_CAKE)
    op = solve_steady_state(p, k)
    assert scaled_residual_norm(p, op) < 1e-9


@given(k=steady_knowns())
def test_monotonicity(k):
    p = PlantParams()
    base = solve_steady_state(p, k)
    deeper = solve_steady_state(p, SteadyKnowns(**{**k.__dict__, "p_v_ss": k.p_v_ss * 0.5 - 1.0}) if k.p_v_ss > 2 else k)
    if k.p_v_ss > 2:
        assert deeper.x_ss.q_f > base.x_ss.q_f
    faster = solve_steady_state(p, SteadyKnowns(**{**k.__dict__, "omega_ss": k.omega_ss * 1.5}))
    if k.c_r_ss > 0:
        assert faster.x_ss.h_cake < base.x_ss.h_cake
