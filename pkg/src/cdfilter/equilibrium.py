"""Closed-form steady state of the filter and its residual check."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidVacuum
from .model import (
    PlantInput,
    PlantParams,
    PlantState,
    ResistanceMode,
    derivative,
    total_resistance,
)

_EPS = 1e-12


@dataclass(frozen=True)
class SteadyKnowns:
    """Steady-state quantities fixed by process specification."""

    omega_ss: float = 0.1047
    p_v_ss: float = 61_300.0
    c_r_ss: float = 25.0
    c_in_ss: float = 100.0
    f_out_ss: float = 0.05
    q_air_out_ss: float = 0.05

    def __post_init__(self):
        if not self.omega_ss > 0:
            raise ValueError("omega_ss must be positive")
        if not self.c_in_ss > 0:
            raise ValueError("c_in_ss must be positive")
        if self.p_v_ss < 0:
            raise ValueError("p_v_ss is an absolute pressure and must be >= 0")


@dataclass(frozen=True)
class OperatingPoint:
    x_ss: PlantState
    u_ss: PlantInput


def solve_steady_state(
    params: PlantParams, known: SteadyKnowns, allow_zero_drive: bool = False
) -> OperatingPoint:
    """Solve the algebraic steady-state balances for the unknown quantities.

    The unknowns are motor torque, air inflow, slurry inflow, cake thickness
    and filtrate flow. ``allow_zero_drive`` admits ``p_v_ss == p_atm``
    (no filtration) instead of raising :class:`InvalidVacuum`.
    """
    drive = params.p_atm - known.p_v_ss
    if drive < 0 or (drive == 0 and not allow_zero_drive):
        raise InvalidVacuum(
            f"p_v_ss={known.p_v_ss!r} Pa leaves no driving pressure below "
            f"p_atm={params.p_atm!r} Pa (zero or negative filtrate flow)"
        )
    h_ss, q_f_ss = _cake_and_flow(params, known, drive)
    t_m_ss = params.k_d * known.omega_ss + params.k_c * h_ss
    f_in_ss = known.f_out_ss * known.c_r_ss / known.c_in_ss
    x_ss = PlantState(known.omega_ss, known.p_v_ss, known.c_r_ss, h_ss, q_f_ss)
    u_ss = PlantInput(
        t_m=t_m_ss,
        q_air_in=known.q_air_out_ss,
        q_air_out=known.q_air_out_ss,
        f_in=f_in_ss,
        c_in=known.c_in_ss,
        f_out=known.f_out_ss,
    )
    return OperatingPoint(x_ss, u_ss)


def _cake_and_flow(params, known, drive):
    rho_a = params.rho_c * params.area
    if params.resistance_mode is ResistanceMode.LINEAR_IN_CAKE and params.r_cake_specific > 0:
        # h * (r_m + r_c * h) * rho_a * omega = c_r * drive, positive root
        a = params.r_cake_specific * rho_a * known.omega_ss
        b = params.r_medium * rho_a * known.omega_ss
        c = known.c_r_ss * drive
        h = 2 * c / (b + math.sqrt(b * b + 4 * a * c)) if c > 0 else 0.0
        return h, drive / total_resistance(params, h)
    q_f = drive / total_resistance(params, 0.0)
    h = known.c_r_ss * q_f / (rho_a * known.omega_ss)
    return h, q_f


def residual(params: PlantParams, op: OperatingPoint) -> np.ndarray:
    """Raw steady-state balances (torque, gas, solids, cake, Darcy)."""
    x, u = op.x_ss, op.u_ss
    r_tot = total_resistance(params, x.h_cake)
    return np.array(
        [
            u.t_m - params.k_d * x.omega - params.k_c * x.h_cake,
            u.q_air_in - u.q_air_out,
            u.f_in * u.c_in - u.f_out * x.c_r,
            x.c_r * x.q_f / (params.rho_c * params.area) - x.omega * x.h_cake,
            (params.p_atm - x.p_v) / r_tot - x.q_f,
        ]
    )


def residual_scales(params: PlantParams, op: OperatingPoint) -> np.ndarray:
    """Characteristic magnitude of each balance: the sum of its term sizes."""
    x, u = op.x_ss, op.u_ss
    r_tot = total_resistance(params, x.h_cake)
    return np.array(
        [
            abs(u.t_m) + abs(params.k_d * x.omega) + abs(params.k_c * x.h_cake),
            abs(u.q_air_in) + abs(u.q_air_out),
            abs(u.f_in * u.c_in) + abs(u.f_out * x.c_r),
            abs(x.c_r * x.q_f / (params.rho_c * params.area)) + abs(x.omega * x.h_cake),
            abs(params.p_atm - x.p_v) / r_tot + abs(x.q_f),
        ]
    ) + _EPS


def scaled_residual_norm(params: PlantParams, op: OperatingPoint) -> float:
    return float(np.max(np.abs(residual(params, op) / residual_scales(params, op))))


def scaled_derivative_norm(params: PlantParams, op: OperatingPoint) -> float:
    """Infinity norm of the plant rates at ``op`` in the residual's scaled units."""
    rates = derivative(params, op.x_ss, op.u_ss).as_array()
    factors = np.array(
        [1.0 / params.j_inertia, params.gas_gain, 1.0 / params.v_vat, 1.0, 1.0 / params.tau_q]
    )
    return float(np.max(np.abs(rates / factors / residual_scales(params, op))))
