"""Nonlinear single-disc model of a continuous-disc vacuum filter.

State ordering is fixed throughout the package::

    x = [omega, p_v, c_r, h_cake, q_f]
    u = [t_m, q_air_in, q_air_out, f_in, c_in, f_out]

All quantities are SI (Pa, not kPa).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, fields

import numpy as np

from .errors import NonPositiveResistance, ZeroInflowSolids

STATE_NAMES = ("omega", "p_v", "c_r", "h_cake", "q_f")
INPUT_NAMES = ("t_m", "q_air_in", "q_air_out", "f_in", "c_in", "f_out")


class ResistanceMode(str, enum.Enum):
    CONSTANT_TOTAL = "ConstantTotal"
    LINEAR_IN_CAKE = "LinearInCake"


@dataclass(frozen=True)
class PlantParams:
    """Physical constants of the filter.

    ``r_medium`` carries the whole filtration resistance in ``ConstantTotal``
    mode. In ``LinearInCake`` mode the resistance grows with the cake as
    ``r_medium + r_cake_specific * h_cake``.

    The gas-balance gain ``r_gas * temp / v_gas`` is used as a lumped
    coefficient on volumetric air flows.
    """

    p_atm: float = 101_300.0
    j_inertia: float = 3.5
    k_d: float = 17.5
    k_c: float = 1_000.0
    tau_q: float = 3.0
    r_gas: float = 8.314
    temp: float = 313.0
    v_gas: float = 0.055
    v_vat: float = 3.0
    rho_c: float = 1_050.0
    area: float = 40.0
    r_medium: float = 1.25e8
    r_cake_specific: float = 0.0
    resistance_mode: ResistanceMode = ResistanceMode.CONSTANT_TOTAL

    def __post_init__(self):
        object.__setattr__(self, "resistance_mode", ResistanceMode(self.resistance_mode))
        for name in ("j_inertia", "tau_q", "v_gas", "v_vat", "rho_c", "area", "p_atm"):
            value = getattr(self, name)
            if not value > 0:
                raise ValueError(f"{name} must be strictly positive, got {value!r}")
        for name in ("r_medium", "k_d", "k_c"):
            value = getattr(self, name)
            if not value >= 0:
                raise ValueError(f"{name} must be non-negative, got {value!r}")

    @property
    def gas_gain(self) -> float:
        return self.r_gas * self.temp / self.v_gas

    def kernel_vector(self) -> np.ndarray:
        """Flat parameter vector consumed by the integration kernels."""
        r_spec = (
            self.r_cake_specific
            if self.resistance_mode is ResistanceMode.LINEAR_IN_CAKE
            else 0.0
        )
        return np.array(
            [
                self.p_atm,
                self.j_inertia,
                self.k_d,
                self.k_c,
                self.tau_q,
                self.gas_gain,
                self.v_vat,
                self.rho_c * self.area,
                self.r_medium,
                r_spec,
            ],
            dtype=float,
        )


class _Vector:
    """Mixin giving frozen dataclasses array round-tripping."""

    @classmethod
    def from_array(cls, values):
        values = [float(v) for v in values]
        if len(values) != len(fields(cls)):
            raise ValueError(f"{cls.__name__} expects {len(fields(cls))} values, got {len(values)}")
        return cls(*values)

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, f.name) for f in fields(self)], dtype=float)

    def replace(self, **changes):
        data = {f.name: getattr(self, f.name) for f in fields(self)}
        data.update(changes)
        return type(self)(**data)


@dataclass(frozen=True)
class PlantState(_Vector):
    omega: float = 0.0
    p_v: float = 0.0
    c_r: float = 0.0
    h_cake: float = 0.0
    q_f: float = 0.0

    def violations(self) -> list[str]:
        """Names of states outside their physical range."""
        return [name for name in ("omega", "p_v", "c_r", "h_cake") if getattr(self, name) < 0]


@dataclass(frozen=True)
class PlantInput(_Vector):
    t_m: float = 0.0
    q_air_in: float = 0.0
    q_air_out: float = 0.0
    f_in: float = 0.0
    c_in: float = 0.0
    f_out: float = 0.0


@dataclass(frozen=True)
class StateDerivative(_Vector):
    d_omega: float
    d_p_v: float
    d_c_r: float
    d_h_cake: float
    d_q_f: float


def resistive_torque(params: PlantParams, omega: float, h_cake: float) -> float:
    return params.k_d * omega + params.k_c * h_cake


def total_resistance(params: PlantParams, h_cake: float) -> float:
    if params.resistance_mode is ResistanceMode.LINEAR_IN_CAKE:
        r_tot = params.r_medium + params.r_cake_specific * h_cake
    else:
        r_tot = params.r_medium
    if not r_tot > 0:
        raise NonPositiveResistance(f"total filtration resistance is {r_tot!r}")
    return r_tot


def derivative(params: PlantParams, x: PlantState, u: PlantInput) -> StateDerivative:
    """Right-hand side of the five plant ODEs."""
    r_tot = total_resistance(params, x.h_cake)
    d_omega = (u.t_m - resistive_torque(params, x.omega, x.h_cake)) / params.j_inertia
    d_p_v = params.gas_gain * (u.q_air_in - u.q_air_out)
    d_c_r = (u.f_in * u.c_in - u.f_out * x.c_r) / params.v_vat
    d_h = x.c_r * x.q_f / (params.rho_c * params.area) - x.omega * x.h_cake
    d_q_f = ((params.p_atm - x.p_v) / r_tot - x.q_f) / params.tau_q
    return StateDerivative(d_omega, d_p_v, d_c_r, d_h, d_q_f)


def efficiency(q_f: float, c_r: float, f_in: float, c_in: float) -> float:
    """Percentage of incoming solids retained by the filter."""
    solids_in = f_in * c_in
    if solids_in == 0:
        raise ZeroInflowSolids("efficiency is undefined for zero inflow of solids")
    return 100.0 * (1.0 - q_f * c_r / solids_in)


def efficiency_or_nan(q_f, c_r, f_in, c_in) -> float:
    try:
        return efficiency(q_f, c_r, f_in, c_in)
    except ZeroInflowSolids:
        return math.nan
