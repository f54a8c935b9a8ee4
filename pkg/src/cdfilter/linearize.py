"""Deviation-variable state-space model of the filter and its sampled form."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .equilibrium import OperatingPoint
from .errors import UnsupportedResistanceMode
from .model import PlantInput, PlantParams, PlantState, ResistanceMode, derivative, total_resistance

N_STATES = 5
N_INPUTS = 6


@dataclass(frozen=True)
class KSet:
    """Lumped coefficients of the linear model.

    ``k34`` and ``k44`` hold the exact partial derivatives of the cake
    balance (``h_ss`` and ``omega_ss``); the commonly printed variants divide
    both by ``rho_c * area``, which does not match the Jacobian.
    ``k15`` and ``k25`` are the Darcy-row sensitivities to vacuum and flow.
    """

    k11: float
    k21: float
    k31: float
    k12: float
    k13: float
    k23: float
    k33: float
    k43: float
    k14: float
    k24: float
    k34: float
    k44: float
    k15: float
    k25: float


@dataclass(frozen=True)
class LinearModel:
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: np.ndarray
    op: OperatingPoint


class DiscretizationMethod(str, enum.Enum):
    ZERO_ORDER_HOLD = "ZeroOrderHold"
    FORWARD_EULER = "ForwardEuler"


@dataclass(frozen=True)
class DiscreteLinearModel:
    a_d: np.ndarray
    b_d: np.ndarray
    ts: float
    method: DiscretizationMethod = DiscretizationMethod.ZERO_ORDER_HOLD

    def __post_init__(self):
        if not self.ts > 0:
            raise ValueError("ts must be positive")


def k_constants(params: PlantParams, op: OperatingPoint) -> KSet:
    x, u = op.x_ss, op.u_ss
    rho_a = params.rho_c * params.area
    r_tot = total_resistance(params, x.h_cake)
    return KSet(
        k11=1.0 / params.j_inertia,
        k21=params.k_d / params.j_inertia,
        k31=params.k_c / params.j_inertia,
        k12=params.gas_gain,
        k13=u.c_in / params.v_vat,
        k23=u.f_in / params.v_vat,
        k33=x.c_r / params.v_vat,
        k43=u.f_out / params.v_vat,
        k14=x.q_f / rho_a,
        k24=x.c_r / rho_a,
        k34=x.h_cake,
        k44=x.omega,
        k15=1.0 / (params.tau_q * r_tot),
        k25=1.0 / params.tau_q,
    )


def build_continuous(params: PlantParams, op: OperatingPoint) -> LinearModel:
    if params.resistance_mode is not ResistanceMode.CONSTANT_TOTAL:
        raise UnsupportedResistanceMode(
            "the linear model assumes a constant total resistance (ConstantTotal mode)"
        )
    k = k_constants(params, op)
    a = np.array(
        [
            [-k.k21, 0.0, 0.0, -k.k31, 0.0],
            [0.0, 0.0, 0.0, 0.0, 0.0],
            [0.0, 0.0, -k.k43, 0.0, 0.0],
            [-k.k34, 0.0, k.k14, -k.k44, k.k24],
            [0.0, -k.k15, 0.0, 0.0, -k.k25],
        ]
    )
    b = np.array(
        [
            [k.k11, 0.0, 0.0, 0.0, 0.0, 0.0],
            [0.0, k.k12, -k.k12, 0.0, 0.0, 0.0],
            [0.0, 0.0, 0.0, k.k13, k.k23, -k.k33],
            [0.0] * N_INPUTS,
            [0.0] * N_INPUTS,
        ]
    )
    return LinearModel(a=a, b=b, c=np.eye(N_STATES), d=np.zeros((N_STATES, N_INPUTS)), op=op)


def finite_difference_jacobian(params: PlantParams, op: OperatingPoint, h: float = 1e-6, typical=None):
    """Central-difference Jacobians of the plant rates about ``op``.

    The step for each variable is ``h * (1 + max(|value|, typical))``.
    ``typical`` defaults to ``p_atm`` for the vacuum pressure and 0
    elsewhere, which keeps the pressure step meaningful near a perfect
    vacuum where the rates depend on ``p_atm - p_v``.
    """
    if not h > 0:
        raise ValueError("h must be positive")
    x0 = op.x_ss.as_array()
    u0 = op.u_ss.as_array()
    if typical is None:
        typical = np.zeros(N_STATES + N_INPUTS)
        typical[1] = params.p_atm
    typical = np.asarray(typical, dtype=float)

    def rates(x, u):
        return derivative(params, PlantState.from_array(x), PlantInput.from_array(u)).as_array()

    def column(base, j, offset, call):
        step = h * (1.0 + max(abs(base[j]), typical[offset + j]))
        hi, lo = base.copy(), base.copy()
        hi[j] += step
        lo[j] -= step
        return (call(hi) - call(lo)) / (hi[j] - lo[j])

    jac_x = np.column_stack([column(x0, j, 0, lambda x: rates(x, u0)) for j in range(N_STATES)])
    jac_u = np.column_stack(
        [column(u0, j, N_STATES, lambda u: rates(x0, u)) for j in range(N_INPUTS)]
    )
    return jac_x, jac_u


def max_relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Largest elementwise ``|a - n| / max(|a|, |n|)``; exact matches count as 0."""
    diff = np.abs(analytic - numeric)
    scale = np.maximum(np.abs(analytic), np.abs(numeric))
    rel = np.divide(diff, scale, out=np.zeros_like(diff), where=scale > 0)
    return float(rel.max(initial=0.0))


def expm(m: np.ndarray, order: int = 12) -> np.ndarray:
    """Matrix exponential by scaling and squaring of a truncated Taylor series."""
    if order < 8:
        raise ValueError("Taylor order must be at least 8")
    m = np.asarray(m, dtype=float)
    norm = np.linalg.norm(m, 1)
    squarings = max(0, math.ceil(math.log2(norm / 0.5))) if norm > 0.5 else 0
    scaled = m / 2.0**squarings
    result = np.eye(m.shape[0])
    term = np.eye(m.shape[0])
    for k in range(1, order + 1):
        term = term @ scaled / k
        result = result + term
    for _ in range(squarings):
        result = result @ result
    return result


def discretize(m: LinearModel, ts: float, method=DiscretizationMethod.ZERO_ORDER_HOLD):
    method = DiscretizationMethod(method)
    if not ts > 0:
        raise ValueError("ts must be positive")
    a, b = m.a, m.b
    n, p = b.shape
    if method is DiscretizationMethod.FORWARD_EULER:
        return DiscreteLinearModel(np.eye(n) + a * ts, b * ts, ts, method)
    aug = np.zeros((n + p, n + p))
    aug[:n, :n] = a
    aug[:n, n:] = b
    phi = expm(aug * ts)
    return DiscreteLinearModel(phi[:n, :n].copy(), phi[:n, n:].copy(), ts, method)
