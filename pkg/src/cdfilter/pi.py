"""Decentralized PI architecture: speed loop, vat-solids loop, filtrate cascade.

All loops work in deviation coordinates around an operating point; the
caller adds the steady inputs back to obtain actuator commands.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

from .equilibrium import OperatingPoint
from .errors import DegenerateLoop, ZeroSteadyFlow
from .linearize import LinearModel


@dataclass(frozen=True)
class PiGains:
    """Gains and output limits of one PI compensator.

    A reverse-acting loop uses negative ``kp`` and ``ki`` together; the two
    must never have opposite signs.
    """

    kp: float
    ki: float = 0.0
    u_min: float = -math.inf
    u_max: float = math.inf
    kaw: float = 0.0

    def __post_init__(self):
        if not self.u_min < self.u_max:
            raise ValueError("u_min must be below u_max")
        if self.kp * self.ki < 0:
            raise ValueError("kp and ki must share a sign")
        if self.kaw < 0:
            raise ValueError("kaw must be non-negative")


@dataclass(frozen=True)
class PiState:
    integral: float = 0.0


def pi_step(gains: PiGains, state: PiState, error: float, dt: float):
    """One explicit PI update with back-calculation anti-windup.

    Returns ``(output, new_state)``.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    integral = state.integral + gains.ki * error * dt
    raw = gains.kp * error + integral
    output = min(max(raw, gains.u_min), gains.u_max)
    integral += gains.kaw * (output - raw) * dt
    return output, PiState(integral)


class RefDirection(str, enum.Enum):
    DEFAULT = "default"
    PAPER_LITERAL = "paper-literal"


def map_fin_ref_to_omega_ref(op: OperatingPoint, fin_ref: float, direction=RefDirection.DEFAULT) -> float:
    """Static map from a slurry-inflow reference to a disc-speed reference.

    The default gain ``omega_ss / f_in_ss`` maps ``f_in_ss`` onto
    ``omega_ss``; ``paper-literal`` applies the reciprocal gain.
    """
    return omega_ref_gain(op, direction) * fin_ref


def omega_ref_gain(op: OperatingPoint, direction=RefDirection.DEFAULT) -> float:
    direction = RefDirection(direction)
    f_in_ss, omega_ss = op.u_ss.f_in, op.x_ss.omega
    if direction is RefDirection.PAPER_LITERAL:
        if omega_ss == 0:
            raise ZeroSteadyFlow("steady disc speed is zero")
        return f_in_ss / omega_ss
    if f_in_ss == 0:
        raise ZeroSteadyFlow("steady slurry inflow is zero; the speed reference map is undefined")
    return omega_ss / f_in_ss


@dataclass(frozen=True)
class Loop:
    gains: PiGains
    state: PiState = PiState()

    def step(self, error, dt):
        out, state = pi_step(self.gains, self.state, error, dt)
        return out, replace(self, state=state)


@dataclass(frozen=True)
class PiArchitecture:
    """Three PI loops plus the inflow-to-speed reference map.

    ``fin_ss`` and ``omega_ss`` anchor the reference map so that the
    absolute speed reference ``ref_gain * f_in*`` can be expressed as a
    deviation.
    """

    loop1: Loop  # omega via t_m
    loop2: Loop  # c_r via c_in
    loop3_outer: Loop  # q_f -> p_v setpoint
    loop3_inner: Loop  # p_v via q_air_in
    ref_gain: float
    fin_ss: float
    omega_ss: float


def pi_architecture_step(arch: PiArchitecture, x, refs: dict, dt: float):
    """Advance all loops one sample.

    ``x`` is the deviation state ``[omega, p_v, c_r, h_cake, q_f]`` and
    ``refs`` holds deviation references ``f_in``, ``c_r`` and ``q_f``.
    Returns ``(overrides, new_arch)`` with deviation commands for ``t_m``,
    ``c_in`` and ``q_air_in``.
    """
    omega, p_v, c_r, _, q_f = x
    omega_ref = arch.ref_gain * (arch.fin_ss + refs.get("f_in", 0.0)) - arch.omega_ss
    t_m, loop1 = arch.loop1.step(omega_ref - omega, dt)
    c_in, loop2 = arch.loop2.step(refs.get("c_r", 0.0) - c_r, dt)
    p_v_ref, outer = arch.loop3_outer.step(refs.get("q_f", 0.0) - q_f, dt)
    q_air_in, inner = arch.loop3_inner.step(p_v_ref - p_v, dt)
    new = replace(arch, loop1=loop1, loop2=loop2, loop3_outer=outer, loop3_inner=inner)
    return {"t_m": t_m, "c_in": c_in, "q_air_in": q_air_in, "p_v_ref": p_v_ref}, new


def simc_gains(slope: float, pole: float, tau_cl: float):
    """SIMC PI gains for ``dy/dt = -pole*y + slope*u``.

    Equivalent to ``kp = tau / (K * tau_cl)`` with ``K = slope/pole`` and
    ``tau = 1/pole``; an integrating channel (``pole == 0``) uses
    ``ki = kp / (4 tau_cl)``.
    """
    if slope == 0:
        raise DegenerateLoop("loop has zero local gain")
    if not tau_cl > 0:
        raise ValueError("closure time constant must be positive")
    kp = 1.0 / (slope * tau_cl)
    tau = 1.0 / pole if pole > 0 else math.inf
    ki = kp / min(tau, 4.0 * tau_cl)
    return kp, ki


DEFAULT_TAU_CL = {"loop1": 0.5, "loop2": 10.0, "loop3_outer": 2.0, "loop3_inner": 0.25}


def tune_default_gains(m: LinearModel, tau_cl: dict | None = None, limits: dict | None = None,
                       direction=RefDirection.DEFAULT) -> PiArchitecture:
    """Tune every loop from the diagonal first-order channels of ``m``.

    ``limits`` maps loop names to deviation ``(u_min, u_max)`` pairs. The
    back-calculation gain is ``|ki / kp|``.
    """
    taus = dict(DEFAULT_TAU_CL)
    taus.update(tau_cl or {})
    limits = limits or {}
    a, b = m.a, m.b
    channels = {
        "loop1": (b[0, 0], -a[0, 0]),
        "loop2": (b[2, 4], -a[2, 2]),
        "loop3_outer": (a[4, 1], -a[4, 4]),
        "loop3_inner": (b[1, 1], -a[1, 1]),
    }
    loops = {}
    for name, (slope, pole) in channels.items():
        try:
            kp, ki = simc_gains(slope, pole, taus[name])
        except DegenerateLoop as exc:
            raise DegenerateLoop(f"{name}: {exc}") from None
        lo, hi = limits.get(name, (-math.inf, math.inf))
        loops[name] = Loop(PiGains(kp, ki, lo, hi, abs(ki / kp)))
    return PiArchitecture(
        ref_gain=omega_ref_gain(m.op, direction),
        fin_ss=m.op.u_ss.f_in,
        omega_ss=m.op.x_ss.omega,
        **loops,
    )
