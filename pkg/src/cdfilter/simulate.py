"""Fixed-step closed-loop simulation of the filter."""

from __future__ import annotations

import bisect
import enum
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .equilibrium import OperatingPoint
from .errors import CdFilterError, NonPositiveResistance, NumericalBlowup
from .linearize import build_continuous, discretize
from .model import INPUT_NAMES, PlantInput, PlantParams, PlantState, efficiency_or_nan
from .mpc import MpcConfig, QpBuilder, mpc_step, prediction, shift_sequence
from .pi import PiArchitecture, RefDirection, omega_ref_gain, pi_architecture_step

log = logging.getLogger(__name__)

REFERENCE_NAMES = ("q_f", "c_r", "f_in")


class SegmentKind(str, enum.Enum):
    CONSTANT = "constant"
    STEP_TO = "step-to"
    RAMP_TO = "ramp-to"


@dataclass(frozen=True)
class Signal:
    """Piecewise signal; the value before the first segment is taken as 0.

    ``ramp-to`` moves linearly from the value at its start to its target,
    reached at the start of the following segment.
    """

    segments: tuple

    def __post_init__(self):
        segs = tuple((float(t), SegmentKind(kind), float(v)) for t, kind, v in self.segments)
        if not segs:
            raise ValueError("a signal needs at least one segment")
        if segs[0][0] != 0.0:
            raise ValueError("the first segment must start at t = 0")
        if any(b[0] <= a[0] for a, b in zip(segs, segs[1:])):
            raise ValueError("segment start times must be strictly increasing")
        if segs[-1][1] is SegmentKind.RAMP_TO:
            raise ValueError("a ramp-to segment needs a following segment to end at")
        object.__setattr__(self, "segments", segs)

    @classmethod
    def constant(cls, value):
        return cls(((0.0, "constant", value),))

    @classmethod
    def step(cls, initial, at, final):
        return cls(((0.0, "constant", initial), (at, "step-to", final)))

    @property
    def initial_value(self):
        return sample_signal(self, 0.0)

    @property
    def final_value(self):
        return self.segments[-1][2]

    def change_times(self):
        return [seg[0] for seg in self.segments[1:]]


def sample_signal(s: Signal, t: float) -> float:
    starts = [seg[0] for seg in s.segments]
    i = bisect.bisect_right(starts, t) - 1
    start, kind, value = s.segments[i]
    if kind is SegmentKind.RAMP_TO:
        begin = s.segments[i - 1][2] if i > 0 else 0.0
        end_t = s.segments[i + 1][0]
        return begin + (value - begin) * (t - start) / (end_t - start)
    return value


class ControllerKind(str, enum.Enum):
    OPEN_LOOP = "open_loop"
    PI = "pi"
    MPC = "mpc"


@dataclass(frozen=True)
class ControllerSpec:
    kind: ControllerKind = ControllerKind.OPEN_LOOP
    pi: PiArchitecture | None = None
    mpc: MpcConfig | None = None
    omega_ref_direction: RefDirection = RefDirection.DEFAULT


@dataclass(frozen=True)
class Scenario:
    duration: float
    op: OperatingPoint
    h: float = 0.01
    ts: float = 0.1
    controller: ControllerSpec = ControllerSpec()
    references: dict = field(default_factory=dict)
    disturbances: dict = field(default_factory=dict)
    fout_tracks_qf: bool = False
    seed: int = 0
    initial_state: PlantState | None = None

    def __post_init__(self):
        if not self.duration > 0:
            raise ValueError("duration must be positive")
        if not (self.h > 0 and self.ts > 0):
            raise ValueError("h and ts must be positive")
        ratio = self.ts / self.h
        if abs(ratio - round(ratio)) > 1e-9 * ratio or round(ratio) < 1:
            raise ValueError(f"ts={self.ts} is not an integer multiple of h={self.h}")
        n = self.duration / self.ts
        if abs(n - round(n)) > 1e-9 * n:
            raise ValueError(f"duration={self.duration} is not an integer multiple of ts={self.ts}")
        unknown = set(self.references) - set(REFERENCE_NAMES)
        if unknown:
            raise ValueError(f"unknown reference signals: {sorted(unknown)}")
        unknown = set(self.disturbances) - set(INPUT_NAMES) - {"f_mud"}
        if unknown:
            raise ValueError(f"unknown input signals: {sorted(unknown)}")

    @property
    def substeps(self) -> int:
        return int(round(self.ts / self.h))

    @property
    def n_samples(self) -> int:
        return int(round(self.duration / self.ts))

    def reference(self, name) -> Signal:
        if name in self.references:
            return self.references[name]
        ss = {"q_f": self.op.x_ss.q_f, "c_r": self.op.x_ss.c_r, "f_in": self.op.u_ss.f_in}
        return Signal.constant(ss[name])


@dataclass
class Trajectory:
    t: np.ndarray
    x: np.ndarray  # (N, 5) state at each sample
    u: np.ndarray  # (N, 6) inputs applied over [t_k, t_k + ts)
    refs: np.ndarray  # (N, 3) q_f, c_r, f_in references
    eta: np.ndarray
    flags: list
    audit: np.ndarray  # cumulative vat solids inflow minus outflow at each sample
    x_final: np.ndarray
    audit_final: float
    controller: str = "open_loop"

    def column(self, name):
        from .model import STATE_NAMES

        if name in STATE_NAMES:
            return self.x[:, STATE_NAMES.index(name)]
        if name in INPUT_NAMES:
            return self.u[:, INPUT_NAMES.index(name)]
        if name.startswith("ref_"):
            return self.refs[:, REFERENCE_NAMES.index(name[4:])]
        if name == "eta":
            return self.eta
        raise KeyError(name)


def rk4_step(params: PlantParams, x: PlantState, u: PlantInput, h: float) -> PlantState:
    if not h > 0:
        raise ValueError("h must be positive")
    x_new, _, _, status = kernels.integrate(params.kernel_vector(), x.as_array(), u.as_array(), h, 1)
    _check_status(status, 0.0)
    return PlantState.from_array(x_new)


def _check_status(status, t):
    if status == kernels.STATUS_BLOWUP:
        raise NumericalBlowup(f"state magnitude exceeded 1e12 at t={t!r} s", t=t)
    if status == kernels.STATUS_RESISTANCE:
        raise NonPositiveResistance(f"filtration resistance became non-positive at t={t!r} s")


class OpenLoopController:
    name = "open_loop"

    def step(self, sample):
        return {}, []


class PiController:
    name = "pi"

    def __init__(self, arch: PiArchitecture, dt: float):
        self.arch = arch
        self.dt = dt

    def step(self, sample):
        out, self.arch = pi_architecture_step(self.arch, sample["x"], sample["refs"], self.dt)
        return {k: out[k] for k in ("t_m", "c_in", "q_air_in")}, []


class MpcController:
    name = "mpc"

    def __init__(self, params, op, cfg: MpcConfig, ts: float, direction=RefDirection.DEFAULT):
        self.cfg = cfg
        self.op = op
        self.dm = discretize(build_continuous(params, op), ts)
        self.builder = QpBuilder(prediction(self.dm, cfg), cfg, op)
        self.omega_gain = omega_ref_gain(op, direction)
        self.warm = None
        self.names = [INPUT_NAMES[i] for i in cfg.manipulated]

    def step(self, sample):
        refs = sample["refs"]
        omega_ref = self.omega_gain * (self.op.u_ss.f_in + refs["f_in"]) - self.op.x_ss.omega
        target = np.array([omega_ref, 0.0, refs["c_r"], 0.0, refs["q_f"]])
        u_dev = sample["u_prev"]
        res = mpc_step(
            self.cfg,
            self.dm,
            sample["x"],
            target,
            u_prev=u_dev[list(self.cfg.manipulated)],
            disturbance=sample["d"][: len(self.cfg.measured_disturbances)],
            op=self.op,
            builder=self.builder,
            warm=self.warm,
            input_names=self.names,
        )
        self.warm = shift_sequence(res.sequence, len(self.cfg.manipulated))
        diag = [f"qp_it={res.report.iterations}", f"qp_act={len(res.report.active)}",
                f"qp_cost={res.cost!r}"] + res.flags
        return res.overrides, diag


def make_controller(params, sc: Scenario):
    spec = sc.controller
    if spec.kind is ControllerKind.PI:
        return PiController(spec.pi, sc.ts)
    if spec.kind is ControllerKind.MPC:
        return MpcController(params, sc.op, spec.mpc, sc.ts, spec.omega_ref_direction)
    return OpenLoopController()


def sample_time(k: int, ts: float) -> float:
    return round(k * ts, 9)


def run_closed_loop(params: PlantParams, sc: Scenario, controller=None) -> Trajectory:
    """Simulate ``sc``; ``controller`` overrides the one built from the scenario."""
    controller = controller if controller is not None else make_controller(params, sc)
    p = params.kernel_vector()
    n, sub = sc.n_samples, sc.substeps
    x_ss = sc.op.x_ss.as_array()
    u_ss = sc.op.u_ss.as_array()
    x = (sc.initial_state.as_array() if sc.initial_state is not None else x_ss.copy())
    refs_sig = {name: sc.reference(name) for name in REFERENCE_NAMES}
    dist_sig = dict(sc.disturbances)
    if sc.fout_tracks_qf and "f_mud" not in dist_sig:
        dist_sig["f_mud"] = Signal.constant(sc.op.u_ss.f_out - sc.op.x_ss.q_f)
    ref_ss = np.array([sc.op.x_ss.q_f, sc.op.x_ss.c_r, sc.op.u_ss.f_in])

    ts_ = np.empty(n)
    xs = np.empty((n, 5))
    us = np.empty((n, 6))
    rs = np.empty((n, 3))
    eta = np.empty(n)
    audit = np.empty(n)
    flags = []
    u_prev = np.zeros(6)
    total = 0.0
    for k in range(n):
        t = sample_time(k, sc.ts)
        refs = np.array([sample_signal(refs_sig[name], t) for name in REFERENCE_NAMES])
        u_base = u_ss.copy()
        for i, name in enumerate(INPUT_NAMES):
            if name in dist_sig:
                u_base[i] = sample_signal(dist_sig[name], t)
        sample = {
            "k": k,
            "t": t,
            "x": x - x_ss,
            "refs": dict(zip(REFERENCE_NAMES, refs - ref_ss)),
            "u_prev": u_prev,
            "d": (u_base - u_ss)[[2, 3, 5]],
        }
        try:
            overrides, diag = controller.step(sample)
        except CdFilterError as exc:
            exc.t = t
            raise
        u = u_base.copy()
        for name, dev in overrides.items():
            i = INPUT_NAMES.index(name)
            u[i] = u_ss[i] + dev
        u_kernel = u.copy()
        if sc.fout_tracks_qf:
            f_mud = sample_signal(dist_sig["f_mud"], t)
            u_kernel[5] = f_mud
            u[5] = x[4] + f_mud
        ts_[k] = t
        xs[k] = x
        us[k] = u
        rs[k] = refs
        eta[k] = efficiency_or_nan(x[4], x[2], u[3], u[4])
        audit[k] = total
        x, inc, vflags, status = kernels.integrate(p, x, u_kernel, sc.h, sub, sc.fout_tracks_qf)
        _check_status(status, t)
        total += inc
        u_prev = u - u_ss
        flags.append("|".join(diag + kernels.flag_names(vflags)))
    return Trajectory(ts_, xs, us, rs, eta, flags, audit, x, total, controller.name)


def mass_balance_error(params: PlantParams, traj: Trajectory, c_r_ref: float) -> float:
    """Relative mismatch between vat solids accumulation and net inflow."""
    accumulated = params.v_vat * (traj.x_final[2] - traj.x[0, 2])
    return abs(accumulated - traj.audit_final) / max(params.v_vat * c_r_ref, 1e-12)
