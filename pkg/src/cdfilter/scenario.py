"""TOML scenario files: strict parsing, defaults and round-tripping.

A file has five sections::

    [params]            plant constants (SI)
    [operating_point]   steady-state knowns
    [controller]        type plus [controller.pi.<loop>] / [controller.mpc]
    [signals]           reference and input signals as segment lists
    [run]               duration, step sizes and output settings

Unknown keys are errors. Every key is optional except ``run.duration``
and ``controller.type``; omitted keys take the values written by
:func:`dump_defaults`.
"""

from __future__ import annotations

import math
import re
import sys
from dataclasses import dataclass, field, fields, replace

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

import tomli_w

from .equilibrium import SteadyKnowns, solve_steady_state
from .errors import ScenarioError
from .linearize import build_continuous
from .model import INPUT_NAMES, STATE_NAMES, PlantParams, PlantState
from .mpc import MpcConfig
from .pi import DEFAULT_TAU_CL, Loop, RefDirection, tune_default_gains
from .simulate import REFERENCE_NAMES, ControllerKind, ControllerSpec, Scenario, Signal

LOOP_NAMES = ("loop1", "loop2", "loop3_outer", "loop3_inner")
MANIPULATED_NAMES = ("t_m", "q_air_in", "c_in")
DEFAULT_OUTPUT_DIR = "out"

# absolute output limits of each PI loop; loop3_outer outputs the p_v setpoint
DEFAULT_PI_LIMITS = {
    "loop1": (0.0, 9.83),
    "loop2": (0.0, 300.0),
    "loop3_outer": (1_300.0, 101_300.0),
    "loop3_inner": (0.0, 0.15),
}
# operating-point quantity each loop output is a deviation of
_LOOP_ANCHOR = {
    "loop1": ("u", "t_m"),
    "loop2": ("u", "c_in"),
    "loop3_outer": ("x", "p_v"),
    "loop3_inner": ("u", "q_air_in"),
}


@dataclass(frozen=True)
class LoopSpec:
    """One PI loop as written in a file; absent gains are tuned."""

    tau_cl: float
    out_min: float = -math.inf
    out_max: float = math.inf
    kp: float | None = None
    ki: float | None = None
    kaw: float | None = None


def _default_loops():
    return {
        name: LoopSpec(DEFAULT_TAU_CL[name], *DEFAULT_PI_LIMITS[name]) for name in LOOP_NAMES
    }


@dataclass(frozen=True)
class ControllerSection:
    kind: ControllerKind = ControllerKind.PI
    omega_ref_direction: RefDirection = RefDirection.DEFAULT
    loops: dict = field(default_factory=_default_loops)
    mpc: MpcConfig = MpcConfig()


def _default_signals():
    return {
        "ref_q_f": Signal.step(3.2e-4, 200.0, 3.52e-4),
        "ref_c_r": Signal.step(25.0, 300.0, 30.0),
    }


@dataclass(frozen=True)
class RunSection:
    duration: float = 600.0
    h: float = 0.01
    ts: float = 0.1
    fout_tracks_qf: bool = False
    seed: int = 0
    initial_state: object = "op"  # "op", "zero" or a PlantState
    band_pct: float = 2.0
    output_dir: str = DEFAULT_OUTPUT_DIR


@dataclass(frozen=True)
class ScenarioFile:
    params: PlantParams = PlantParams()
    knowns: SteadyKnowns = SteadyKnowns()
    controller: ControllerSection = ControllerSection()
    signals: dict = field(default_factory=_default_signals)
    run: RunSection = RunSection()


SIGNAL_NAMES = tuple("ref_" + n for n in REFERENCE_NAMES) + INPUT_NAMES + ("f_mud",)


def _locate(text, section, key):
    """Best-effort line number of ``key`` inside ``[section]``."""
    current = ""
    header = re.compile(r"^\s*\[([^\]]+)\]")
    assign = re.compile(r"^\s*" + re.escape(key) + r"\s*=")
    for lineno, line in enumerate(text.splitlines(), start=1):
        m = header.match(line)
        if m:
            current = m.group(1).strip()
            continue
        if current == section and assign.match(line):
            return lineno
    for lineno, line in enumerate(text.splitlines(), start=1):
        m = header.match(line)
        if m and m.group(1).strip() == f"{section}.{key}".strip("."):
            return lineno
    return None


class _Reader:
    """Pops keys from nested tables and reports anything left over."""

    def __init__(self, text):
        self.text = text

    def fail(self, section, key, message):
        line = _locate(self.text, section, key) if key else None
        where = f"line {line}: " if line else ""
        raise ScenarioError(f"{where}[{section}] {message}")

    def table(self, data, section, key):
        value = data.pop(key, {})
        if not isinstance(value, dict):
            self.fail(section, key, f"{key!r} must be a table")
        return value

    def done(self, data, section):
        for key in data:
            self.fail(section, key, f"unknown key {key!r}")

    def number(self, data, section, key, default):
        if key not in data:
            return default
        value = data.pop(key)
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            self.fail(section, key, f"{key!r} must be a number, got {value!r}")
        return float(value)


def _build(reader, section, cls, data, defaults):
    """Construct a dataclass from numeric keys, wrapping validation errors."""
    values = {}
    for f in fields(cls):
        if f.name in data:
            values[f.name] = reader.number(data, section, f.name, None)
    reader.done(data, section)
    try:
        return replace(defaults, **values)
    except ValueError as exc:
        reader.fail(section, None, str(exc))


def _parse_params(reader, data):
    data = dict(data)
    mode = data.pop("resistance_mode", PlantParams().resistance_mode.value)
    try:
        params = _build(reader, "params", PlantParams, data, PlantParams())
        return replace(params, resistance_mode=mode)
    except ValueError as exc:
        reader.fail("params", "resistance_mode", str(exc))


def _parse_loops(reader, data):
    loops = _default_loops()
    for name in list(data):
        section = f"controller.pi.{name}"
        if name not in LOOP_NAMES:
            reader.fail("controller.pi", name, f"unknown loop {name!r}")
        spec = reader.table(data, "controller.pi", name)
        values = {}
        for key in ("tau_cl", "out_min", "out_max", "kp", "ki", "kaw"):
            if key in spec:
                values[key] = reader.number(spec, section, key, None)
        reader.done(spec, section)
        loops[name] = replace(loops[name], **values)
    return loops


def _bounds_table(reader, data, section, key, names, defaults):
    table = reader.table(data, section, key) if key in data else None
    if table is None:
        return defaults
    out = []
    for name in names:
        pair = table.pop(name, None)
        if pair is None:
            out.append((-math.inf, math.inf))
            continue
        if not (isinstance(pair, list) and len(pair) == 2):
            reader.fail(section, key, f"{key}.{name} must be a [min, max] pair")
        out.append((float(pair[0]), float(pair[1])))
    for extra in table:
        reader.fail(section, key, f"unknown {key} entry {extra!r}")
    return tuple(out)


def _weights(reader, data, section, key, size, default):
    if key not in data:
        return default
    value = data.pop(key)
    if not (isinstance(value, list) and len(value) == size):
        reader.fail(section, key, f"{key!r} must be a list of {size} numbers")
    return tuple(float(v) for v in value)


def _parse_mpc(reader, data, ts):
    section = "controller.mpc"
    base = MpcConfig()
    kwargs = {
        "n_pred": int(reader.number(data, section, "n_pred", base.n_pred)),
        "n_ctrl": int(reader.number(data, section, "n_ctrl", base.n_ctrl)),
        "q_weights": _weights(reader, data, section, "q_weights", 5, base.q_weights),
        "r_weights": _weights(reader, data, section, "r_weights", 3, base.r_weights),
        "u_bounds": _bounds_table(reader, data, section, "u_bounds", MANIPULATED_NAMES, base.u_bounds),
        "y_bounds": _bounds_table(reader, data, section, "y_bounds", STATE_NAMES, base.y_bounds),
        "penalize_moves": _flag(reader, data, section, "penalize_moves", base.penalize_moves),
        "scale_by_op": _flag(reader, data, section, "scale_by_op", base.scale_by_op),
        "ts": ts,
    }
    reader.done(data, section)
    try:
        return MpcConfig(**kwargs)
    except ValueError as exc:
        reader.fail(section, None, str(exc))


def _flag(reader, data, section, key, default):
    if key not in data:
        return default
    value = data.pop(key)
    if not isinstance(value, bool):
        reader.fail(section, key, f"{key!r} must be true or false")
    return value


def _parse_controller(reader, data, ts):
    section = "controller"
    if "type" not in data:
        reader.fail(section, None, "missing required key 'type'")
    value = data.pop("type")
    try:
        kind = ControllerKind(value)
    except ValueError:
        reader.fail(section, "type", f"type {value!r} is not one of {[k.value for k in ControllerKind]}")
    try:
        direction = RefDirection(data.pop("omega_ref_direction", RefDirection.DEFAULT.value))
    except ValueError:
        reader.fail(section, "omega_ref_direction", "omega_ref_direction must be 'default' or 'paper-literal'")
    loops = _parse_loops(reader, reader.table(data, section, "pi"))
    mpc = _parse_mpc(reader, reader.table(data, section, "mpc"), ts)
    reader.done(data, section)
    return ControllerSection(kind, direction, loops, mpc)


def _parse_signals(reader, data):
    signals = {}
    for name, segments in data.items():
        if name not in SIGNAL_NAMES:
            reader.fail("signals", name, f"unknown signal {name!r}; expected one of {list(SIGNAL_NAMES)}")
        if not isinstance(segments, list) or not all(
            isinstance(s, list) and len(s) == 3 for s in segments
        ):
            reader.fail("signals", name, f"{name!r} must be a list of [start, kind, value] segments")
        try:
            signals[name] = Signal(tuple(tuple(s) for s in segments))
        except (TypeError, ValueError) as exc:
            reader.fail("signals", name, f"{name}: {exc}")
    return signals


def _parse_run(reader, data):
    section = "run"
    if "duration" not in data:
        reader.fail(section, None, "missing required key 'duration'")
    base = RunSection()
    initial = data.pop("initial_state", base.initial_state)
    if isinstance(initial, dict):
        missing = set(STATE_NAMES) - set(initial)
        extra = set(initial) - set(STATE_NAMES)
        if missing or extra:
            reader.fail(section, "initial_state", f"initial_state needs exactly the keys {list(STATE_NAMES)}")
        initial = PlantState(**{k: float(initial[k]) for k in STATE_NAMES})
    elif initial not in ("op", "zero"):
        reader.fail(section, "initial_state", "initial_state must be 'op', 'zero' or a state table")
    output_dir = data.pop("output_dir", base.output_dir)
    if not isinstance(output_dir, str):
        reader.fail(section, "output_dir", "output_dir must be a string")
    seed = data.pop("seed", base.seed)
    if not isinstance(seed, int) or isinstance(seed, bool):
        reader.fail(section, "seed", "seed must be an integer")
    run = RunSection(
        duration=reader.number(data, section, "duration", base.duration),
        h=reader.number(data, section, "h", base.h),
        ts=reader.number(data, section, "ts", base.ts),
        fout_tracks_qf=_flag(reader, data, section, "fout_tracks_qf", base.fout_tracks_qf),
        seed=seed,
        initial_state=initial,
        band_pct=reader.number(data, section, "band_pct", base.band_pct),
        output_dir=output_dir,
    )
    reader.done(data, section)
    return run


def parse_scenario(text: str) -> ScenarioFile:
    """Parse scenario text; raises :class:`ScenarioError` with a line number where possible."""
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ScenarioError(f"malformed scenario file: {exc}") from None
    reader = _Reader(text)
    for key in data:
        if key not in ("params", "operating_point", "controller", "signals", "run"):
            reader.fail("", key, f"unknown section {key!r}")
    params = _parse_params(reader, reader.table(data, "", "params"))
    knowns = _build(reader, "operating_point", SteadyKnowns, reader.table(data, "", "operating_point"),
                    SteadyKnowns())
    run = _parse_run(reader, reader.table(data, "", "run"))
    if "controller" not in data:
        reader.fail("controller", None, "missing required section")
    controller = _parse_controller(reader, reader.table(data, "", "controller"), run.ts)
    signals = _parse_signals(reader, reader.table(data, "", "signals"))
    return ScenarioFile(params, knowns, controller, signals, run)


def load_scenario(path) -> ScenarioFile:
    with open(path, encoding="utf-8") as fh:
        return parse_scenario(fh.read())


def _plain(dc, skip=()):
    return {f.name: getattr(dc, f.name) for f in fields(dc) if f.name not in skip}


def _bounds_dict(names, bounds):
    return {n: [lo, hi] for n, (lo, hi) in zip(names, bounds) if (lo, hi) != (-math.inf, math.inf)}


def scenario_to_dict(sf: ScenarioFile) -> dict:
    params = _plain(sf.params)
    params["resistance_mode"] = sf.params.resistance_mode.value
    loops = {}
    for name, spec in sf.controller.loops.items():
        loops[name] = {k: v for k, v in _plain(spec).items() if v is not None}
    mpc = sf.controller.mpc
    run = _plain(sf.run)
    if isinstance(sf.run.initial_state, PlantState):
        run["initial_state"] = _plain(sf.run.initial_state)
    return {
        "params": params,
        "operating_point": _plain(sf.knowns),
        "controller": {
            "type": sf.controller.kind.value,
            "omega_ref_direction": sf.controller.omega_ref_direction.value,
            "pi": loops,
            "mpc": {
                "n_pred": mpc.n_pred,
                "n_ctrl": mpc.n_ctrl,
                "q_weights": list(mpc.q_weights),
                "r_weights": list(mpc.r_weights),
                "u_bounds": _bounds_dict(MANIPULATED_NAMES, mpc.u_bounds),
                "y_bounds": _bounds_dict(STATE_NAMES, mpc.y_bounds),
                "penalize_moves": mpc.penalize_moves,
                "scale_by_op": mpc.scale_by_op,
            },
        },
        "signals": {
            name: [[t, kind.value, v] for t, kind, v in sig.segments] for name, sig in sf.signals.items()
        },
        "run": run,
    }


def dump_scenario(sf: ScenarioFile) -> str:
    return tomli_w.dumps(scenario_to_dict(sf))


def dump_defaults() -> str:
    """Default scenario: reference steps in q_f at 200 s and c_r at 300 s."""
    return dump_scenario(ScenarioFile())


def _pi_architecture(sf: ScenarioFile, params, op):
    m = build_continuous(params, op)
    loops = sf.controller.loops
    limits = {}
    for name, spec in loops.items():
        kind, var = _LOOP_ANCHOR[name]
        anchor = getattr(op.u_ss if kind == "u" else op.x_ss, var)
        limits[name] = (spec.out_min - anchor, spec.out_max - anchor)
    arch = tune_default_gains(
        m,
        tau_cl={n: s.tau_cl for n, s in loops.items()},
        limits=limits,
        direction=sf.controller.omega_ref_direction,
    )
    updates = {}
    for name, spec in loops.items():
        gains = getattr(arch, name).gains
        changes = {k: getattr(spec, k) for k in ("kp", "ki", "kaw") if getattr(spec, k) is not None}
        if changes:
            try:
                updates[name] = Loop(replace(gains, **changes))
            except ValueError as exc:
                raise ScenarioError(f"[controller.pi.{name}] {exc}") from None
    return replace(arch, **updates)


def build_scenario(sf: ScenarioFile, kind: ControllerKind | None = None):
    """Solve the operating point and assemble a runnable ``(params, Scenario)``.

    ``kind`` overrides the controller type named in the file.
    """
    params = sf.params
    op = solve_steady_state(params, sf.knowns)
    kind = ControllerKind(kind) if kind is not None else sf.controller.kind
    spec = ControllerSpec(kind=kind, omega_ref_direction=sf.controller.omega_ref_direction)
    if kind is ControllerKind.PI:
        spec = replace(spec, pi=_pi_architecture(sf, params, op))
    elif kind is ControllerKind.MPC:
        spec = replace(spec, mpc=replace(sf.controller.mpc, ts=sf.run.ts))
    init = sf.run.initial_state
    if init == "op":
        init = None
    elif init == "zero":
        init = PlantState()
    references = {name[4:]: sig for name, sig in sf.signals.items() if name.startswith("ref_")}
    disturbances = {name: sig for name, sig in sf.signals.items() if not name.startswith("ref_")}
    try:
        sc = Scenario(
            duration=sf.run.duration,
            op=op,
            h=sf.run.h,
            ts=sf.run.ts,
            controller=spec,
            references=references,
            disturbances=disturbances,
            fout_tracks_qf=sf.run.fout_tracks_qf,
            seed=sf.run.seed,
            initial_state=init,
        )
    except ValueError as exc:
        raise ScenarioError(f"[run] {exc}") from None
    return params, sc
