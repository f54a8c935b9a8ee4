"""Command-line entry point.

Exit codes: 0 success, 1 failed self-check, 2 bad input (parse error,
unknown key, invalid scenario or range), 3 invalid vacuum, 4 unsupported
resistance mode, 5 numerical blow-up, 6 infeasible QP.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor

from . import output
from .analyze import compute_metrics, efficiency_surface
from .equilibrium import scaled_residual_norm, solve_steady_state
from .errors import (
    CdFilterError,
    Infeasible,
    InvalidVacuum,
    NumericalBlowup,
    ScenarioError,
    UnsupportedResistanceMode,
)
from .linearize import build_continuous, discretize, finite_difference_jacobian, max_relative_error
from .model import INPUT_NAMES, STATE_NAMES
from .scenario import ScenarioFile, build_scenario, dump_defaults, load_scenario
from .simulate import ControllerKind, run_closed_loop

OUTPUT_ENV = "CDFILTER_OUTPUT_DIR"
RESIDUAL_TOL = 1e-9
FD_TOL = 1e-6

EXIT_CODES = (
    (ScenarioError, 2),
    (InvalidVacuum, 3),
    (UnsupportedResistanceMode, 4),
    (NumericalBlowup, 5),
    (Infeasible, 6),
)


class UsageError(Exception):
    pass


def _output_dir(args, sf: ScenarioFile | None):
    if getattr(args, "output_dir", None):
        return args.output_dir
    if os.environ.get(OUTPUT_ENV):
        return os.environ[OUTPUT_ENV]
    return sf.run.output_dir if sf is not None else "out"


def _load(path) -> ScenarioFile:
    try:
        return load_scenario(path)
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario: {exc}") from None


def cmd_steady(args) -> int:
    sf = _load(args.scenario)
    op = solve_steady_state(sf.params, sf.knowns)
    norm = scaled_residual_norm(sf.params, op)
    values = [*op.x_ss.as_array(), *op.u_ss.as_array()]
    rows = [(n + "_ss", float(v)) for n, v in zip(STATE_NAMES + INPUT_NAMES, values)]
    rows.append(("residual_norm", norm))
    for name, value in rows:
        print(f"{name:<14} {value!r}")
    if args.csv:
        output.atomic_write(args.csv, output.csv_text(("quantity", "value"), rows))
    return 0 if norm < RESIDUAL_TOL else 1


def cmd_linearize(args) -> int:
    sf = _load(args.scenario)
    op = solve_steady_state(sf.params, sf.knowns)
    m = build_continuous(sf.params, op)
    out = _output_dir(args, sf)
    output.write_matrix(os.path.join(out, "A.csv"), m.a)
    output.write_matrix(os.path.join(out, "B.csv"), m.b)
    if args.discretize is not None:
        dm = discretize(m, args.discretize, args.method)
        output.write_matrix(os.path.join(out, "A_d.csv"), dm.a_d)
        output.write_matrix(os.path.join(out, "B_d.csv"), dm.b_d)
    jac_x, jac_u = finite_difference_jacobian(sf.params, op)
    err = max(max_relative_error(m.a, jac_x), max_relative_error(m.b, jac_u))
    status = "pass" if err < FD_TOL else "FAIL"
    print(f"max relative error analytic vs finite difference: {err:.3e} ({status})")
    print(f"matrices written to {out}")
    return 0 if err < FD_TOL else 1


def _run_one(sf, kind):
    params, sc = build_scenario(sf, kind)
    traj = run_closed_loop(params, sc)
    return traj, compute_metrics(traj, band_pct=sf.run.band_pct)


def _print_metrics(reports):
    band = reports[0].metrics[next(iter(reports[0].metrics))].band_pct
    print(f"{'controller':<10} {'variable':<8} {'ISE':>12} {'overshoot%':>11} "
          f"{'settle[s]':>10} {'sigma':>12}   (settling band {band:g}%)")
    for report in reports:
        for name, m in report.metrics.items():
            settle = "not-settled" if math.isinf(m.settling_time) else f"{m.settling_time:.2f}"
            print(f"{report.controller:<10} {name:<8} {m.ise:>12.4e} {m.overshoot_pct:>11.3f} "
                  f"{settle:>10} {m.error_stddev:>12.4e}")


def cmd_simulate(args) -> int:
    sf = _load(args.scenario)
    if args.compare:
        kinds = [k.strip() for k in args.compare.split(",") if k.strip()]
    else:
        kinds = [args.controller or sf.controller.kind.value]
    try:
        kinds = [ControllerKind(k) for k in kinds]
    except ValueError:
        raise UsageError(f"unknown controller in {kinds}; choose from "
                         f"{[k.value for k in ControllerKind]}") from None
    out = _output_dir(args, sf)
    if len(kinds) > 1:
        with ThreadPoolExecutor(max_workers=len(kinds)) as pool:
            results = list(pool.map(lambda k: _run_one(sf, k), kinds))
    else:
        results = [_run_one(sf, kinds[0])]
    reports = []
    for kind, (traj, report) in zip(kinds, results):
        output.write_trajectory(os.path.join(out, f"trajectory_{kind.value}.csv"), traj)
        output.write_metrics(os.path.join(out, f"metrics_{kind.value}.csv"), [report])
        reports.append(report)
    _print_metrics(reports)
    if len(reports) == 2:
        diff = reports[0].diff(reports[1])
        output.atomic_write(os.path.join(out, "metrics_diff.csv"), output.diff_csv(diff))
        for name in sorted(diff):
            print(f"{name}: error sigma reduction {reports[1].controller} vs "
                  f"{reports[0].controller} = {diff[name]['stddev_reduction_pct']:.1f}%")
    print(f"outputs written to {out}")
    return 0


def parse_range(text):
    """``a:b:n`` into ``((a, b), n)``."""
    parts = text.split(":")
    if len(parts) != 3:
        raise UsageError(f"range {text!r} must look like start:stop:count")
    try:
        lo, hi, n = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        raise UsageError(f"range {text!r} must look like start:stop:count") from None
    if not (lo > 0 and hi > lo and n >= 2):
        raise UsageError(f"range {text!r} needs 0 < start < stop and count >= 2")
    return (lo, hi), n


def cmd_surface(args) -> int:
    sf = _load(args.scenario) if args.scenario else None
    fin, n = parse_range(args.fin)
    cin, m = parse_range(args.cin)
    surface = efficiency_surface(args.q_f, args.c_r, fin, cin, n, m)
    path = os.path.join(_output_dir(args, sf), "surface.csv")
    output.write_surface(path, surface)
    monotone = surface.is_monotone()
    print(f"{n * m} cells written to {path}")
    print(f"monotonicity check: {'strictly increasing' if monotone else 'NOT strictly increasing'} "
          "along every row and column")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="cdfilter", description="Continuous-disc vacuum filter simulation and control toolkit."
    )
    parser.add_argument("--dump-defaults", action="store_true",
                        help="print the default scenario file and exit")
    parser.add_argument("-v", "--verbose", action="store_true", help="enable debug logging")
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("steady", help="solve and report the operating point")
    p.add_argument("scenario")
    p.add_argument("--csv", help="also write the report to this CSV file")
    p.set_defaults(func=cmd_steady)

    p = sub.add_parser("linearize", help="write A/B matrices and check them by finite differences")
    p.add_argument("scenario")
    p.add_argument("--discretize", type=float, metavar="TS", help="also write sampled matrices")
    p.add_argument("--method", choices=["ZeroOrderHold", "ForwardEuler"], default="ZeroOrderHold")
    p.add_argument("--output-dir")
    p.set_defaults(func=cmd_linearize)

    p = sub.add_parser("simulate", help="run the closed loop and write trajectory and metrics CSVs")
    p.add_argument("scenario")
    p.add_argument("--controller", choices=[k.value for k in ControllerKind])
    p.add_argument("--compare", metavar="A,B", help="run several controllers, e.g. pi,mpc")
    p.add_argument("--output-dir")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("surface", help="efficiency over a grid of inflow and feed concentration")
    p.add_argument("scenario", nargs="?")
    p.add_argument("--fin", required=True, metavar="A:B:N")
    p.add_argument("--cin", required=True, metavar="A:B:M")
    p.add_argument("--q-f", type=float, default=0.04, help="fixed filtrate flow [m3/s]")
    p.add_argument("--c-r", type=float, default=25.0, help="fixed vat concentration [kg/m3]")
    p.add_argument("--output-dir")
    p.set_defaults(func=cmd_surface)
    return parser


def _exit_code(exc) -> int:
    for cls, code in EXIT_CODES:
        if isinstance(exc, cls):
            return code
    return 1


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.dump_defaults:
        sys.stdout.write(dump_defaults())
        return 0
    if args.command is None:
        parser.print_help(sys.stderr)
        return 2
    try:
        return args.func(args)
    except (UsageError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except CdFilterError as exc:
        when = getattr(exc, "t", None)
        stamp = f" at t={when!r} s" if when is not None else ""
        print(f"error{stamp}: {type(exc).__name__}: {exc}", file=sys.stderr)
        if isinstance(exc, InvalidVacuum):
            print("note: zero or negative driving pressure (p_v_ss >= p_atm) gives no filtrate flow",
                  file=sys.stderr)
        return _exit_code(exc)


if __name__ == "__main__":
    sys.exit(main())
