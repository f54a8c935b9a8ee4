"""CSV writers for trajectories, metrics, matrices and surfaces.

Every file is written to a temporary sibling and renamed into place, so
an interrupted run never leaves a truncated CSV behind. Floats use the
shortest round-trip representation (``repr``).
"""

from __future__ import annotations

import math
import os
import tempfile

from .model import INPUT_NAMES, STATE_NAMES

TRAJECTORY_HEADER = (
    ("t",) + STATE_NAMES + INPUT_NAMES + ("ref_q_f", "ref_c_r", "ref_f_in", "eta", "diag_flags")
)
METRICS_HEADER = ("controller", "variable", "ise", "overshoot_pct", "settling_time", "error_stddev", "band_pct")
DIFF_HEADER = (
    "variable",
    "delta_ise",
    "delta_overshoot_pct",
    "delta_settling_time",
    "delta_error_stddev",
    "stddev_reduction_pct",
)


def fmt(value) -> str:
    if isinstance(value, str):
        return value
    return repr(float(value))


def fmt_settling(value) -> str:
    return "not-settled" if math.isinf(value) else fmt(value)


def atomic_write(path, text: str):
    """Replace ``path`` with ``text`` via write-then-rename."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", suffix=".csv", dir=directory)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def csv_text(header, rows):
    out = [",".join(header)]
    out.extend(",".join(fmt(v) for v in row) for row in rows)
    return "\n".join(out) + "\n"


def trajectory_csv(traj) -> str:
    rows = []
    for k in range(traj.t.size):
        rows.append(
            [traj.t[k], *traj.x[k], *traj.u[k], *traj.refs[k], traj.eta[k], traj.flags[k]]
        )
    return csv_text(TRAJECTORY_HEADER, rows)


def metrics_rows(report):
    for name, m in report.metrics.items():
        yield [report.controller, name, m.ise, m.overshoot_pct, fmt_settling(m.settling_time),
               m.error_stddev, m.band_pct]


def metrics_csv(reports) -> str:
    rows = [row for report in reports for row in metrics_rows(report)]
    return csv_text(METRICS_HEADER, rows)


def diff_csv(diff: dict) -> str:
    rows = []
    for name in sorted(diff):
        d = diff[name]
        rows.append([name, d["ise"], d["overshoot_pct"], d["settling_time"],
                     d["error_stddev"], d["stddev_reduction_pct"]])
    return csv_text(DIFF_HEADER, rows)


def matrix_csv(m) -> str:
    """Row-major ``row,col,value`` dump with 0-based indices."""
    rows = [[str(i), str(j), m[i, j]] for i in range(m.shape[0]) for j in range(m.shape[1])]
    return csv_text(("row", "col", "value"), rows)


def surface_csv(surface) -> str:
    return csv_text(("f_in", "c_in", "eta"), surface.rows())


def write_trajectory(path, traj):
    atomic_write(path, trajectory_csv(traj))


def write_metrics(path, reports):
    atomic_write(path, metrics_csv(reports))


def write_matrix(path, m):
    atomic_write(path, matrix_csv(m))


def write_surface(path, surface):
    atomic_write(path, surface_csv(surface))
