"""Closed-loop performance metrics and the efficiency surface.

Metric functions accept anything exposing ``t`` and ``column(name)``, so
they work on :class:`~cdfilter.simulate.Trajectory` objects and on
synthetic :class:`Series`. Integrals use the trapezoid rule on the
trajectory's own sampling grid, so ISE values depend on that grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateStep
from .model import efficiency

NOT_SETTLED = math.inf
DEFAULT_BAND_PCT = 2.0
TRACKED = ("q_f", "c_r")


class Series:
    """Minimal trajectory stand-in built from plain arrays."""

    def __init__(self, t, **columns):
        self.t = np.asarray(t, dtype=float)
        self._columns = {k: np.asarray(v, dtype=float) for k, v in columns.items()}
        for name, values in self._columns.items():
            if values.shape != self.t.shape:
                raise ValueError(f"column {name!r} has {values.size} samples, expected {self.t.size}")

    def column(self, name):
        return self._columns[name]


def _window_mask(t, window):
    if window is None:
        return np.ones(t.size, dtype=bool)
    lo, hi = window
    if lo > hi:
        raise ValueError("window start must not exceed its end")
    if lo < t[0] - 1e-12 or hi > t[-1] + 1e-12:
        raise ValueError(f"window {window} lies outside the trajectory span [{t[0]}, {t[-1]}]")
    eps = 1e-9 * max(1.0, abs(hi))
    return (t >= lo - eps) & (t <= hi + eps)


def _reference(traj, variable, ref):
    """Reference samples: explicit value/array/callable, else the ``ref_`` column."""
    t = traj.t
    if ref is None:
        return traj.column("ref_" + variable)
    if callable(ref):
        return np.array([ref(tk) for tk in t], dtype=float)
    if hasattr(ref, "segments"):
        from .simulate import sample_signal

        return np.array([sample_signal(ref, tk) for tk in t])
    return np.broadcast_to(np.asarray(ref, dtype=float), t.shape)


def tracking_error(traj, variable, ref=None):
    return _reference(traj, variable, ref) - traj.column(variable)


def ise(traj, variable, ref=None, window=None) -> float:
    """Trapezoidal integral of the squared tracking error over ``window``."""
    mask = _window_mask(traj.t, window)
    e = tracking_error(traj, variable, ref)[mask]
    t = traj.t[mask]
    if t.size < 2:
        return 0.0
    sq = e * e
    return float(np.sum(0.5 * (sq[1:] + sq[:-1]) * np.diff(t)))


def overshoot(traj, variable, step_time, initial_ref, final_ref, end=None) -> float:
    """Peak excursion past ``final_ref`` as a percentage of the step size.

    Only samples at or after ``step_time`` (and up to ``end``) count, and
    only excursions in the direction of the step.
    """
    size = final_ref - initial_ref
    if size == 0:
        raise DegenerateStep("overshoot is undefined when the reference does not change")
    t = traj.t
    mask = t >= step_time - 1e-9
    if end is not None:
        mask &= t <= end + 1e-9
    y = traj.column(variable)[mask]
    if y.size == 0:
        return 0.0
    beyond = (y - final_ref) * math.copysign(1.0, size)
    return 100.0 * max(0.0, float(beyond.max())) / abs(size)


def settling_time(traj, variable, step_time, final_ref, band_pct=DEFAULT_BAND_PCT,
                  initial_ref=None, end=None) -> float:
    """Time after ``step_time`` from which the output stays inside the band.

    The band half-width is ``band_pct`` percent of the step size. When
    ``initial_ref`` is omitted the output value at ``step_time`` stands in
    for it. Returns :data:`NOT_SETTLED` if the band is never held to ``end``.
    """
    if not band_pct > 0:
        raise ValueError("band_pct must be positive")
    t = traj.t
    y = traj.column(variable)
    mask = t >= step_time - 1e-9
    if end is not None:
        mask &= t <= end + 1e-9
    t, y = t[mask], y[mask]
    if t.size == 0:
        return NOT_SETTLED
    start = y[0] if initial_ref is None else initial_ref
    size = abs(final_ref - start)
    band = band_pct / 100.0 * size
    outside = np.flatnonzero(np.abs(y - final_ref) > band)
    if outside.size == 0:
        return max(0.0, float(t[0] - step_time))
    last = outside[-1]
    if last == t.size - 1:
        return NOT_SETTLED
    return float(t[last + 1] - step_time)


def error_stddev(traj, variable, ref=None, window=None) -> float:
    """Population standard deviation of the tracking error."""
    mask = _window_mask(traj.t, window)
    e = tracking_error(traj, variable, ref)[mask]
    if e.size < 2:
        raise ValueError("error_stddev needs at least two samples in the window")
    return float(np.std(e))


def reference_step(traj, variable):
    """First change of the ``ref_`` column as ``(time, before, after)``, or None."""
    r = traj.column("ref_" + variable)
    changed = np.flatnonzero(r != r[0])
    if changed.size == 0:
        return None
    k = changed[0]
    return float(traj.t[k]), float(r[0]), float(r[-1])


@dataclass(frozen=True)
class VariableMetrics:
    ise: float
    overshoot_pct: float
    settling_time: float
    error_stddev: float
    band_pct: float = DEFAULT_BAND_PCT

    @property
    def settled(self) -> bool:
        return math.isfinite(self.settling_time)


@dataclass(frozen=True)
class MetricsReport:
    """Per-variable metrics of one run, keyed by state name."""

    controller: str
    metrics: dict = field(default_factory=dict)

    def __getitem__(self, variable) -> VariableMetrics:
        return self.metrics[variable]

    def diff(self, other: "MetricsReport") -> dict:
        """Deltas ``other - self`` plus the percentage reduction in error σ."""
        out = {}
        for name in self.metrics.keys() & other.metrics.keys():
            a, b = self.metrics[name], other.metrics[name]
            out[name] = {
                "ise": b.ise - a.ise,
                "overshoot_pct": b.overshoot_pct - a.overshoot_pct,
                "settling_time": b.settling_time - a.settling_time,
                "error_stddev": b.error_stddev - a.error_stddev,
                "stddev_reduction_pct": stddev_reduction(a.error_stddev, b.error_stddev),
            }
        return out


def stddev_reduction(baseline: float, improved: float) -> float:
    """Percent by which ``improved`` lowers the error σ relative to ``baseline``."""
    if baseline == 0:
        return 0.0 if improved == 0 else -math.inf
    return 100.0 * (1.0 - improved / baseline)


def compute_metrics(traj, variables=TRACKED, band_pct=DEFAULT_BAND_PCT, controller=None) -> MetricsReport:
    """Table-style metrics for each tracked variable over the whole run.

    Overshoot and settling are measured from the first change of the
    variable's reference; without one both are reported as 0.
    """
    metrics = {}
    for name in variables:
        step = reference_step(traj, name)
        if step is None:
            over, settle = 0.0, 0.0
        else:
            t0, before, after = step
            over = overshoot(traj, name, t0, before, after)
            settle = settling_time(traj, name, t0, after, band_pct, initial_ref=before)
        metrics[name] = VariableMetrics(
            ise=ise(traj, name),
            overshoot_pct=over,
            settling_time=settle,
            error_stddev=error_stddev(traj, name),
            band_pct=band_pct,
        )
    return MetricsReport(controller or getattr(traj, "controller", ""), metrics)


@dataclass(frozen=True)
class EfficiencySurface:
    f_in: np.ndarray
    c_in: np.ndarray
    eta: np.ndarray  # eta[i, j] at (f_in[i], c_in[j])

    def rows(self):
        for i, f in enumerate(self.f_in):
            for j, c in enumerate(self.c_in):
                yield float(f), float(c), float(self.eta[i, j])

    def is_monotone(self) -> bool:
        """True when every row and column is strictly increasing."""
        return bool(np.all(np.diff(self.eta, axis=0) > 0) and np.all(np.diff(self.eta, axis=1) > 0))


def grid_axis(lo: float, hi: float, n: int) -> np.ndarray:
    if n < 2:
        raise ValueError("a grid axis needs at least two points")
    if lo < 0 or hi < 0:
        raise ValueError("grid ranges must be non-negative")
    if not lo < hi:
        raise ValueError("grid range start must be below its end")
    return np.linspace(lo, hi, n)


def efficiency_surface(q_f: float, c_r: float, fin_range, cin_range, n: int, m: int) -> EfficiencySurface:
    """Efficiency over an ``n`` by ``m`` grid of inflow and feed concentration."""
    fins = grid_axis(*fin_range, n)
    cins = grid_axis(*cin_range, m)
    eta = np.empty((n, m))
    for i, f in enumerate(fins):
        for j, c in enumerate(cins):
            eta[i, j] = efficiency(q_f, c_r, f, c)
    return EfficiencySurface(fins, cins, eta)


__all__ = [
    "NOT_SETTLED",
    "EfficiencySurface",
    "MetricsReport",
    "Series",
    "VariableMetrics",
    "compute_metrics",
    "efficiency_surface",
    "error_stddev",
    "grid_axis",
    "ise",
    "overshoot",
    "reference_step",
    "settling_time",
    "stddev_reduction",
    "tracking_error",
]
