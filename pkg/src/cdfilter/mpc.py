"""Centralized linear MPC on the sampled deviation model."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .equilibrium import OperatingPoint
from .errors import Infeasible, IterationLimit
from .linearize import DiscreteLinearModel
from .qp import QpProblem, solve_qp

log = logging.getLogger(__name__)

MANIPULATED = (0, 1, 4)  # t_m, q_air_in, c_in
MEASURED_DISTURBANCES = (2, 3, 5)  # q_air_out, f_in, f_out
SOFT_PENALTY = 1e6
KKT_TOL = 1e-8


@dataclass(frozen=True)
class MpcConfig:
    """Horizons, weights and constraints of the MPC.

    Bounds are absolute (SI); they are shifted into deviation coordinates
    around the operating point at solve time. With ``scale_by_op`` the
    weights are divided by the squared operating-point magnitude of their
    variable, so a unit weight means "unit penalty per relative deviation".
    """

    n_pred: int = 50
    n_ctrl: int = 10
    q_weights: tuple = (0.0, 0.0, 1.0, 0.0, 1.0)
    r_weights: tuple = (0.01, 0.01, 0.01)
    u_bounds: tuple = ((0.0, 10.0), (0.0, 0.15), (0.0, 300.0))
    y_bounds: tuple = (None, None, (None, 40.0), None, None)
    ts: float = 0.1
    penalize_moves: bool = True
    scale_by_op: bool = True
    manipulated: tuple = MANIPULATED
    measured_disturbances: tuple = MEASURED_DISTURBANCES

    def __post_init__(self):
        object.__setattr__(self, "q_weights", tuple(float(w) for w in self.q_weights))
        object.__setattr__(self, "r_weights", tuple(float(w) for w in self.r_weights))
        object.__setattr__(self, "u_bounds", tuple(_pair(b) for b in self.u_bounds))
        object.__setattr__(self, "y_bounds", tuple(_pair(b) for b in self.y_bounds))
        object.__setattr__(self, "manipulated", tuple(int(i) for i in self.manipulated))
        object.__setattr__(
            self, "measured_disturbances", tuple(int(i) for i in self.measured_disturbances)
        )
        if not 1 <= self.n_ctrl <= self.n_pred:
            raise ValueError("horizons must satisfy 1 <= n_ctrl <= n_pred")
        if any(w < 0 for w in self.q_weights + self.r_weights):
            raise ValueError("weights must be non-negative")
        if not any(w > 0 for w in self.q_weights):
            raise ValueError("at least one output weight must be positive")
        if len(self.r_weights) != len(self.manipulated) or len(self.u_bounds) != len(self.manipulated):
            raise ValueError("r_weights and u_bounds need one entry per manipulated input")
        if len(self.y_bounds) != len(self.q_weights):
            raise ValueError("y_bounds needs one entry per output")
        for lo, hi in self.u_bounds + self.y_bounds:
            if lo > hi or lo == hi:
                raise ValueError(f"bound min {lo} must be below max {hi}")
        if not self.ts > 0:
            raise ValueError("ts must be positive")


def _pair(bound):
    if bound is None:
        return (-np.inf, np.inf)
    lo, hi = bound
    return (-np.inf if lo is None else float(lo), np.inf if hi is None else float(hi))


@dataclass(frozen=True)
class Prediction:
    free: np.ndarray  # (ny*n_pred, nx)
    forced: np.ndarray  # (ny*n_pred, nu*n_ctrl)
    disturbance: np.ndarray  # (ny*n_pred, nd), disturbances held over the horizon
    n_pred: int
    n_ctrl: int


def build_prediction_matrices(dm: DiscreteLinearModel, manipulated, n_pred: int, n_ctrl: int):
    """Batch predictions ``y_1..y_np = F x0 + Phi U`` with ``U`` held after ``n_ctrl``."""
    a, b = np.atleast_2d(dm.a_d), np.atleast_2d(dm.b_d)[:, list(manipulated)]
    nx, nu = a.shape[0], b.shape[1]
    powers = [np.eye(nx)]
    for _ in range(n_pred):
        powers.append(powers[-1] @ a)
    free = np.vstack(powers[1:])
    # impulse[k] = A^k B; cumulative[k] = sum_{i<=k} A^i B
    impulse = [p @ b for p in powers[:n_pred]]
    cumulative = np.cumsum(np.stack(impulse), axis=0)
    forced = np.zeros((nx * n_pred, nu * n_ctrl))
    for i in range(n_pred):
        rows = slice(i * nx, (i + 1) * nx)
        for j in range(min(i + 1, n_ctrl)):
            cols = slice(j * nu, (j + 1) * nu)
            if j < n_ctrl - 1:
                forced[rows, cols] = impulse[i - j]
            else:
                forced[rows, cols] = cumulative[i - j]
    return free, forced


def prediction(dm: DiscreteLinearModel, cfg: MpcConfig) -> Prediction:
    free, forced = build_prediction_matrices(dm, cfg.manipulated, cfg.n_pred, cfg.n_ctrl)
    if cfg.measured_disturbances:
        _, dist = build_prediction_matrices(dm, cfg.measured_disturbances, cfg.n_pred, 1)
    else:
        dist = np.zeros((free.shape[0], 0))
    return Prediction(free, forced, dist, cfg.n_pred, cfg.n_ctrl)


def effective_weights(cfg: MpcConfig, op: OperatingPoint | None):
    q = np.array(cfg.q_weights)
    r = np.array(cfg.r_weights)
    if cfg.scale_by_op and op is not None:
        q = q / _magnitudes(op.x_ss.as_array()) ** 2
        r = r / input_scales(cfg, op) ** 2
    return q, r


def _magnitudes(values):
    mags = np.abs(np.asarray(values, dtype=float))
    return np.where(mags > 0, mags, 1.0)


def input_scales(cfg: MpcConfig, op: OperatingPoint | None):
    if op is None:
        return np.ones(len(cfg.manipulated))
    return _magnitudes(op.u_ss.as_array()[list(cfg.manipulated)])


def _deviation_bounds(bounds, anchor):
    lo = np.array([b[0] for b in bounds]) - anchor
    hi = np.array([b[1] for b in bounds]) - anchor
    return lo, hi


class QpBuilder:
    """Precomputes the parts of the MPC QP that do not change between samples."""

    def __init__(self, pred: Prediction, cfg: MpcConfig, op: OperatingPoint | None = None):
        self.pred = pred
        self.ny = ny = pred.free.shape[0] // pred.n_pred
        self.nu = nu = pred.forced.shape[1] // pred.n_ctrl
        n = nu * pred.n_ctrl
        q, r = effective_weights(cfg, op)
        self.q_bar = np.tile(q, pred.n_pred)
        self.r_bar = np.tile(r, pred.n_ctrl)
        phi = pred.forced
        self.penalize_moves = cfg.penalize_moves
        self.hessian = phi.T @ (self.q_bar[:, None] * phi)
        if cfg.penalize_moves:
            # moves U_j - U_{j-1}, with U_{-1} the previously applied input
            self.diff = np.eye(n) - np.eye(n, k=-nu)
            self.hessian = self.hessian + self.diff.T @ (self.r_bar[:, None] * self.diff)
        else:
            self.hessian = self.hessian + np.diag(self.r_bar)
        self.hessian = 0.5 * (self.hessian + self.hessian.T)
        self.phi_q = phi.T * self.q_bar

        u_anchor = op.u_ss.as_array()[list(cfg.manipulated)] if op is not None else np.zeros(nu)
        lo, hi = _deviation_bounds(cfg.u_bounds, u_anchor)
        lo_bar, hi_bar = np.tile(lo, pred.n_ctrl), np.tile(hi, pred.n_ctrl)
        upper, lower = np.isfinite(hi_bar), np.isfinite(lo_bar)
        eye = np.eye(n)
        y_anchor = op.x_ss.as_array() if op is not None else np.zeros(ny)
        y_lo, y_hi = _deviation_bounds(cfg.y_bounds, y_anchor)
        self.y_hi_bar, self.y_lo_bar = np.tile(y_hi, pred.n_pred), np.tile(y_lo, pred.n_pred)
        self.y_upper, self.y_lower = np.isfinite(self.y_hi_bar), np.isfinite(self.y_lo_bar)
        self.matrix = np.vstack([eye[upper], -eye[lower], phi[self.y_upper], -phi[self.y_lower]])
        self.box_rhs = np.concatenate([hi_bar[upper], -lo_bar[lower]])

    def build(self, x0, ref, u_prev=None, disturbance=None) -> QpProblem:
        pred = self.pred
        x0 = np.atleast_1d(np.asarray(x0, dtype=float))
        ref = np.atleast_1d(np.asarray(ref, dtype=float))
        if ref.size == self.ny:
            ref = np.tile(ref, pred.n_pred)
        offset = pred.free @ x0
        if disturbance is not None and pred.disturbance.shape[1]:
            offset = offset + pred.disturbance @ np.asarray(disturbance, dtype=float)
        linear = self.phi_q @ (offset - ref)
        if self.penalize_moves and u_prev is not None:
            shift = np.zeros(self.hessian.shape[0])
            shift[: self.nu] = np.asarray(u_prev, dtype=float)
            linear = linear - self.diff.T @ (self.r_bar * shift)
        rhs = np.concatenate(
            [
                self.box_rhs,
                self.y_hi_bar[self.y_upper] - offset[self.y_upper],
                offset[self.y_lower] - self.y_lo_bar[self.y_lower],
            ]
        )
        return QpProblem(self.hessian, linear, self.matrix, rhs)


def assemble_qp(
    pred: Prediction,
    x0,
    ref,
    cfg: MpcConfig,
    u_prev=None,
    disturbance=None,
    op: OperatingPoint | None = None,
) -> QpProblem:
    """Quadratic program over the stacked deviation inputs ``U``.

    The cost is ``0.5 |Phi U + F x0 - ref|_Q^2`` plus the input (or move)
    penalty. ``ref`` is either one output vector held over the horizon or
    the stacked trajectory. Rows of the constraint matrix are input bounds
    first, then output bounds.
    """
    return QpBuilder(pred, cfg, op).build(x0, ref, u_prev=u_prev, disturbance=disturbance)


def output_constraint_rows(cfg: MpcConfig, pred: Prediction):
    """Number of trailing QP rows that encode output bounds."""
    return pred.n_pred * sum(np.isfinite(lo) + np.isfinite(hi) for lo, hi in cfg.y_bounds)


def scale_problem(p: QpProblem, scales) -> QpProblem:
    """Change of variables ``u = S z`` with ``S = diag(scales)``."""
    s = np.asarray(scales, dtype=float)
    return QpProblem(p.hessian * np.outer(s, s), p.linear * s, p.ineq_matrix * s, p.ineq_rhs)


def soften(p: QpProblem, n_soft_rows: int, penalty: float = SOFT_PENALTY) -> QpProblem:
    """Append one L1 slack variable relaxing the last ``n_soft_rows`` rows."""
    n, m = p.n, p.m
    h = np.zeros((n + 1, n + 1))
    h[:n, :n] = p.hessian
    h[n, n] = 1e-6
    f = np.append(p.linear, penalty)
    g = np.zeros((m + 1, n + 1))
    g[:m, :n] = p.ineq_matrix
    g[m - n_soft_rows:m, n] = -1.0
    g[m, n] = -1.0
    return QpProblem(h, f, g, np.append(p.ineq_rhs, 0.0))


@dataclass
class MpcResult:
    moves: np.ndarray  # first manipulated deviation inputs
    overrides: dict
    sequence: np.ndarray  # full deviation input sequence U
    report: object
    flags: list = field(default_factory=list)
    cost: float = 0.0


def mpc_step(
    cfg: MpcConfig,
    dm: DiscreteLinearModel,
    x,
    refs,
    u_prev=None,
    disturbance=None,
    op: OperatingPoint | None = None,
    pred: Prediction | None = None,
    builder: QpBuilder | None = None,
    warm=None,
    input_names=None,
) -> MpcResult:
    """Solve one receding-horizon problem and return the first move.

    ``x``, ``refs``, ``u_prev`` and ``disturbance`` are deviations from
    ``op``. On :class:`IterationLimit` the best feasible first move is
    applied and the sample is flagged.
    """
    if builder is None:
        pred = pred if pred is not None else prediction(dm, cfg)
        builder = QpBuilder(pred, cfg, op)
    pred = builder.pred
    qp = builder.build(x, refs, u_prev=u_prev, disturbance=disturbance)
    scales = np.tile(input_scales(cfg, op), cfg.n_ctrl)
    scaled = scale_problem(qp, scales)
    x0 = None if warm is None else np.asarray(warm, dtype=float) / scales
    flags = []
    try:
        z, report = solve_qp(scaled, tol=KKT_TOL, x0=x0)
    except Infeasible:
        n_soft = output_constraint_rows(cfg, pred)
        if not n_soft:
            raise
        log.warning("output constraints infeasible; solving with L1 slack")
        flags.append("soft_y")
        z, report = solve_qp(soften(scaled, n_soft), tol=KKT_TOL)
        z = z[:-1]
    except IterationLimit as exc:
        if exc.x is None:
            raise
        flags.append("iter_limit")
        z, report = exc.x, exc.report
    sequence = z * scales
    nu = len(cfg.manipulated)
    moves = sequence[:nu]
    names = input_names or [str(i) for i in cfg.manipulated]
    return MpcResult(
        moves=moves,
        overrides=dict(zip(names, moves)),
        sequence=sequence,
        report=report,
        flags=flags,
        cost=qp.objective(sequence),
    )


def shift_sequence(sequence, nu):
    """Warm start for the next sample: drop the applied move, repeat the last."""
    seq = np.asarray(sequence, dtype=float)
    return np.concatenate([seq[nu:], seq[-nu:]])
