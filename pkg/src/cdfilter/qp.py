"""Dense primal active-set solver for convex inequality-constrained QPs.

Solves::

    minimize    0.5 * u' H u + f' u
    subject to  G u <= g

Multipliers follow the convention ``H u + f + G' lam = 0`` with ``lam >= 0``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import Infeasible, IterationLimit

REGULARIZATION = 1e-10


@dataclass(frozen=True)
class QpProblem:
    hessian: np.ndarray
    linear: np.ndarray
    ineq_matrix: np.ndarray = None
    ineq_rhs: np.ndarray = None

    def __post_init__(self):
        h = np.atleast_2d(np.asarray(self.hessian, dtype=float))
        f = np.asarray(self.linear, dtype=float).reshape(-1)
        n = f.size
        if h.shape != (n, n):
            raise ValueError(f"hessian shape {h.shape} does not match linear term of size {n}")
        if h.size and np.abs(h - h.T).max() > 1e-12 * max(1.0, np.abs(h).max()):
            raise ValueError("hessian must be symmetric")
        if self.ineq_matrix is None:
            a = np.zeros((0, n))
            b = np.zeros(0)
        else:
            a = np.atleast_2d(np.asarray(self.ineq_matrix, dtype=float)).reshape(-1, n)
            b = np.asarray(self.ineq_rhs, dtype=float).reshape(-1)
            if a.shape[0] != b.size:
                raise ValueError("ineq_matrix and ineq_rhs disagree on the number of rows")
        object.__setattr__(self, "hessian", 0.5 * (h + h.T))
        object.__setattr__(self, "linear", f)
        object.__setattr__(self, "ineq_matrix", a)
        object.__setattr__(self, "ineq_rhs", b)

    @property
    def n(self):
        return self.linear.size

    @property
    def m(self):
        return self.ineq_rhs.size

    def objective(self, u):
        return float(0.5 * u @ self.hessian @ u + self.linear @ u)


@dataclass
class ActiveSetReport:
    iterations: int = 0
    active: tuple = ()
    multipliers: np.ndarray = None
    cost_history: list = field(default_factory=list)
    used_phase1: bool = False
    kkt: dict = field(default_factory=dict)


def kkt_residuals(p: QpProblem, u, lam) -> dict:
    slack = p.ineq_matrix @ u - p.ineq_rhs
    return {
        "stationarity": float(np.max(np.abs(p.hessian @ u + p.linear + p.ineq_matrix.T @ lam), initial=0.0)),
        "primal": float(np.max(slack, initial=0.0)),
        "complementarity": float(np.max(np.abs(lam * slack), initial=0.0)),
        "dual": float(max(0.0, -np.min(lam, initial=0.0))),
    }


def kkt_ok(kkt: dict, tol: float) -> bool:
    return all(v < tol for v in kkt.values())


def _initial_working_set(a, b, u, tol, hint=()):
    """Constraints active at ``u``, kept only while their normals stay independent."""
    slack = a @ u - b
    order = [i for i in hint if 0 <= i < b.size] + list(range(b.size))
    working, basis, seen = [], [], set()
    for i in order:
        if i in seen or abs(slack[i]) > tol:
            continue
        seen.add(i)
        r = a[i].copy()
        for q in basis:
            r -= (q @ r) * q
        norm = np.linalg.norm(r)
        if norm > 1e-10 * max(np.linalg.norm(a[i]), 1e-300):
            working.append(i)
            basis.append(r / norm)
    return working


def _eqp_step(h, g, a_w):
    """Solve the equality-constrained subproblem for a step and multipliers."""
    n = h.shape[0]
    k = a_w.shape[0]
    kkt = np.zeros((n + k, n + k))
    kkt[:n, :n] = h
    kkt[:n, n:] = a_w.T
    kkt[n:, :n] = a_w
    rhs = np.concatenate([-g, np.zeros(k)])
    try:
        sol = np.linalg.solve(kkt, rhs)
    except np.linalg.LinAlgError:
        sol = np.linalg.lstsq(kkt, rhs, rcond=None)[0]
    return sol[:n], sol[n:]


def _active_set(p, h, u, working, tol, max_iter, report):
    a, b, f = p.ineq_matrix, p.ineq_rhs, p.linear
    n = p.n
    step_tol = 1e-13
    for it in range(1, max_iter + 1):
        report.iterations = it
        g = h @ u + f
        a_w = a[working] if working else np.zeros((0, n))
        step, lam_w = _eqp_step(h, g, a_w)
        if np.max(np.abs(step), initial=0.0) <= step_tol * (1.0 + np.max(np.abs(u), initial=0.0)):
            if not working or lam_w.min() >= -tol * 1e-3:
                return u, working, lam_w
            working.pop(int(np.argmin(lam_w)))
            continue
        a_step = a @ step
        candidates = a_step > 1e-14 * np.abs(a).sum(axis=1) * np.abs(step).max()
        candidates[working] = False
        alpha, blocking = 1.0, None
        if candidates.any():
            idx = np.flatnonzero(candidates)
            ratios = np.maximum(0.0, (b[idx] - a[idx] @ u) / a_step[idx])
            j = int(np.argmin(ratios))
            if ratios[j] < 1.0:
                alpha, blocking = float(ratios[j]), int(idx[j])
        u = u + alpha * step
        report.cost_history.append(0.5 * u @ h @ u + f @ u)
        if blocking is not None:
            working.append(blocking)
    raise IterationLimit(f"active-set solver did not converge in {max_iter} iterations", x=u)


def _phase1(p, tol, max_iter):
    """Find a feasible point by minimizing a single bound-shifting slack."""
    n, m = p.n, p.m
    mu = 1e-8
    h = mu * np.eye(n + 1)
    f = np.zeros(n + 1)
    f[-1] = 1.0
    a = np.zeros((m + 1, n + 1))
    a[:m, :n] = p.ineq_matrix
    a[:m, -1] = -1.0
    a[m, -1] = -1.0
    b = np.concatenate([p.ineq_rhs, [0.0]])
    aux = QpProblem(h, f, a, b)
    start = np.zeros(n + 1)
    start[-1] = max(0.0, float(np.max(-p.ineq_rhs, initial=0.0))) + 1.0
    rep = ActiveSetReport()
    working = _initial_working_set(a, b, start, tol)
    sol, _, _ = _active_set(aux, h, start, working, tol, max_iter, rep)
    if sol[-1] > tol:
        raise Infeasible(f"no feasible point: minimal uniform constraint violation {sol[-1]:.3e}")
    return sol[:n]


def solve_qp(p: QpProblem, tol: float = 1e-8, max_iter: int = 500, x0=None, working_hint=()):
    """Solve ``p`` and return ``(u, report)``.

    ``x0`` and ``working_hint`` warm-start the solver when ``x0`` is feasible.
    Raises :class:`Infeasible` when the constraints admit no point and
    :class:`IterationLimit` (carrying the best feasible iterate) on non-convergence.
    """
    h = p.hessian
    try:
        np.linalg.cholesky(h)
    except np.linalg.LinAlgError:
        h = h + REGULARIZATION * np.eye(p.n)
    feas_tol = 0.1 * tol
    report = ActiveSetReport()

    def feasible(u):
        return u is not None and np.all(p.ineq_matrix @ u <= p.ineq_rhs + feas_tol)

    candidates = [np.linalg.solve(h, -p.linear)]
    if x0 is not None:
        candidates.append(np.asarray(x0, dtype=float))
    candidates.append(np.zeros(p.n))
    start = next((c for c in candidates if feasible(c)), None)
    if start is None:
        start = _phase1(p, feas_tol, max_iter)
        report.used_phase1 = True
    report.cost_history.append(0.5 * start @ h @ start + p.linear @ start)
    working = _initial_working_set(p.ineq_matrix, p.ineq_rhs, start, feas_tol, working_hint)
    try:
        u, working, lam_w = _active_set(p, h, start, working, tol, max_iter, report)
    except IterationLimit as exc:
        exc.report = report
        raise
    lam = np.zeros(p.m)
    lam[working] = lam_w
    lam = np.maximum(lam, 0.0)
    report.active = tuple(sorted(working))
    report.multipliers = lam
    report.kkt = kkt_residuals(p, u, lam)
    return u, report
