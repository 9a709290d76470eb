"""Deterministic bounded-variable simplex solver for small dispatch LPs.

All dispatch subproblems (daily peak shaving, arbitrage, hourly DC-OPF
curtailment) are tiny LPs, so a dense two-phase revised simplex is used:
it is exactly reproducible run to run, which matters more here than
speed.  Pricing is Dantzig with a permanent switch to Bland's rule on
stall, keeping the anti-cycling guarantee.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"

# variable status codes
_BASIC = 0
_AT_LO = 1
_AT_UP = 2
_FREE = 3

_PIVOT_TOL = 1e-10
_COST_TOL = 1e-9
_FEAS_TOL = 1e-8


class LpError(Exception):
    pass


@dataclass
class LpProblem:
    """Linear program: minimize c.x subject to bounds and sparse rows."""

    name: str = ""
    objective: list = field(default_factory=list)
    lower: list = field(default_factory=list)
    upper: list = field(default_factory=list)
    var_names: list = field(default_factory=list)
    rows: list = field(default_factory=list)  # (sense, rhs, [(var, coef), ...])

    def add_var(self, obj=0.0, lo=0.0, hi=np.inf, name=None):
        """Add a variable, returning its index."""
        if lo > hi:
            raise LpError(f"variable {name or len(self.objective)}: lower {lo} > upper {hi}")
        self.objective.append(float(obj))
        self.lower.append(float(lo))
        self.upper.append(float(hi))
        self.var_names.append(name or f"x{len(self.objective) - 1}")
        return len(self.objective) - 1

    def add_row(self, sense, rhs, coefs):
        """Add a constraint row; sense is one of '<=', '>=', '=='."""
        if sense not in ("<=", ">=", "=="):
            raise LpError(f"bad row sense {sense!r}")
        self.rows.append((sense, float(rhs), [(int(j), float(a)) for j, a in coefs]))
        return len(self.rows) - 1

    @property
    def n_vars(self):
        return len(self.objective)

    @property
    def n_rows(self):
        return len(self.rows)


@dataclass
class LpSolution:
    status: str
    objective: float
    x: np.ndarray
    duals: np.ndarray
    iterations: int = 0

    @property
    def is_optimal(self):
        return self.status == OPTIMAL


def format_problem(prob: LpProblem) -> str:
    """Plain-text dump (objective row, then constraint rows, then bounds)."""
    out = [f"# lp {prob.name or '(unnamed)'}: {prob.n_vars} vars, {prob.n_rows} rows"]
    terms = " + ".join(
        f"{c:.12g}*{prob.var_names[j]}" for j, c in enumerate(prob.objective) if c != 0.0
    )
    out.append(f"min: {terms or '0'}")
    for sense, rhs, coefs in prob.rows:
        lhs = " + ".join(f"{a:.12g}*{prob.var_names[j]}" for j, a in coefs) or "0"
        out.append(f"{lhs} {sense} {rhs:.12g}")
    for j in range(prob.n_vars):
        out.append(f"{prob.lower[j]:.12g} <= {prob.var_names[j]} <= {prob.upper[j]:.12g}")
    return "\n".join(out)


def solve_lp(problem: LpProblem) -> LpSolution:
    """Solve with two-phase bounded-variable simplex (Bland's rule).

    Infeasible and unbounded problems are reported through the status
    field, never raised.
    """
    n = problem.n_vars
    m = problem.n_rows
    if n == 0:
        return LpSolution(OPTIMAL, 0.0, np.zeros(0), np.zeros(m))

    c = np.asarray(problem.objective, dtype=float)
    lo = np.asarray(problem.lower, dtype=float)
    up = np.asarray(problem.upper, dtype=float)

    # equality standard form: one slack per inequality row
    n_slack = sum(1 for sense, _, _ in problem.rows if sense != "==")
    N = n + n_slack
    A = np.zeros((m, N))
    b = np.zeros(m)
    k = n
    for i, (sense, rhs, coefs) in enumerate(problem.rows):
        for j, a in coefs:
            A[i, j] += a
        b[i] = rhs
        if sense == "<=":
            A[i, k] = 1.0
            k += 1
        elif sense == ">=":
            A[i, k] = -1.0
            k += 1
    lo_f = np.concatenate([lo, np.zeros(n_slack)])
    up_f = np.concatenate([up, np.full(n_slack, np.inf)])

    # max-abs row/column equilibration; bounds and costs follow the
    # column scale so MW quantities and per-unit reactances coexist
    if m:
        row_scale = np.max(np.abs(A), axis=1)
        row_scale[row_scale == 0.0] = 1.0
        A = A / row_scale[:, None]
        b = b / row_scale
    else:
        row_scale = np.zeros(0)
    col_scale = np.max(np.abs(A), axis=0) if m else np.ones(N)
    col_scale[col_scale == 0.0] = 1.0
    col_scale = np.where(col_scale > 0, col_scale, 1.0)
    A = A / col_scale[None, :]
    c_f = np.concatenate([c, np.zeros(n_slack)]) / col_scale
    lo_s = lo_f * col_scale
    up_s = up_f * col_scale

    core = _SimplexCore(A, b, lo_s, up_s)
    status, iters = core.solve(c_f)

    if status == INFEASIBLE:
        return LpSolution(INFEASIBLE, np.nan, np.full(n, np.nan), np.full(m, np.nan), iters)
    if status == UNBOUNDED:
        return LpSolution(UNBOUNDED, -np.inf, np.full(n, np.nan), np.full(m, np.nan), iters)

    x = core.x[:N] / col_scale
    x_struct = x[:n]
    duals = core.duals() / row_scale if m else np.zeros(0)
    obj = float(np.dot(c, x_struct))
    return LpSolution(OPTIMAL, obj, x_struct, duals, iters)


class _SimplexCore:
    """Bounded-variable revised simplex on A x = b, lo <= x <= up."""

    def __init__(self, A, b, lo, up):
        m, N = A.shape
        self.b = b
        self.m = m
        self.N = N
        self.n_art = m
        self.x = np.zeros(N + m)
        self.status = np.empty(N + m, dtype=np.int8)
        for j in range(N):
            l, u = lo[j], up[j]
            if np.isfinite(l) and (not np.isfinite(u) or abs(l) <= abs(u)):
                self.x[j], self.status[j] = l, _AT_LO
            elif np.isfinite(u):
                self.x[j], self.status[j] = u, _AT_UP
            else:
                self.x[j], self.status[j] = 0.0, _FREE
        # artificial columns signed so the phase-1 starting basis is
        # feasible at the crash point
        resid = b - A @ self.x[:N] if m else np.zeros(0)
        sign = np.where(resid >= 0, 1.0, -1.0)
        self.A = np.hstack([A, np.diag(sign)]) if m else A.copy()
        self.lo = np.concatenate([lo, np.zeros(m)])
        self.up = np.concatenate([up, np.full(m, np.inf)])
        self.x[N:] = np.abs(resid)
        self.basis = np.arange(N, N + m)
        self.status[N:] = _BASIC
        self._y = np.zeros(m)

    def _refresh_basics(self):
        if not self.m:
            return
        nonbasic = np.ones(self.N + self.n_art, dtype=bool)
        nonbasic[self.basis] = False
        rhs = self.b - self.A[:, nonbasic] @ self.x[nonbasic]
        self.x[self.basis] = np.linalg.solve(self.A[:, self.basis], rhs)

    def duals(self):
        return self._y.copy()

    def solve(self, c_real):
        if self.m:
            self._refresh_basics()
            c1 = np.zeros(self.N + self.n_art)
            c1[self.N:] = 1.0
            status, it1 = self._iterate(c1, phase=1)
            if status != OPTIMAL:
                return INFEASIBLE, it1
            if float(c1 @ self.x) > 1e-7 * max(1.0, np.abs(self.b).max()):
                return INFEASIBLE, it1
            # pin artificials at zero; any left in the basis stay there
            self.lo[self.N:] = 0.0
            self.up[self.N:] = 0.0
            self.x[self.N:] = np.where(np.abs(self.x[self.N:]) < _FEAS_TOL, 0.0, self.x[self.N:])
            for j in range(self.N, self.N + self.n_art):
                if self.status[j] != _BASIC:
                    self.x[j], self.status[j] = 0.0, _AT_LO
        else:
            it1 = 0
        c2 = np.concatenate([c_real, np.zeros(self.n_art)])
        status, it2 = self._iterate(c2, phase=2)
        return status, it1 + it2

    def _iterate(self, cost, phase):
        m = self.m
        A, x, lo, up = self.A, self.x, self.lo, self.up
        n_all = self.N + self.n_art
        max_iter = 2000 + 200 * (n_all + m)
        basic = self.status == _BASIC
        movable = lo != up
        at_lo_like = (self.status == _AT_LO) | (self.status == _FREE)
        at_up_like = (self.status == _AT_UP) | (self.status == _FREE)
        bland = False
        stall = 0
        last_obj = math.inf
        for it in range(max_iter):
            if m:
                Bmat = A[:, self.basis]
                try:
                    y = np.linalg.solve(Bmat.T, cost[self.basis])
                except np.linalg.LinAlgError:
                    self._repair_basis()
                    basic = self.status == _BASIC
                    at_lo_like = (self.status == _AT_LO) | (self.status == _FREE)
                    at_up_like = (self.status == _AT_UP) | (self.status == _FREE)
                    Bmat = A[:, self.basis]
                    y = np.linalg.solve(Bmat.T, cost[self.basis])
                self._y = y
                d = cost - A.T @ y
            else:
                d = cost.copy()

            obj = float(cost @ x)
            if obj < last_obj - 1e-12 * max(1.0, abs(last_obj)):
                stall = 0
            else:
                stall += 1
                if stall > 40:
                    bland = True
            last_obj = obj

            ok = movable & ~basic
            lo_cand = ok & at_lo_like & (d < -_COST_TOL)
            up_cand = ok & at_up_like & (d > _COST_TOL)
            any_cand = lo_cand | up_cand
            if not any_cand.any():
                self._refresh_basics()
                return OPTIMAL, it
            if bland:
                enter = int(np.flatnonzero(any_cand)[0])
            else:
                score = np.where(lo_cand, -d, 0.0) + np.where(up_cand, d, 0.0)
                enter = int(np.argmax(score))
            direction = 1.0 if lo_cand[enter] else -1.0

            w = np.linalg.solve(A[:, self.basis], A[:, enter]) if m else np.zeros(0)

            # ratio test: nearest blocking basic bound vs a bound flip of
            # the entering variable; pivot ties break to the smallest
            # variable index
            t_flip = up[enter] - lo[enter]
            if m:
                delta = -direction * w
                xb = x[self.basis]
                ub = up[self.basis]
                lb = lo[self.basis]
                lims = np.full(m, np.inf)
                rising = delta > _PIVOT_TOL
                if rising.any():
                    lims[rising] = np.where(
                        np.isfinite(ub[rising]),
                        (ub[rising] - xb[rising]) / delta[rising], np.inf)
                falling = delta < -_PIVOT_TOL
                if falling.any():
                    lims[falling] = np.where(
                        np.isfinite(lb[falling]),
                        (xb[falling] - lb[falling]) / (-delta[falling]), np.inf)
                np.maximum(lims, 0.0, out=lims)
                lim_min = float(lims.min()) if m else np.inf
            else:
                delta = np.zeros(0)
                lims = np.zeros(0)
                lim_min = np.inf

            if not np.isfinite(min(t_flip, lim_min)):
                if phase == 1:
                    raise LpError("phase-1 descent unbounded; numerical breakdown")
                return UNBOUNDED, it

            if t_flip < lim_min - 1e-11:
                t = t_flip
                x[self.basis] -= direction * t * w
                x[enter] = up[enter] if direction > 0 else lo[enter]
                self.status[enter] = _AT_UP if direction > 0 else _AT_LO
                at_lo_like[enter] = self.status[enter] == _AT_LO
                at_up_like[enter] = self.status[enter] == _AT_UP
            else:
                t = lim_min
                ties = np.flatnonzero(lims <= lim_min + 1e-11)
                pos = int(ties[np.argmin(self.basis[ties])])
                out = int(self.basis[pos])
                leave_to = _AT_UP if delta[pos] > 0 else _AT_LO
                x[self.basis] -= direction * t * w
                x[enter] += direction * t
                x[out] = up[out] if leave_to == _AT_UP else lo[out]
                self.status[out] = leave_to
                basic[out] = False
                at_lo_like[out] = leave_to == _AT_LO
                at_up_like[out] = leave_to == _AT_UP
                self.basis[pos] = enter
                self.status[enter] = _BASIC
                basic[enter] = True
                at_lo_like[enter] = False
                at_up_like[enter] = False
            if it % 64 == 63:
                self._refresh_basics()
        raise LpError("simplex iteration limit exceeded")

    def _repair_basis(self):
        """Swap a dependent basic column for an artificial (rare, degenerate)."""
        for i in range(self.m):
            if self.basis[i] == self.N + i:
                continue
            trial = self.basis.copy()
            trial[i] = self.N + i
            if abs(np.linalg.det(self.A[:, trial])) > 1e-12:
                out = self.basis[i]
                self.status[out] = _AT_LO if np.isfinite(self.lo[out]) else _FREE
                self.x[out] = self.lo[out] if np.isfinite(self.lo[out]) else 0.0
                self.basis = trial
                self.status[self.N + i] = _BASIC
                self._refresh_basics()
                return
        raise LpError("singular basis could not be repaired")
