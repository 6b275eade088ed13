"""Dense bounded-variable primal simplex.

Two phases with artificial variables, Dantzig pricing, and Bland's rule once
too many consecutive degenerate pivots pile up. The tableau is refactored from
the basis periodically and once more before the answer is read off.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .lp import LinearProgramSpec

log = logging.getLogger(__name__)

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
ITERATION_LIMIT = "iteration_limit"


@dataclass
class SolverOptions:
    max_iterations: int = 50_000
    max_nodes: int = 20_000
    abs_gap: float = 1e-6
    rel_gap: float = 0.0
    time_limit_seconds: float | None = None
    verbose: bool = False
    # consecutive degenerate pivots before switching to Bland's rule
    bland_after: int = 1000
    refactor_every: int = 100
    feas_tol: float = 1e-9
    opt_tol: float = 1e-9
    int_tol: float = 1e-6

    @classmethod
    def from_dict(cls, d: dict | None) -> "SolverOptions":
        d = dict(d or {})
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown solver option(s): {', '.join(sorted(unknown))}")
        return cls(**d)


@dataclass
class LpSolution:
    status: str
    objective: float = math.nan
    values: np.ndarray = field(default_factory=lambda: np.zeros(0))
    duals: np.ndarray = field(default_factory=lambda: np.zeros(0))
    reduced_costs: np.ndarray = field(default_factory=lambda: np.zeros(0))
    iterations: int = 0

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL


class _Tableau:
    """Standard form  A x = b,  0 <= x <= u  with a maintained basis."""

    def __init__(self, A, b, u, basis, opts: SolverOptions):
        self.A = A
        self.b = b
        self.u = u
        self.m, self.n = A.shape
        self.basis = np.array(basis, dtype=int)
        self.at_upper = np.zeros(self.n, dtype=bool)
        self.opts = opts
        self.iterations = 0

    def refactor(self, c):
        B = self.A[:, self.basis]
        self.T = np.linalg.solve(B, self.A)
        xN = np.where(self.at_upper, self.u, 0.0)
        xN[self.basis] = 0.0
        self.xB = np.linalg.solve(B, self.b - self.A @ xN)
        self.c = c
        self.y = np.linalg.solve(B.T, c[self.basis])
        self.d = c - self.y @ self.A
        self.d[self.basis] = 0.0

    def values(self):
        x = np.where(self.at_upper, self.u, 0.0)
        x[self.basis] = self.xB
        return x

    def run(self, c, eligible, deadline=None) -> str:
        opts = self.opts
        self.refactor(c)
        degenerate = 0
        use_bland = False
        is_basic = np.zeros(self.n, dtype=bool)
        since_refactor = 0
        while True:
            if self.iterations >= opts.max_iterations:
                return ITERATION_LIMIT
            if deadline is not None and time.monotonic() > deadline:
                return ITERATION_LIMIT
            is_basic[:] = False
            is_basic[self.basis] = True
            d = self.d
            cand = eligible & ~is_basic & (self.u > 0) & (
                (~self.at_upper & (d < -opts.opt_tol)) | (self.at_upper & (d > opts.opt_tol))
            )
            idx = np.flatnonzero(cand)
            if idx.size == 0:
                return OPTIMAL
            q = int(idx[0]) if use_bland else int(idx[np.argmax(np.abs(d[idx]))])
            sigma = -1.0 if self.at_upper[q] else 1.0
            alpha = self.T[:, q]
            ub_basic = self.u[self.basis]
            xB = self.xB
            rate = sigma * alpha
            piv_tol = 1e-9
            limits = np.full(self.m, math.inf)
            dec = rate > piv_tol
            inc = (rate < -piv_tol) & np.isfinite(ub_basic)
            limits[dec] = np.maximum(xB[dec], 0.0) / rate[dec]
            limits[inc] = np.maximum(ub_basic[inc] - xB[inc], 0.0) / -rate[inc]
            t_row = limits.min() if self.m else math.inf
            t_flip = self.u[q]
            if not math.isfinite(t_row) and not math.isfinite(t_flip):
                return UNBOUNDED
            self.iterations += 1
            if t_flip <= t_row:
                self.xB = xB - t_flip * rate
                self.at_upper[q] = not self.at_upper[q]
                degenerate = 0
                continue
            ties = np.flatnonzero(limits <= t_row + 1e-12)
            if use_bland:
                r = int(ties[np.argmin(self.basis[ties])])
            else:
                r = int(ties[np.argmax(np.abs(alpha[ties]))])
            leaving = self.basis[r]
            leaves_upper = bool(inc[r] and not dec[r])
            entering_value = (self.u[q] if self.at_upper[q] else 0.0) + sigma * t_row
            self.xB = xB - t_row * rate
            self.xB[r] = entering_value
            self.at_upper[leaving] = leaves_upper
            self.at_upper[q] = False
            # pivot
            prow = self.T[r] / alpha[r]
            self.T -= np.outer(alpha, prow)
            self.T[r] = prow
            self.d = self.d - self.d[q] * prow
            self.d[q] = 0.0
            self.basis[r] = q
            if t_row <= 1e-12:
                degenerate += 1
                if degenerate >= opts.bland_after and not use_bland:
                    log.debug("switching to Bland's rule after %d degenerate pivots", degenerate)
                    use_bland = True
            else:
                degenerate = 0
            since_refactor += 1
            if since_refactor >= opts.refactor_every:
                self.refactor(c)
                since_refactor = 0


def solve_lp(spec: LinearProgramSpec, opts: SolverOptions | None = None) -> LpSolution:
    """Solve the continuous relaxation of ``spec`` (integrality flags ignored)."""
    opts = opts or SolverOptions()
    deadline = None
    if opts.time_limit_seconds is not None:
        deadline = time.monotonic() + opts.time_limit_seconds
    n, m = spec.n_vars, spec.n_rows
    A0 = np.array(spec.A, dtype=float)
    b0 = spec.rhs.astype(float)
    lb, ub = spec.lb.astype(float), spec.ub.astype(float)

    # map every model variable onto columns with bounds [0, u]
    cols = []  # (model var, sign, upper)
    offset = np.zeros(n)
    for j in range(n):
        if math.isfinite(lb[j]):
            offset[j] = lb[j]
            cols.append((j, 1.0, ub[j] - lb[j]))
        elif math.isfinite(ub[j]):
            offset[j] = ub[j]
            cols.append((j, -1.0, math.inf))
        else:
            cols.append((j, 1.0, math.inf))
            cols.append((j, -1.0, math.inf))
    src = np.array([j for j, _, _ in cols], dtype=int)
    sgn = np.array([s for _, s, _ in cols])
    A = A0[:, src] * sgn
    c = spec.c[src] * sgn
    u = np.array([w for _, _, w in cols])
    b = b0 - A0 @ offset

    # row equilibration and objective scaling
    row_scale = np.ones(m)
    for i in range(m):
        mx = np.abs(A[i]).max() if A.shape[1] else 0.0
        if mx > 0:
            row_scale[i] = 1.0 / mx
    A = A * row_scale[:, None]
    b = b * row_scale
    cmax = np.abs(c).max() if c.size else 0.0
    cost_scale = 1.0 / cmax if cmax > 0 else 1.0
    c = c * cost_scale

    # slacks
    slack_cols = []
    for i, sense in enumerate(spec.senses):
        if sense == "<=":
            slack_cols.append((i, 1.0))
        elif sense == ">=":
            slack_cols.append((i, -1.0))
    S = np.zeros((m, len(slack_cols)))
    for k, (i, s) in enumerate(slack_cols):
        S[i, k] = s
    row_sign = np.where(b < 0, -1.0, 1.0)
    A = A * row_sign[:, None]
    S = S * row_sign[:, None]
    b = b * row_sign

    n_struct = A.shape[1]
    n_slack = S.shape[1]
    basis = [-1] * m
    for k, (i, _) in enumerate(slack_cols):
        if S[i, k] > 0:
            basis[i] = n_struct + k
    art_rows = [i for i in range(m) if basis[i] < 0]
    Art = np.zeros((m, len(art_rows)))
    for k, i in enumerate(art_rows):
        Art[i, k] = 1.0
        basis[i] = n_struct + n_slack + k
    Afull = np.hstack([A, S, Art])
    N = Afull.shape[1]
    ufull = np.concatenate([u, np.full(n_slack, math.inf), np.full(len(art_rows), math.inf)])
    n_art = len(art_rows)
    eligible = np.ones(N, dtype=bool)

    tab = _Tableau(Afull, b, ufull, basis, opts)
    if n_art:
        c1 = np.zeros(N)
        c1[n_struct + n_slack:] = 1.0
        status = tab.run(c1, eligible, deadline)
        if status == ITERATION_LIMIT:
            return LpSolution(ITERATION_LIMIT, iterations=tab.iterations)
        tab.refactor(c1)
        infeas = float(tab.values()[n_struct + n_slack:].sum())
        if infeas > 1e-7 * max(1.0, np.abs(b).max()):
            return LpSolution(INFEASIBLE, iterations=tab.iterations)
        # artificials are pinned at zero from here on
        tab.u = tab.u.copy()
        tab.u[n_struct + n_slack:] = 0.0
        eligible[n_struct + n_slack:] = False
        tab.xB = np.where(tab.basis >= n_struct + n_slack, 0.0, tab.xB)
    c2 = np.concatenate([c, np.zeros(n_slack + n_art)])
    status = tab.run(c2, eligible, deadline)
    if status != OPTIMAL:
        return LpSolution(status, iterations=tab.iterations)
    tab.refactor(c2)

    z = tab.values()[:n_struct]
    z = np.clip(z, 0.0, u)
    x = offset.copy()
    np.add.at(x, src, sgn * z)
    # duals of the original rows: undo sign flips, row scaling and cost scaling
    y = tab.y * row_sign * row_scale / cost_scale
    reduced = spec.c - A0.T @ y if m else spec.c.copy()
    return LpSolution(
        status=OPTIMAL,
        objective=spec.objective(x),
        values=x,
        duals=y,
        reduced_costs=reduced,
        iterations=tab.iterations,
    )


def dual_objective(spec: LinearProgramSpec, sol: LpSolution) -> float:
    """Lagrangian dual value b.y + bound terms; equals the primal optimum at optimality."""
    y = sol.duals
    d = spec.c - spec.A.T @ y if spec.n_rows else spec.c.copy()
    total = spec.c0 + float(spec.rhs @ y) if spec.n_rows else spec.c0
    tol = 1e-9 * max(1.0, float(np.abs(spec.c).max()) if spec.n_vars else 1.0)
    for j in range(spec.n_vars):
        if abs(d[j]) <= tol:
            continue
        if d[j] > 0:
            total += d[j] * spec.lb[j] if math.isfinite(spec.lb[j]) else -math.inf
        elif d[j] < 0:
            total += d[j] * spec.ub[j] if math.isfinite(spec.ub[j]) else -math.inf
    return total
