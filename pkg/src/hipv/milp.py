"""Best-bound branch and bound over :func:`hipv.simplex.solve_lp`."""

from __future__ import annotations

import heapq
import itertools
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .lp import LinearProgramSpec
from .simplex import OPTIMAL, UNBOUNDED, LpSolution, SolverOptions, solve_lp

log = logging.getLogger(__name__)

INFEASIBLE = "infeasible"
GAP_LIMIT = "gap_limit"
NODE_LIMIT = "node_limit"


class SolverError(RuntimeError):
    pass


@dataclass
class MilpSolution:
    status: str
    incumbent: LpSolution | None
    bound: float
    gap: float
    nodes_explored: int
    incumbent_history: list[float] = field(default_factory=list)
    bound_history: list[float] = field(default_factory=list)
    node_log: list[str] = field(default_factory=list)

    @property
    def objective(self) -> float:
        return self.incumbent.objective if self.incumbent is not None else math.nan

    @property
    def values(self) -> np.ndarray:
        return self.incumbent.values


def _gap(incumbent: float, bound: float) -> float:
    if not math.isfinite(incumbent):
        return math.inf
    return max(incumbent - bound, 0.0) / max(1.0, abs(incumbent))


def _fractional(x: np.ndarray, int_idx: np.ndarray, tol: float) -> int | None:
    """Most fractional integer variable (ties to lowest index), or None."""
    if int_idx.size == 0:
        return None
    f = x[int_idx] - np.floor(x[int_idx])
    score = np.minimum(f, 1.0 - f)
    k = int(np.argmax(score))
    if score[k] <= tol:
        return None
    return int(int_idx[k])


def solve_milp(spec: LinearProgramSpec, opts: SolverOptions | None = None) -> MilpSolution:
    """Minimize ``spec`` with its integrality flags enforced.

    Nodes are explored best bound first (FIFO among equal bounds); branching
    picks the most fractional variable and creates floor/ceil bound children.
    """
    opts = opts or SolverOptions()
    start = time.monotonic()
    int_idx = np.flatnonzero(spec.integer)
    lb0 = spec.lb.copy()
    ub0 = spec.ub.copy()
    lb0[int_idx] = np.ceil(lb0[int_idx] - opts.int_tol)
    ub0[int_idx] = np.floor(ub0[int_idx] + opts.int_tol)
    if np.any(lb0 > ub0):
        return MilpSolution(INFEASIBLE, None, math.inf, math.inf, 0)

    counter = itertools.count()
    node_ids = itertools.count()
    heap: list = []
    incumbent: LpSolution | None = None
    inc_obj = math.inf
    nodes = 0
    inc_hist: list[float] = []
    bound_hist: list[float] = []
    node_log: list[str] = []

    def note(node_id, depth, bound, action):
        line = f"node {node_id} depth {depth} bound {bound:.10g} {action}"
        node_log.append(line)
        if opts.verbose:
            log.info(line)

    def evaluate(lb, ub, depth, parent_bound):
        nonlocal incumbent, inc_obj, nodes
        node_id = next(node_ids)
        nodes += 1
        sol = solve_lp(spec.with_bounds(lb, ub), opts)
        if sol.status == UNBOUNDED:
            raise SolverError("LP relaxation is unbounded")
        if sol.status != OPTIMAL:
            note(node_id, depth, math.nan, sol.status)
            return sol.status
        bound = max(sol.objective, parent_bound)
        if bound >= inc_obj - opts.abs_gap:
            note(node_id, depth, bound, "pruned")
            return "pruned"
        j = _fractional(sol.values, int_idx, opts.int_tol)
        if j is None:
            x = sol.values.copy()
            x[int_idx] = np.round(x[int_idx])
            sol.values = x
            sol.objective = spec.objective(x)
            incumbent, inc_obj = sol, sol.objective
            inc_hist.append(inc_obj)
            note(node_id, depth, bound, "incumbent")
            return "incumbent"
        heapq.heappush(heap, (bound, next(counter), node_id, depth, lb, ub, sol.values[j], j))
        note(node_id, depth, bound, f"branch x{j}={sol.values[j]:.6g}")
        return "open"

    root = evaluate(lb0, ub0, 0, -math.inf)
    if root not in ("open", "incumbent"):
        status = INFEASIBLE if root in ("infeasible", "pruned") else NODE_LIMIT
        return MilpSolution(status, None, math.inf, math.inf, nodes, node_log=node_log)

    status = OPTIMAL
    while heap:
        # the incumbent caps the global bound once it beats every open node
        bound = min(heap[0][0], inc_obj)
        bound_hist.append(bound)
        if inc_obj - bound <= opts.abs_gap:
            break
        if opts.rel_gap > 0 and _gap(inc_obj, bound) <= opts.rel_gap:
            status = GAP_LIMIT
            break
        if nodes >= opts.max_nodes:
            status = NODE_LIMIT
            break
        if opts.time_limit_seconds is not None and time.monotonic() - start > opts.time_limit_seconds:
            status = NODE_LIMIT
            break
        bound, _, node_id, depth, lb, ub, value, j = heapq.heappop(heap)
        if bound >= inc_obj - opts.abs_gap:
            continue
        down_ub = ub.copy()
        down_ub[j] = math.floor(value)
        up_lb = lb.copy()
        up_lb[j] = math.ceil(value)
        evaluate(lb, down_ub, depth + 1, bound)
        evaluate(up_lb, ub, depth + 1, bound)

    final_bound = min(heap[0][0], inc_obj) if heap else inc_obj
    if incumbent is None:
        status = INFEASIBLE if status == OPTIMAL else status
        return MilpSolution(status, None, final_bound, math.inf, nodes, inc_hist, bound_hist, node_log)
    bound_hist.append(final_bound)
    return MilpSolution(status, incumbent, final_bound, _gap(inc_obj, final_bound), nodes,
                        inc_hist, bound_hist, node_log)
