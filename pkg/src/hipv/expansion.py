"""PV expansion co-optimization: discounting, cost terms, model assembly, audits.

Decision variables, all MW unless noted:

* ``build``  integer PV units added per (region, year)
* ``gen``    total output of a non-PV unit group per (year, block)
* ``pv``     total output of a region's PV group per (year, block)
* ``usp``    unserved power per (region, year, block)
* ``flow+`` / ``flow-``  directional interface flow per (interface, year, block);
  net flow is ``flow+ - flow-`` (positive means from_region -> to_region)

Group outputs are group totals, i.e. per-unit output times unit count.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .blocks import BlockSchedule
from .data import PlanningCase, PlanningHorizon, UnitGroup
from .lp import LinearProgramSpec, LpBuilder
from .milp import MilpSolution, solve_milp
from .simplex import SolverOptions

EMISSION_BASES = ("per_mbtu", "per_mwh")
COST_TERMS = ("pv_expansion", "fixed_om", "var_om", "fuel", "emission", "wheeling", "lost_load")


@dataclass(frozen=True)
class DiscountSchedule:
    d_y: tuple[float, ...]

    def __getitem__(self, year: int) -> float:
        return self.d_y[year - 1]

    def __len__(self):
        return len(self.d_y)


def build_discount_schedule(horizon: PlanningHorizon) -> DiscountSchedule:
    """Present-value factors with the end-year perpetuity tail on the last year."""
    d, ny = horizon.discount_rate, horizon.n_years
    if not d > 0:
        raise ValueError(f"discount rate must be > 0, got {d}")
    if ny < 1:
        raise ValueError(f"n_years must be >= 1, got {ny}")
    values = [(1 + d) ** -y for y in range(1, ny)]
    values.append((1 + d) ** -ny + (1 + d) ** -(ny + 1) / (1 - 1 / (1 + d)))
    return DiscountSchedule(tuple(values))


def derating(unit: UnitGroup, maintenance_factor: float) -> float:
    """Available fraction of installed capacity after outages, clamped to [0, 1]."""
    f = 1.0 - unit.maintenance_outage_rate * maintenance_factor - unit.forced_outage_rate
    return min(max(f, 0.0), 1.0)


def energy_cost_rate(unit: UnitGroup, year: int, emission_basis: str = "per_mbtu") -> tuple[float, float, float]:
    """($/MWh fuel, $/MWh variable O&M, $/MWh emission) for ``unit`` in ``year``."""
    if emission_basis not in EMISSION_BASES:
        raise ValueError(f"emission_basis must be one of {EMISSION_BASES}")
    fuel = unit.heat_rate * unit.fuel_price_by_year[year - 1]
    em = unit.emission_price_by_year[year - 1] * unit.emission_coeff
    if emission_basis == "per_mbtu":
        em *= unit.heat_rate
    return fuel, unit.var_om, em


@dataclass
class CostBreakdown:
    pv_expansion: float = 0.0
    fixed_om: float = 0.0
    var_om: float = 0.0
    fuel: float = 0.0
    emission: float = 0.0
    wheeling: float = 0.0
    lost_load: float = 0.0

    @property
    def total(self) -> float:
        return math.fsum(getattr(self, t) for t in COST_TERMS)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["total"] = self.total
        return out


@dataclass
class ExpansionSolution:
    pv_built: dict[tuple[str, int], int]
    dispatch: dict[tuple[str, int, int], float]  # (unit group, year, block) -> MW, group total
    unserved: dict[tuple[str, int, int], float]
    flows: dict[tuple[str, int, int], float]
    cost_breakdown: CostBreakdown = field(default_factory=CostBreakdown)
    status: str = "optimal"
    objective: float = math.nan
    bound: float = math.nan
    gap: float = math.nan
    nodes: int = 0

    def pv_capacity(self, case: PlanningCase, region: str, year: int | None = None) -> float:
        """Installed PV MW in ``region`` by the end of ``year`` (default: last year)."""
        pv = case.pv_group(region)
        if pv is None:
            return 0.0
        year = case.horizon.n_years if year is None else year
        built = sum(v for (r, y), v in self.pv_built.items() if r == region and y <= year)
        return pv.p_max * (pv.existing_count + built)

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "objective": self.objective,
            "bound": self.bound,
            "gap": self.gap,
            "nodes": self.nodes,
            "cost_breakdown": self.cost_breakdown.to_dict(),
            "pv_built": [{"region": r, "year": y, "count": int(v)} for (r, y), v in self.pv_built.items()],
            "dispatch": [{"unit": g, "year": y, "block": s, "mw": v} for (g, y, s), v in self.dispatch.items()],
            "unserved": [{"region": r, "year": y, "block": s, "mw": v} for (r, y, s), v in self.unserved.items()],
            "flows": [{"interface": l, "year": y, "block": s, "mw": v} for (l, y, s), v in self.flows.items()],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExpansionSolution":
        cb = d.get("cost_breakdown", {})
        return cls(
            pv_built={(e["region"], e["year"]): int(e["count"]) for e in d["pv_built"]},
            dispatch={(e["unit"], e["year"], e["block"]): float(e["mw"]) for e in d["dispatch"]},
            unserved={(e["region"], e["year"], e["block"]): float(e["mw"]) for e in d["unserved"]},
            flows={(e["interface"], e["year"], e["block"]): float(e["mw"]) for e in d["flows"]},
            cost_breakdown=CostBreakdown(**{t: float(cb.get(t, 0.0)) for t in COST_TERMS}),
            status=d.get("status", "optimal"),
            objective=float(d.get("objective", math.nan)),
            bound=float(d.get("bound", math.nan)),
            gap=float(d.get("gap", math.nan)),
            nodes=int(d.get("nodes", 0)),
        )


def _check_schedule(case: PlanningCase, sched: BlockSchedule) -> None:
    if tuple(sched.region_ids) != case.region_ids:
        raise ValueError("schedule regions do not match case regions")
    if sched.years != list(case.years):
        raise ValueError("schedule years do not match planning horizon")
    for r in case.regions:
        n_mf = len(r.maintenance_factor_by_block)
        for y in case.years:
            if n_mf != 1 and n_mf != sched.n_blocks(y):
                raise ValueError(
                    f"region {r.id}: {n_mf} maintenance factors for {sched.n_blocks(y)} blocks in year {y}"
                )


def _solution_keys(case: PlanningCase, sched: BlockSchedule):
    builds = [(r.id, y) for r in case.regions for y in case.years]
    dispatch = [(u.id, y, b.block) for u in case.units for y in case.years for b in sched.year_blocks(y)]
    unserved = [(r.id, y, b.block) for r in case.regions for y in case.years for b in sched.year_blocks(y)]
    flows = [(i.id, y, b.block) for i in case.interfaces for y in case.years for b in sched.year_blocks(y)]
    return builds, dispatch, unserved, flows


def evaluate_cost_breakdown(case: PlanningCase, sched: BlockSchedule, sol: ExpansionSolution,
                            emission_basis: str = "per_mbtu") -> CostBreakdown:
    """Evaluate every cost term directly from the solution arrays."""
    _check_schedule(case, sched)
    builds, dispatch, unserved, flows = _solution_keys(case, sched)
    for name, want, got in (("pv_built", builds, sol.pv_built), ("dispatch", dispatch, sol.dispatch),
                            ("unserved", unserved, sol.unserved), ("flows", flows, sol.flows)):
        if set(want) != set(got):
            raise ValueError(f"solution {name} does not match case/schedule dimensions")
    D = build_discount_schedule(case.horizon)
    T = case.horizon.hours_per_year
    terms = {t: [] for t in COST_TERMS}
    for y in case.years:
        for r in case.regions:
            x = sol.pv_built[(r.id, y)]
            terms["pv_expansion"].append(D[y] * (r.pv_build_cost_by_year[y - 1] + r.land_cost_by_year[y - 1]) * x)
        for u in case.units:
            count = u.existing_count
            if u.is_pv:
                count += sum(sol.pv_built[(u.region, yy)] for yy in range(1, y + 1))
            terms["fixed_om"].append(D[y] * u.fixed_om * u.p_max * count)
            fuel, vom, em = energy_cost_rate(u, y, emission_basis)
            for b in sched.year_blocks(y):
                p = sol.dispatch[(u.id, y, b.block)]
                hours = D[y] * T * b.duration_fraction
                terms["fuel"].append(hours * fuel * p)
                terms["var_om"].append(hours * vom * p)
                terms["emission"].append(hours * em * p)
        for b in sched.year_blocks(y):
            hours = D[y] * T * b.duration_fraction
            for r in case.regions:
                terms["lost_load"].append(hours * r.voll * sol.unserved[(r.id, y, b.block)])
            for itf in case.interfaces:
                terms["wheeling"].append(hours * itf.wheeling_price * abs(sol.flows[(itf.id, y, b.block)]))
    return CostBreakdown(**{t: math.fsum(v) for t, v in terms.items()})


def build_expansion_lp(case: PlanningCase, sched: BlockSchedule,
                       emission_basis: str = "per_mbtu") -> LinearProgramSpec:
    """Assemble the mixed-integer expansion model as a :class:`LinearProgramSpec`."""
    _check_schedule(case, sched)
    D = build_discount_schedule(case.horizon)
    T = case.horizon.hours_per_year
    years = list(case.years)
    lp = LpBuilder(name="pvexpand")

    # existing fleet fixed O&M is a constant
    lp.c0 = math.fsum(D[y] * u.fixed_om * u.p_max * u.existing_count for y in years for u in case.units)

    for r in case.regions:
        pv = case.pv_group(r.id)
        for y in years:
            limit = math.floor(r.pv_build_limit_by_year[y - 1] + 1e-9) if pv is not None else 0
            cost = D[y] * (r.pv_build_cost_by_year[y - 1] + r.land_cost_by_year[y - 1])
            if pv is not None:
                # each unit built in year y pays fixed O&M in y and every later year
                cost += math.fsum(D[yy] * pv.fixed_om * pv.p_max for yy in years if yy >= y)
            lp.var(("build", r.id, None, y, None), 0.0, limit, cost, integer=True)

    for y in years:
        for b in sched.year_blocks(y):
            s = b.block
            hours = D[y] * T * b.duration_fraction
            for u in case.units:
                fuel, vom, em = energy_cost_rate(u, y, emission_basis)
                rate = hours * (fuel + vom + em)
                if u.is_pv:
                    lp.var(("pv", u.region, u.id, y, s), 0.0, math.inf, rate)
                else:
                    mf = case.region(u.region).maintenance_factor(s)
                    cap = derating(u, mf) * u.p_max * u.existing_count
                    lp.var(("gen", u.region, u.id, y, s), 0.0, cap, rate)
            for r in case.regions:
                lp.var(("usp", r.id, None, y, s), 0.0, b.load_by_region[r.id], hours * r.voll)
            for itf in case.interfaces:
                w = hours * itf.wheeling_price
                lp.var(("flow+", itf.id, None, y, s), 0.0, itf.capacity, w)
                lp.var(("flow-", itf.id, None, y, s), 0.0, itf.capacity, w)

    for r in case.regions:
        pv = case.pv_group(r.id)
        units = case.units_in(r.id)
        conv_cap = math.fsum(u.p_max * u.existing_count for u in units if not u.is_pv)
        for y in years:
            cum_build = {lp[("build", r.id, None, yy, None)]: 1.0 for yy in years if yy <= y}
            for b in sched.year_blocks(y):
                s = b.block
                load = b.load_by_region[r.id]
                cf = b.pv_cf_by_region[r.id]
                inflow: dict[int, float] = {}
                for itf in case.interfaces:
                    sign = 1.0 if itf.to_region == r.id else -1.0 if itf.from_region == r.id else 0.0
                    if sign:
                        inflow[lp[("flow+", itf.id, None, y, s)]] = sign
                        inflow[lp[("flow-", itf.id, None, y, s)]] = -sign
                usp = lp[("usp", r.id, None, y, s)]

                terms = {lp[("gen", r.id, u.id, y, s)]: 1.0 for u in units if not u.is_pv}
                if pv is not None:
                    terms[lp[("pv", r.id, pv.id, y, s)]] = 1.0
                terms[usp] = 1.0
                terms.update(inflow)
                lp.row("balance", f"balance[{r.id},{y},{s}]", terms, "==", load)

                mf = r.maintenance_factor(s)
                firm = math.fsum(derating(u, mf) * u.p_max * u.existing_count for u in units if not u.is_pv)
                terms = {usp: 1.0, **inflow}
                rhs = load + r.reserve_margin_by_year[y - 1] - firm
                if pv is not None:
                    for j in cum_build:
                        terms[j] = cf * pv.p_max
                    rhs -= cf * pv.p_max * pv.existing_count
                lp.row("adequacy", f"adequacy[{r.id},{y},{s}]", terms, ">=", rhs)

                if pv is not None:
                    terms = {lp[("pv", r.id, pv.id, y, s)]: 1.0}
                    for j in cum_build:
                        terms[j] = -cf * pv.p_max
                    lp.row("pv_output", f"pv_output[{r.id},{y},{s}]", terms, "<=",
                           cf * pv.p_max * pv.existing_count)

            rps = r.rps_by_year[y - 1]
            if rps > 0:
                if pv is None:
                    raise ValueError(f"region {r.id} has an RPS target but no pv unit group")
                terms = {j: (1 - rps) * pv.p_max for j in cum_build}
                rhs = rps * conv_cap - (1 - rps) * pv.p_max * pv.existing_count
                lp.row("rps", f"rps[{r.id},{y}]", terms, ">=", rhs)

        if pv is not None:
            terms = {lp[("build", r.id, None, y, None)]: pv.p_max for y in years}
            lp.row("pv_cap", f"pv_cap[{r.id}]", terms, "<=",
                   r.validated_dispatch_total - pv.p_max * pv.existing_count)
    return lp.build()


def extract_solution(case: PlanningCase, sched: BlockSchedule, spec: LinearProgramSpec,
                     x: np.ndarray, emission_basis: str = "per_mbtu") -> ExpansionSolution:
    idx = spec.index
    builds, dispatch, unserved, flows = _solution_keys(case, sched)
    units = {u.id: u for u in case.units}
    sol = ExpansionSolution(
        pv_built={(r, y): int(round(x[idx[("build", r, None, y, None)]])) for r, y in builds},
        dispatch={},
        unserved={(r, y, s): float(x[idx[("usp", r, None, y, s)]]) for r, y, s in unserved},
        flows={(l, y, s): float(x[idx[("flow+", l, None, y, s)]] - x[idx[("flow-", l, None, y, s)]])
               for l, y, s in flows},
    )
    for g, y, s in dispatch:
        u = units[g]
        role = "pv" if u.is_pv else "gen"
        sol.dispatch[(g, y, s)] = float(x[idx[(role, u.region, g, y, s)]])
    sol.cost_breakdown = evaluate_cost_breakdown(case, sched, sol, emission_basis)
    return sol


def plan_expansion(case: PlanningCase, sched: BlockSchedule, opts: SolverOptions | None = None,
                   emission_basis: str = "per_mbtu") -> tuple[ExpansionSolution, MilpSolution, LinearProgramSpec]:
    """Assemble and solve the expansion model; returns (solution, raw MILP result, model)."""
    spec = build_expansion_lp(case, sched, emission_basis)
    res = solve_milp(spec, opts)
    if res.incumbent is None:
        empty = ExpansionSolution({}, {}, {}, {}, status=res.status, nodes=res.nodes_explored)
        return empty, res, spec
    sol = extract_solution(case, sched, spec, res.values, emission_basis)
    sol.status = res.status
    sol.objective = res.objective
    sol.bound = res.bound
    sol.gap = res.gap
    sol.nodes = res.nodes_explored
    return sol, res, spec


@dataclass
class AuditReport:
    tol: float
    residuals: dict[str, float]
    worst: dict[str, str]

    @property
    def passed(self) -> bool:
        return all(v <= self.tol for v in self.residuals.values())

    @property
    def max_residual(self) -> float:
        return max(self.residuals.values(), default=0.0)

    def failing(self) -> list[str]:
        return [f for f, v in self.residuals.items() if v > self.tol]

    def to_dict(self) -> dict:
        return {"tol": self.tol, "passed": self.passed, "residuals": self.residuals, "worst": self.worst}


AUDIT_FAMILIES = (
    "balance", "build_limit", "derated_capacity", "adequacy",
    "interface_limit", "rps", "pv_output", "pv_cap", "unserved_bounds",
)


def audit_solution(case: PlanningCase, sched: BlockSchedule, sol: ExpansionSolution,
                   tol: float = 1e-6) -> AuditReport:
    """Recompute every constraint family's worst residual (MW or units) from ``sol``."""
    residuals = {f: 0.0 for f in AUDIT_FAMILIES}
    worst = {f: "" for f in AUDIT_FAMILIES}

    def record(family, value, where):
        if value > residuals[family]:
            residuals[family] = float(value)
            worst[family] = where

    years = list(case.years)
    for r in case.regions:
        pv = case.pv_group(r.id)
        units = case.units_in(r.id)
        for y in years:
            x = sol.pv_built.get((r.id, y), 0)
            limit = math.floor(r.pv_build_limit_by_year[y - 1] + 1e-9) if pv is not None else 0
            record("build_limit", max(x - limit, -x, abs(x - round(x))), f"{r.id},{y}")
            cum = sum(sol.pv_built.get((r.id, yy), 0) for yy in years if yy <= y)
            pv_cap = pv.p_max * (pv.existing_count + cum) if pv is not None else 0.0
            for b in sched.year_blocks(y):
                s = b.block
                where = f"{r.id},{y},{s}"
                load = b.load_by_region[r.id]
                cf = b.pv_cf_by_region[r.id]
                mf = r.maintenance_factor(s)
                gen = math.fsum(sol.dispatch.get((u.id, y, s), 0.0) for u in units)
                usp = sol.unserved.get((r.id, y, s), 0.0)
                inflow = math.fsum(
                    (sol.flows.get((i.id, y, s), 0.0) if i.to_region == r.id else -sol.flows.get((i.id, y, s), 0.0))
                    for i in case.interfaces if r.id in (i.from_region, i.to_region)
                )
                record("balance", abs(gen + usp + inflow - load), where)
                record("unserved_bounds", max(-usp, usp - load), where)
                firm = 0.0
                for u in units:
                    p = sol.dispatch.get((u.id, y, s), 0.0)
                    if u.is_pv:
                        record("pv_output", max(p - cf * pv_cap, -p), f"{u.id},{y},{s}")
                    else:
                        cap = derating(u, mf) * u.p_max * u.existing_count
                        firm += cap
                        record("derated_capacity", max(p - cap, -p), f"{u.id},{y},{s}")
                need = load + r.reserve_margin_by_year[y - 1]
                record("adequacy", need - (firm + cf * pv_cap + usp + inflow), where)
            rps = r.rps_by_year[y - 1]
            if rps > 0:
                conv = math.fsum(u.p_max * u.existing_count for u in units if not u.is_pv)
                record("rps", rps * (conv + pv_cap) - pv_cap, f"{r.id},{y}")
            record("pv_cap", pv_cap - r.validated_dispatch_total if pv is not None else 0.0, f"{r.id},{y}")
    for itf in case.interfaces:
        for y in years:
            for b in sched.year_blocks(y):
                flow = sol.flows.get((itf.id, y, b.block), 0.0)
                record("interface_limit", abs(flow) - itf.capacity, f"{itf.id},{y},{b.block}")
    return AuditReport(tol, residuals, worst)
