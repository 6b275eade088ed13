"""PV displacement scenarios: from an expansion plan to balanced dynamic cases.

Conventional output is displaced by PV in a fixed merit order at one operating
point (a time block). Whole units go offline while they fit; the marginal
group keeps its units online at reduced output, so its inertia stays.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .blocks import BlockSchedule, TimeBlock
from .data import PlanningCase
from .expansion import ExpansionSolution

F0 = 60.0
DISPLACEMENT_ORDER = ("retiring", "oil", "coal", "gas", "nuclear", "hydro")
TOL_MW = 1e-9


class ScenarioError(ValueError):
    """A scenario cannot be built; ``shortfall_mw`` is set when PV runs short."""

    def __init__(self, message: str, shortfall_mw: float | None = None):
        super().__init__(message)
        self.shortfall_mw = shortfall_mw


@dataclass(frozen=True)
class PenetrationTarget:
    level: float

    def __post_init__(self):
        if not (0.0 <= self.level < 1.0):
            raise ValueError(f"penetration level must lie in [0, 1), got {self.level}")


@dataclass(frozen=True)
class Machine:
    """Online part of one unit group, aggregated."""

    unit_id: str
    kind: str
    count_online: int
    p_max: float  # MW per unit
    dispatch_mw: float  # group total
    inertia_h: float
    droop: float
    governor_tg: float
    existing_count: int = 0

    @property
    def rating(self) -> float:
        return self.p_max * self.count_online

    @property
    def per_unit_dispatch(self) -> float:
        return self.dispatch_mw / self.count_online if self.count_online else 0.0


@dataclass(frozen=True)
class DisplacementStep:
    unit_id: str
    mw_displaced: float
    whole_units_removed: int
    partial_mw: float


@dataclass(frozen=True)
class DisplacementPlan:
    region: str
    target_mw: float
    steps: tuple[DisplacementStep, ...] = ()

    @property
    def total_mw(self) -> float:
        return sum(s.mw_displaced for s in self.steps)


@dataclass(frozen=True)
class RegionDynamics:
    id: str
    machines: tuple[Machine, ...]
    pv_mw: float
    load_mw: float
    angle_rad: float = 0.0

    @property
    def dispatch_mw(self) -> float:
        return sum(m.dispatch_mw for m in self.machines)

    @property
    def rating(self) -> float:
        return sum(m.rating for m in self.machines)

    @property
    def stored_energy(self) -> float:
        """Sum of H*S over online machines (MW s)."""
        return sum(m.inertia_h * m.rating for m in self.machines)


@dataclass(frozen=True)
class TieLine:
    id: str
    from_region: str
    to_region: str
    sync_stiffness: float  # MW/rad
    capacity: float
    flow_mw: float = 0.0  # from -> to


@dataclass(frozen=True)
class DynamicCase:
    regions: tuple[RegionDynamics, ...]
    ties: tuple[TieLine, ...]
    f0: float = F0
    level: float = 0.0
    block: tuple[int, int] | None = None
    plans: tuple[DisplacementPlan, ...] = field(default=(), compare=False)

    @property
    def region_ids(self) -> tuple[str, ...]:
        return tuple(r.id for r in self.regions)

    def region(self, rid: str) -> RegionDynamics:
        for r in self.regions:
            if r.id == rid:
                return r
        raise KeyError(rid)

    @property
    def total_load(self) -> float:
        return sum(r.load_mw for r in self.regions)

    @property
    def total_generation(self) -> float:
        return sum(r.dispatch_mw + r.pv_mw for r in self.regions)

    @property
    def pv_share(self) -> float:
        gen = self.total_generation
        return sum(r.pv_mw for r in self.regions) / gen if gen > 0 else 0.0

    @property
    def stored_energy(self) -> float:
        return sum(r.stored_energy for r in self.regions)

    def net_imports(self, rid: str) -> float:
        """Tie flow into ``rid`` implied by the stored angles."""
        angle = {r.id: r.angle_rad for r in self.regions}
        total = 0.0
        for t in self.ties:
            p = t.sync_stiffness * (angle[t.from_region] - angle[t.to_region])
            if t.to_region == rid:
                total += p
            elif t.from_region == rid:
                total -= p
        return total

    def balance_residual(self, rid: str) -> float:
        r = self.region(rid)
        return r.dispatch_mw + r.pv_mw + self.net_imports(rid) - r.load_mw

    def to_dict(self) -> dict:
        return {
            "f0": self.f0,
            "level": self.level,
            "block": list(self.block) if self.block is not None else None,
            "regions": [
                {
                    "id": r.id,
                    "pv_mw": r.pv_mw,
                    "load_mw": r.load_mw,
                    "angle_rad": r.angle_rad,
                    "machines": [asdict(m) for m in r.machines],
                }
                for r in self.regions
            ],
            "ties": [asdict(t) for t in self.ties],
            "plans": [
                {"region": p.region, "target_mw": p.target_mw, "steps": [asdict(s) for s in p.steps]}
                for p in self.plans
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DynamicCase":
        regions = tuple(
            RegionDynamics(
                id=r["id"],
                machines=tuple(Machine(**m) for m in r["machines"]),
                pv_mw=float(r["pv_mw"]),
                load_mw=float(r["load_mw"]),
                angle_rad=float(r["angle_rad"]),
            )
            for r in d["regions"]
        )
        plans = tuple(
            DisplacementPlan(p["region"], float(p["target_mw"]),
                             tuple(DisplacementStep(**s) for s in p["steps"]))
            for p in d.get("plans", [])
        )
        return cls(
            regions=regions,
            ties=tuple(TieLine(**t) for t in d["ties"]),
            f0=float(d.get("f0", F0)),
            level=float(d.get("level", 0.0)),
            block=tuple(d["block"]) if d.get("block") is not None else None,
            plans=plans,
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "DynamicCase":
        return cls.from_dict(json.loads(text))


def rank_displacement_candidates(fleet) -> list[Machine]:
    """Displaceable machines in merit order.

    Order: retiring, oil, coal, gas, nuclear, hydro; within a kind, larger
    dispatch first, then id. Wind, PV and idle machines are never candidates.
    """
    cands = [m for m in fleet if m.kind in DISPLACEMENT_ORDER and m.dispatch_mw > 0 and m.count_online > 0]
    return sorted(cands, key=lambda m: (DISPLACEMENT_ORDER.index(m.kind), -m.dispatch_mw, m.unit_id))


def build_displacement_plan(region_state, pv_mw_target: float, region: str = "") -> DisplacementPlan:
    """Greedy walk down the ranked candidates until ``pv_mw_target`` MW is displaced."""
    machines = region_state.machines if isinstance(region_state, RegionDynamics) else tuple(region_state)
    if isinstance(region_state, RegionDynamics):
        region = region_state.id
    if pv_mw_target < 0:
        raise ValueError("displacement target must be non-negative")
    ranked = rank_displacement_candidates(machines)
    available = sum(m.dispatch_mw for m in ranked)
    if pv_mw_target > available + TOL_MW * max(1.0, available):
        raise ScenarioError(
            f"region {region!r}: target {pv_mw_target:.6g} MW exceeds displaceable dispatch {available:.6g} MW",
            shortfall_mw=pv_mw_target - available,
        )
    remaining = min(pv_mw_target, available)
    steps = []
    for m in ranked:
        if remaining <= TOL_MW:
            break
        per_unit = m.per_unit_dispatch
        if remaining >= m.dispatch_mw - TOL_MW:
            steps.append(DisplacementStep(m.unit_id, m.dispatch_mw, m.count_online, 0.0))
            remaining -= m.dispatch_mw
            continue
        whole = min(int(math.floor(remaining / per_unit + 1e-12)), m.count_online - 1)
        partial = remaining - whole * per_unit
        if partial <= TOL_MW:
            partial = 0.0
        steps.append(DisplacementStep(m.unit_id, remaining, whole, partial))
        remaining = 0.0
    return DisplacementPlan(region, float(pv_mw_target), tuple(steps))


def apply_plan(machines, plan: DisplacementPlan) -> tuple[Machine, ...]:
    """Fleet after the plan: removed units go offline, the marginal group is scaled."""
    by_id = {s.unit_id: s for s in plan.steps}
    out = []
    for m in machines:
        s = by_id.get(m.unit_id)
        if s is None:
            out.append(m)
            continue
        count = m.count_online - s.whole_units_removed
        if count <= 0:
            continue
        dispatch = max(m.dispatch_mw - s.mw_displaced, 0.0)
        out.append(Machine(m.unit_id, m.kind, count, m.p_max, dispatch, m.inertia_h, m.droop,
                           m.governor_tg, m.existing_count))
    return tuple(out)


def _components(rids: list[str], ties) -> list[list[str]]:
    parent = {r: r for r in rids}

    def find(r):
        while parent[r] != r:
            parent[r] = parent[parent[r]]
            r = parent[r]
        return r

    for t in ties:
        a, b = find(t.from_region), find(t.to_region)
        if a != b:
            parent[max(a, b, key=rids.index)] = min(a, b, key=rids.index)
    groups: dict[str, list[str]] = {}
    for r in rids:
        groups.setdefault(find(r), []).append(r)
    return list(groups.values())


def solve_angles(rids: list[str], ties, injection: dict[str, float]) -> dict[str, float]:
    """DC power-flow angles with the first region of each island as reference."""
    idx = {r: i for i, r in enumerate(rids)}
    n = len(rids)
    lap = np.zeros((n, n))
    for t in ties:
        i, j, k = idx[t.from_region], idx[t.to_region], t.sync_stiffness
        lap[i, i] += k
        lap[j, j] += k
        lap[i, j] -= k
        lap[j, i] -= k
    angles = np.zeros(n)
    for comp in _components(rids, ties):
        ids = [idx[r] for r in comp]
        mismatch = sum(injection[r] for r in comp)
        if abs(mismatch) > 1e-6 * max(1.0, sum(abs(injection[r]) for r in comp)):
            raise ScenarioError(f"island {comp} is unbalanced by {mismatch:.6g} MW")
        if len(ids) == 1:
            continue
        sub = ids[1:]
        p = np.array([injection[rids[i]] for i in sub])
        angles[sub] = np.linalg.solve(lap[np.ix_(sub, sub)], p)
    return {r: float(angles[idx[r]]) for r in rids}


def _with_flows(rids, ties, injection, regions) -> tuple[tuple[RegionDynamics, ...], tuple[TieLine, ...]]:
    angles = solve_angles(rids, ties, injection)
    out_ties = []
    for t in ties:
        flow = t.sync_stiffness * (angles[t.from_region] - angles[t.to_region])
        if abs(flow) > t.capacity + 1e-6:
            raise ScenarioError(f"interface {t.id!r} would carry {flow:.6g} MW, above its {t.capacity:.6g} MW limit")
        out_ties.append(TieLine(t.id, t.from_region, t.to_region, t.sync_stiffness, t.capacity, flow))
    out_regions = tuple(
        RegionDynamics(r.id, r.machines, r.pv_mw, r.load_mw, angles[r.id]) for r in regions
    )
    return out_regions, tuple(out_ties)


def base_dynamic_case(case: PlanningCase) -> DynamicCase:
    """The validated operating point: every committed group at its validated output."""
    regions = []
    for rid in case.region_ids:
        machines, pv = [], 0.0
        for u in case.units_in(rid):
            if u.is_pv:
                pv += u.validated_dispatch
            elif u.validated_dispatch > 0 and u.existing_count > 0:
                machines.append(Machine(u.id, u.kind, u.existing_count, u.p_max, u.validated_dispatch,
                                        u.inertia_h, u.governor_droop, u.governor_tg, u.existing_count))
        load = sum(m.dispatch_mw for m in machines) + pv
        regions.append(RegionDynamics(rid, tuple(machines), pv, load))
    ties = [TieLine(i.id, i.from_region, i.to_region, i.sync_stiffness, i.capacity) for i in case.interfaces]
    rids = list(case.region_ids)
    injection = {r.id: 0.0 for r in regions}
    regions_t, ties_t = _with_flows(rids, ties, injection, regions)
    return DynamicCase(regions_t, ties_t)


def select_block(sched: BlockSchedule, case: PlanningCase, sol: ExpansionSolution,
                 selector: str = "peak_solar", year: int | None = None) -> TimeBlock:
    """Pick the operating point for a sweep.

    ``peak_solar`` takes the block of the final year with the most available
    PV MW; ``"<year>:<block>"`` names one directly.
    """
    if selector == "peak_solar":
        year = case.horizon.n_years if year is None else year
        caps = {r: sol.pv_capacity(case, r, year) for r in case.region_ids}
        blocks = sched.year_blocks(year)
        if not blocks:
            raise ScenarioError(f"no blocks for year {year}")
        return max(blocks, key=lambda b: (sum(caps[r] * b.pv_cf_by_region[r] for r in caps), -b.block))
    try:
        y, s = (int(v) for v in selector.split(":"))
    except ValueError:
        raise ValueError(f"block selector must be 'peak_solar' or '<year>:<block>', got {selector!r}") from None
    for b in sched.blocks:
        if b.year == y and b.block == s:
            return b
    raise ScenarioError(f"no block {s} in year {y}")


def pv_headroom(case: PlanningCase, sol: ExpansionSolution, block: TimeBlock,
                base: DynamicCase | None = None) -> dict[str, float]:
    """PV MW each region could add at ``block`` on top of its base PV output."""
    base = base or base_dynamic_case(case)
    out = {}
    for rid in case.region_ids:
        avail = sol.pv_capacity(case, rid, block.year) * block.pv_cf_by_region[rid]
        out[rid] = max(avail - base.region(rid).pv_mw, 0.0)
    return out


def build_dynamic_case(case: PlanningCase, sol: ExpansionSolution, block: TimeBlock,
                       target: PenetrationTarget | float) -> DynamicCase:
    """Displace conventional output so PV supplies ``target`` of system generation.

    Extra PV is split across regions in proportion to their unused PV
    availability at ``block``. A region whose new PV exceeds its own
    displaceable output exports the surplus; it is then displaced pro rata in
    the other regions of the same island, and tie limits are checked.
    """
    if not isinstance(target, PenetrationTarget):
        target = PenetrationTarget(float(target))
    base = base_dynamic_case(case)
    rids = list(case.region_ids)
    gen = base.total_generation
    base_pv = sum(r.pv_mw for r in base.regions)
    extra = target.level * gen - base_pv
    if extra < -1e-9 * max(1.0, gen):
        raise ScenarioError(
            f"target {target.level:.4g} is below the base PV share {base_pv / gen:.4g}")
    extra = max(extra, 0.0)
    head = pv_headroom(case, sol, block, base)
    head_total = sum(head.values())
    if extra > head_total + 1e-9 * max(1.0, gen):
        short = extra - head_total
        raise ScenarioError(
            f"insufficient PV at block {block.year}:{block.block} for level {target.level:.4g}: "
            f"short by {short:.6g} MW", shortfall_mw=short)
    add = {r: (extra * head[r] / head_total if head_total > 0 else 0.0) for r in rids}

    displaceable = {r: sum(m.dispatch_mw for m in rank_displacement_candidates(base.region(r).machines))
                    for r in rids}
    local = {r: min(add[r], displaceable[r]) for r in rids}
    for comp in _components(rids, case.interfaces):
        surplus = sum(add[r] - local[r] for r in comp)
        if surplus <= TOL_MW:
            continue
        room = {r: displaceable[r] - local[r] for r in comp}
        room_total = sum(room.values())
        if surplus > room_total + TOL_MW:
            raise ScenarioError(
                f"island {comp} cannot absorb {surplus:.6g} MW of PV surplus",
                shortfall_mw=surplus - room_total)
        for r in comp:
            local[r] += surplus * room[r] / room_total

    regions, plans = [], []
    for r in rids:
        reg = base.region(r)
        plan = build_displacement_plan(reg, local[r])
        plans.append(plan)
        regions.append(RegionDynamics(r, apply_plan(reg.machines, plan), reg.pv_mw + add[r], reg.load_mw))
    injection = {reg.id: reg.dispatch_mw + reg.pv_mw - reg.load_mw for reg in regions}
    ties = [TieLine(t.id, t.from_region, t.to_region, t.sync_stiffness, t.capacity) for t in base.ties]
    regions_t, ties_t = _with_flows(rids, ties, injection, regions)
    return DynamicCase(regions_t, ties_t, F0, target.level, (block.year, block.block), tuple(plans))
