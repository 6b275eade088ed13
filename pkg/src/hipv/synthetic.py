"""Programmatic case construction: the tiny3 fixture and random small instances."""

from __future__ import annotations

import math

import numpy as np

from .data import HourlySeries, Interface, PlanningCase, PlanningHorizon, Region, UnitGroup


def region(rid: str, n_years: int, *, build_cost=1.0e8, land_cost=2.0e6, build_limit=40,
           voll=10_000.0, reserve=0.0, rps=0.0, mf=(0.5,), validated_total=0.0, name=None) -> Region:
    def per_year(v):
        return tuple(float(x) for x in (v if isinstance(v, (list, tuple)) else [v] * n_years))

    return Region(
        id=rid,
        name=name or rid,
        pv_build_cost_by_year=per_year(build_cost),
        land_cost_by_year=per_year(land_cost),
        pv_build_limit_by_year=per_year(build_limit),
        voll=float(voll),
        reserve_margin_by_year=per_year(reserve),
        rps_by_year=per_year(rps),
        maintenance_factor_by_block=tuple(float(x) for x in mf),
        validated_dispatch_total=float(validated_total),
    )


def unit(uid: str, rid: str, kind: str, n_years: int, *, p_max, count, fixed_om=0.0, var_om=0.0,
         heat_rate=0.0, fuel=0.0, emission_coeff=0.0, emission_price=0.0, forced=0.0,
         maintenance=0.0, inertia=None, droop=None, tg=5.0, validated=0.0) -> UnitGroup:
    def per_year(v):
        return tuple(float(x) for x in (v if isinstance(v, (list, tuple)) else [v] * n_years))

    if inertia is None:
        inertia = 0.0 if kind == "pv" else 4.0
    if droop is None:
        droop = 0.0 if kind in ("pv", "wind") else 0.05
    return UnitGroup(
        id=uid, region=rid, kind=kind, p_max=float(p_max), existing_count=int(count),
        fixed_om=float(fixed_om), var_om=float(var_om), heat_rate=float(heat_rate),
        fuel_price_by_year=per_year(fuel), emission_coeff=float(emission_coeff),
        emission_price_by_year=per_year(emission_price), forced_outage_rate=float(forced),
        maintenance_outage_rate=float(maintenance), inertia_h=float(inertia),
        governor_droop=float(droop), validated_dispatch=float(validated), governor_tg=float(tg),
    )


def pv_unit(rid: str, n_years: int, *, p_max=100.0, count=0, fixed_om=20_000.0, validated=0.0) -> UnitGroup:
    return unit(f"{rid}_pv", rid, "pv", n_years, p_max=p_max, count=count, fixed_om=fixed_om,
                validated=validated)


def synthetic_series(rng: np.random.Generator, hours: int, *, mean_load: float, swing: float,
                     solar_peak: float = 0.85, phase: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """Hourly load (MW) and solar capacity factor with daily and seasonal shape."""
    h = np.arange(hours)
    hour_of_day = (h + phase) % 24
    day = h // 24
    season = np.cos(2 * np.pi * (day - 200) / 365.0)  # summer peak
    daily = np.exp(-0.5 * ((hour_of_day - 17.0) / 4.0) ** 2) - 0.35
    noise = rng.normal(0.0, 0.02, hours)
    load = mean_load * (1.0 + swing * (0.6 * daily + 0.3 * season) + noise)

    elevation = np.sin(np.pi * (hour_of_day - 6.0) / 12.0)
    day_len = 1.0 + 0.25 * season
    sun = np.clip(elevation * day_len, 0.0, None)
    sun[(hour_of_day < 6) | (hour_of_day > 18)] = 0.0
    clouds = np.clip(1.0 - rng.gamma(1.2, 0.12, hours), 0.2, 1.0)
    cf = np.clip(solar_peak * sun * clouds, 0.0, 1.0)
    cf[sun == 0] = 0.0
    return np.round(load, 2), np.round(cf, 4)


TINY3_REGIONS = {
    # id: (mean load, build limit, validated dispatch, series phase)
    "N": (3200.0, 40, 3650.0, 0.0),
    "C": (3300.0, 40, 3830.0, 0.5),
    "S": (1900.0, 40, 2180.0, 1.0),
}


def tiny3_case(seed: int = 2024) -> PlanningCase:
    """Three regions on a chain N - C - S, two planning years."""
    ny = 2
    hours = 8760
    horizon = PlanningHorizon(n_years=ny, discount_rate=0.05, hours_per_year=hours)
    regions = []
    for rid, (_, limit, validated, _) in TINY3_REGIONS.items():
        regions.append(region(rid, ny, build_limit=limit, voll=10_000.0, reserve=200.0,
                              rps=(0.0, 0.05) if rid == "S" else 0.0, mf=(0.5,),
                              validated_total=validated, name={"N": "North", "C": "Central", "S": "South"}[rid]))
    em_price = (30.0, 45.0)
    units = (
        unit("N_coal", "N", "coal", ny, p_max=400, count=12, fixed_om=40_000, var_om=4.0, heat_rate=10.0,
             fuel=2.5, emission_coeff=0.095, emission_price=em_price, forced=0.05, maintenance=0.1,
             inertia=5.0, droop=0.05, tg=5.0, validated=3650.0),
        pv_unit("N", ny),
        unit("C_gas", "C", "gas", ny, p_max=250, count=20, fixed_om=20_000, var_om=3.0, heat_rate=7.5,
             fuel=4.0, emission_coeff=0.053, emission_price=em_price, forced=0.04, maintenance=0.08,
             inertia=4.0, droop=0.05, tg=5.0, validated=3830.0),
        pv_unit("C", ny),
        unit("S_oil", "S", "oil", ny, p_max=300, count=10, fixed_om=25_000, var_om=5.0, heat_rate=11.0,
             fuel=7.0, emission_coeff=0.08, emission_price=em_price, forced=0.05, maintenance=0.1,
             inertia=3.5, droop=0.05, tg=6.0, validated=2180.0),
        pv_unit("S", ny),
    )
    interfaces = (
        Interface("NC", "N", "C", capacity=800.0, wheeling_price=2.0, sync_stiffness=2000.0),
        Interface("CS", "C", "S", capacity=600.0, wheeling_price=2.0, sync_stiffness=1500.0),
    )
    rng = np.random.default_rng(seed)
    series = []
    for rid, (mean, _, _, phase) in TINY3_REGIONS.items():
        for y in range(1, ny + 1):
            growth = 1.0 + 0.02 * (y - 1)
            load, cf = synthetic_series(rng, hours, mean_load=mean * growth, swing=0.25, phase=phase)
            series.append(HourlySeries(rid, y, load, cf))
    return PlanningCase(horizon, tuple(regions), units, interfaces, tuple(series))


TINY3_CONFIG = {
    "partition": {"k_per_year": 8, "seed": 7},
    "expansion": {"emission_basis": "per_mbtu"},
    "solver": {"abs_gap": 1e-6, "max_nodes": 20000},
    "sweep": {"levels": [0.05, 0.25, 0.45, 0.65], "trip_fraction": 0.003, "trip_region": "N",
              "block": "peak_solar"},
    "sim": {"dt": 0.005, "flat_horizon": 20.0, "contingency_horizon": 60.0, "event_time": 1.0},
}


def random_expansion_instance(rng: np.random.Generator, max_regions: int = 3, max_years: int = 2,
                              max_blocks: int = 4, max_build: int = 5, max_combinations: int = 400):
    """A small random case plus block schedule (no hourly data).

    The number of integer build vectors stays below ``max_combinations`` so
    brute-force enumeration remains cheap.
    """
    from .blocks import schedule_from_arrays

    while True:
        n_r = int(rng.integers(1, max_regions + 1))
        n_y = int(rng.integers(1, max_years + 1))
        limits = rng.integers(0, max_build + 1, size=(n_r, n_y))
        if np.prod(limits + 1) <= max_combinations and limits.sum() > 0:
            break
    n_s = int(rng.integers(1, max_blocks + 1))
    rids = [f"R{i}" for i in range(n_r)]
    regions, units = [], []
    for i, rid in enumerate(rids):
        kind = ["coal", "gas", "oil"][int(rng.integers(3))]
        count = int(rng.integers(2, 6))
        p_max = float(rng.choice([100.0, 150.0, 200.0]))
        validated = round(float(rng.uniform(0.5, 0.9)) * p_max * count, 1)
        pv_pmax = float(rng.choice([37.0, 50.0, 75.0]))
        pv_count = int(rng.integers(0, 2))
        rps = float(rng.choice([0.0, 0.0, 0.05]))
        if rps > 0:
            # keep the target reachable within build limits and the capacity cap
            need = math.ceil(rps * p_max * count / ((1 - rps) * pv_pmax) - 1e-9) - pv_count
            reachable = np.all(np.cumsum(limits[i]) >= need) and pv_pmax * (pv_count + need) <= validated
            if not reachable:
                rps = 0.0
        regions.append(region(
            rid, n_y, build_cost=float(rng.uniform(4e7, 1.2e8)), land_cost=float(rng.uniform(0, 5e6)),
            build_limit=[float(v) for v in limits[i]], voll=float(rng.uniform(2000, 9000)),
            reserve=float(rng.uniform(0, 50)), rps=rps,
            mf=(float(rng.uniform(0, 1)),), validated_total=validated,
        ))
        units.append(unit(
            f"{rid}_{kind}", rid, kind, n_y, p_max=p_max, count=count,
            fixed_om=float(rng.uniform(1e4, 4e4)), var_om=float(rng.uniform(1, 6)),
            heat_rate=float(rng.uniform(7, 11)), fuel=[float(rng.uniform(2, 6)) for _ in range(n_y)],
            emission_coeff=float(rng.uniform(0.05, 0.1)),
            emission_price=[float(rng.uniform(10, 80)) for _ in range(n_y)],
            forced=float(rng.uniform(0, 0.08)), maintenance=float(rng.uniform(0, 0.15)),
            validated=validated,
        ))
        units.append(pv_unit(rid, n_y, p_max=pv_pmax, count=pv_count, fixed_om=float(rng.uniform(1e4, 3e4))))
    interfaces = []
    for i in range(n_r - 1):
        interfaces.append(Interface(f"L{i}", rids[i], rids[i + 1], capacity=float(rng.uniform(20, 150)),
                                    wheeling_price=float(rng.uniform(0, 5)), sync_stiffness=1000.0))
    horizon = PlanningHorizon(n_y, float(rng.uniform(0.03, 0.1)), 8760)
    case = PlanningCase(horizon, tuple(regions), tuple(units), tuple(interfaces), ())
    durations, loads, cfs = [], [], []
    for _ in range(n_y):
        w = rng.uniform(0.5, 1.5, n_s)
        durations.append(w / w.sum())
        cap = np.array([u.capacity for u in units if not u.is_pv])
        loads.append(rng.uniform(0.3, 1.05, (n_s, n_r)) * cap)
        cf = rng.uniform(0, 0.9, (n_s, n_r))
        cf[rng.random((n_s, n_r)) < 0.3] = 0.0
        cfs.append(cf)
    sched = schedule_from_arrays(rids, durations, loads, cfs)
    return case, sched
