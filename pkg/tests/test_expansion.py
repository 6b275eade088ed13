import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hipv.blocks import schedule_from_arrays
from hipv.data import Interface, PlanningCase, PlanningHorizon, replace
from hipv.expansion import (AUDIT_FAMILIES, COST_TERMS, ExpansionSolution, audit_solution,
                            build_discount_schedule, build_expansion_lp, evaluate_cost_breakdown,
                            extract_solution, plan_expansion)
from hipv.milp import solve_milp
from hipv.simplex import solve_lp
from hipv.synthetic import pv_unit, random_expansion_instance, region, unit


def geometric_oracle(d, ny):
    """Discount factors by explicit summation of the perpetuity tail."""
    head = [(1 + d) ** -y for y in range(1, ny)]
    tail = math.fsum((1 + d) ** -k for k in range(ny + 1, ny + 20_000))
    return head + [(1 + d) ** -ny + tail]


@pytest.mark.parametrize(
    ("d", "ny", "year", "expected"),
    [
        (0.05, 3, 1, 0.952381),
        (1.0, 1, 1, 1.0),
        (0.05, 2, 2, 19.047619),
    ],
)
def test_discount_examples(d, ny, year, expected):
    assert build_discount_schedule(PlanningHorizon(ny, d))[year] == pytest.approx(expected, abs=5e-7)


@given(d=st.floats(0.01, 0.2), ny=st.integers(1, 30))
def test_discount_matches_series_oracle(d, ny):
    got = build_discount_schedule(PlanningHorizon(ny, d)).d_y
    assert np.allclose(got, geometric_oracle(d, ny), rtol=1e-9, atol=0)


@given(d=st.floats(0.001, 0.5), ny=st.integers(2, 40))
def test_end_year_tail_positive(d, ny):
    D = build_discount_schedule(PlanningHorizon(ny, d))
    assert D[ny] > (1 + d) ** -ny
    assert D[ny] > D[ny - 1]
    assert all(v > 0 for v in D.d_y)


@pytest.mark.parametrize("d", [0.0, -0.1])
def test_discount_rejects_non_positive_rate(d):
    with pytest.raises(ValueError):
        build_discount_schedule(PlanningHorizon(2, d))


def one_coal_case(*, emission_coeff=0.0, emission_price=0.0, build_cost=0.0, land_cost=0.0,
                  count=1, build_limit=0):
    """One region, one coal unit, one year with d = 1 (so D_1 = 1), one block."""
    case = PlanningCase(
        PlanningHorizon(1, 1.0, 8760),
        (region("R", 1, build_cost=build_cost, land_cost=land_cost, build_limit=build_limit, voll=5000,
                validated_total=1000.0),),
        (unit("R_coal", "R", "coal", 1, p_max=200, count=count, heat_rate=10.0, fuel=2.0,
              emission_coeff=emission_coeff, emission_price=emission_price),
         pv_unit("R", 1, fixed_om=0.0)),
        (), (),
    )
    sched = schedule_from_arrays(["R"], [np.array([1.0])], [np.array([[100.0]])], [np.array([[0.5]])])
    return case, sched


def solution_for(case, sched, *, dispatch=0.0, built=0):
    return ExpansionSolution(
        pv_built={("R", 1): built},
        dispatch={("R_coal", 1, 0): dispatch, ("R_pv", 1, 0): 0.0},
        unserved={("R", 1, 0): 0.0},
        flows={},
    )


def test_zero_solution_costs_nothing():
    case, sched = one_coal_case(count=0)
    cb = evaluate_cost_breakdown(case, sched, solution_for(case, sched))
    assert all(getattr(cb, t) == 0 for t in COST_TERMS) and cb.total == 0


def test_fuel_term_hand_value():
    case, sched = one_coal_case()
    cb = evaluate_cost_breakdown(case, sched, solution_for(case, sched, dispatch=100.0))
    assert cb.fuel == pytest.approx(17_520_000.0, rel=1e-12)


@pytest.mark.parametrize(("basis", "expected"), [("per_mwh", 2_628_000.0), ("per_mbtu", 26_280_000.0)])
def test_emission_term_by_basis(basis, expected):
    case, sched = one_coal_case(emission_coeff=0.1, emission_price=30.0)
    cb = evaluate_cost_breakdown(case, sched, solution_for(case, sched, dispatch=100.0), basis)
    assert cb.emission == pytest.approx(expected, rel=1e-12)


def test_expansion_term_hand_value():
    case, sched = one_coal_case(build_cost=1.0e6, land_cost=2.0e5, build_limit=5)
    cb = evaluate_cost_breakdown(case, sched, solution_for(case, sched, built=3))
    assert cb.pv_expansion == pytest.approx(3.6e6, rel=1e-12)


def test_cost_breakdown_rejects_mismatched_solution():
    case, sched = one_coal_case()
    sol = solution_for(case, sched)
    sol.unserved[("R", 1, 7)] = 0.0
    with pytest.raises(ValueError, match="dimensions"):
        evaluate_cost_breakdown(case, sched, sol)


def test_row_counts(tiny3_case, tiny3_sched):
    spec = build_expansion_lp(tiny3_case, tiny3_sched)
    R, Y, S = 3, 2, 8
    fam = np.array(spec.families)
    assert np.sum(fam == "balance") == R * Y * S
    assert np.sum(fam == "adequacy") == R * Y * S
    assert np.sum(fam == "pv_output") == R * Y * S
    assert np.sum(fam == "rps") == 1  # only S in year 2
    assert np.sum(fam == "pv_cap") == R
    builds = [k for k in spec.keys if k[0] == "build"]
    assert len(builds) == R * Y
    assert all(spec.integer[spec.index[k]] for k in builds)


def test_relaxation_bounds_milp(tiny3_plan):
    sol, res, spec = tiny3_plan
    lp = solve_lp(spec)
    assert res.status == "optimal"
    assert lp.objective <= res.objective + 1e-9
    assert res.objective >= lp.objective - 1e-9


def test_tiny3_solution_audits_clean(tiny3_case, tiny3_sched, tiny3_plan):
    sol = tiny3_plan[0]
    report = audit_solution(tiny3_case, tiny3_sched, sol)
    assert report.passed, report.to_dict()
    assert set(report.residuals) == set(AUDIT_FAMILIES)


def test_tiny3_pv_capacity_cap(tiny3_case, tiny3_plan):
    sol = tiny3_plan[0]
    for r in tiny3_case.regions:
        assert sol.pv_capacity(tiny3_case, r.id) <= r.validated_dispatch_total + 1e-6


def test_tiny3_objective_consistency(tiny3_plan):
    sol, res, spec = tiny3_plan
    assert sol.cost_breakdown.total == pytest.approx(spec.objective(res.values), rel=1e-9)


def test_short_capacity_served_by_lost_load():
    case, sched = one_coal_case()
    short = replace(case, units=(replace(case.units[0], p_max=60.0), case.units[1]))
    sol, res, _ = plan_expansion(short, sched)
    assert res.status == "optimal"
    assert sol.unserved[("R", 1, 0)] == pytest.approx(40.0, abs=1e-9)
    assert sol.cost_breakdown.lost_load == pytest.approx(8760 * 5000 * 40.0, rel=1e-12)
    assert sol.pv_built[("R", 1)] == 0


def test_audit_flags_planted_interface_violation(tiny3_case, tiny3_sched, tiny3_plan):
    sol = tiny3_plan[0]
    flows = dict(sol.flows)
    key = ("NC", 1, 0)
    flows[key] = tiny3_case.interfaces[0].capacity + 5.0
    bad = replace(sol, flows=flows)
    report = audit_solution(tiny3_case, tiny3_sched, bad)
    assert report.residuals["interface_limit"] == pytest.approx(5.0)
    assert "interface_limit" in report.failing()


def test_zero_load_zero_solution_audits_to_zero():
    case, _ = one_coal_case()
    sched = schedule_from_arrays(["R"], [np.array([1.0])], [np.array([[0.0]])], [np.array([[0.0]])])
    report = audit_solution(case, sched, solution_for(case, sched))
    assert report.max_residual == 0.0


def test_zero_build_limit_builds_nothing(tiny3_case, tiny3_sched):
    regions = tuple(replace(r, pv_build_limit_by_year=(0.0, 0.0), rps_by_year=(0.0, 0.0))
                    for r in tiny3_case.regions)
    sol, res, _ = plan_expansion(replace(tiny3_case, regions=regions), tiny3_sched)
    assert res.status == "optimal"
    assert sum(sol.pv_built.values()) == 0
    assert all(v == 0 for (g, _, _), v in sol.dispatch.items() if g.endswith("_pv"))


def test_solution_json_round_trip(tiny3_plan):
    sol = tiny3_plan[0]
    again = ExpansionSolution.from_dict(sol.to_dict())
    assert again.pv_built == sol.pv_built and again.flows == sol.flows
    assert again.cost_breakdown.total == sol.cost_breakdown.total


def test_emission_price_monotone_pv(tiny3_case, tiny3_sched):
    built = []
    for factor in (0.25, 0.5, 1.0, 2.0, 4.0):
        units = tuple(replace(u, emission_price_by_year=tuple(p * factor for p in u.emission_price_by_year))
                      for u in tiny3_case.units)
        sol, res, _ = plan_expansion(replace(tiny3_case, units=units), tiny3_sched)
        assert res.status == "optimal"
        built.append(sum(sol.pv_built.values()))
    assert built == sorted(built)


@settings(max_examples=15)
@given(seed=st.integers(0, 10_000))
def test_objective_matches_breakdown_for_arbitrary_points(seed):
    rng = np.random.default_rng(seed)
    case, sched = random_expansion_instance(rng)
    spec = build_expansion_lp(case, sched)
    lo = np.where(np.isfinite(spec.lb), spec.lb, 0.0)
    hi = np.where(np.isfinite(spec.ub), spec.ub, lo + 100.0)
    x = rng.uniform(lo, hi)
    x[spec.integer] = np.round(x[spec.integer])
    # a flow pair carries the net flow in one direction only
    for k, j in spec.index.items():
        if k[0] == "flow-":
            x[j] = 0.0
    sol = extract_solution(case, sched, spec, x)
    assert sol.cost_breakdown.total == pytest.approx(spec.objective(x), rel=1e-9)


@settings(max_examples=10)
@given(seed=st.integers(0, 10_000))
def test_random_instances_solve_and_audit(seed):
    case, sched = random_expansion_instance(np.random.default_rng(seed))
    sol, res, spec = plan_expansion(case, sched)
    assert res.status == "optimal"
    assert audit_solution(case, sched, sol).passed
    assert sol.cost_breakdown.total == pytest.approx(res.objective, rel=1e-9)
    for r in case.regions:
        assert sol.pv_capacity(case, r.id) <= r.validated_dispatch_total + 1e-6


def test_rps_without_pv_group_rejected():
    case, sched = one_coal_case()
    no_pv = replace(case, units=case.units[:1],
                    regions=(replace(case.regions[0], rps_by_year=(0.1,)),))
    with pytest.raises(ValueError, match="RPS"):
        build_expansion_lp(no_pv, sched)


def test_interface_flow_follows_price_difference():
    """Cheap gas in A exports to expensive oil in B up to the interface limit."""
    case = PlanningCase(
        PlanningHorizon(1, 1.0, 8760),
        (region("A", 1, build_limit=0, validated_total=0.0), region("B", 1, build_limit=0, validated_total=0.0)),
        (unit("A_gas", "A", "gas", 1, p_max=100, count=5, heat_rate=7.0, fuel=3.0),
         unit("B_oil", "B", "oil", 1, p_max=100, count=5, heat_rate=11.0, fuel=9.0)),
        (Interface("AB", "A", "B", 120.0, 1.0, 500.0),), (),
    )
    sched = schedule_from_arrays(["A", "B"], [np.array([1.0])], [np.array([[100.0, 300.0]])],
                                 [np.array([[0.0, 0.0]])])
    sol, res, _ = plan_expansion(case, sched)
    assert res.status == "optimal"
    assert sol.flows[("AB", 1, 0)] == pytest.approx(120.0)
    assert sol.dispatch[("A_gas", 1, 0)] == pytest.approx(220.0)
