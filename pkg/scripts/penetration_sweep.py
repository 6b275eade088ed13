"""Plan PV on a bundle, then print frequency metrics over a penetration sweep."""

import argparse

from hipv import (Disturbance, ScenarioError, SimConfig, build_dynamic_case, compute_metrics, load_case_bundle,
                  partition_blocks, plan_expansion, select_block, simulate_contingency)
from hipv.scenario import base_dynamic_case


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("bundle")
    ap.add_argument("--levels", type=float, nargs="+", default=[0.05, 0.25, 0.45, 0.65])
    ap.add_argument("-k", type=int, default=8, help="blocks per year")
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--trip-fraction", type=float, default=0.003)
    args = ap.parse_args()

    case = load_case_bundle(args.bundle)
    sched = partition_blocks(case, args.k, args.seed)
    sol, res, _ = plan_expansion(case, sched)
    print(f"plan: {res.status}, objective {sol.objective:,.0f} $")
    block = select_block(sched, case, sol)
    trip = args.trip_fraction * base_dynamic_case(case).total_load
    cfg = SimConfig(disturbance=Disturbance(case.region_ids[0], trip, 1.0))
    print(f"block {block.year}:{block.block}, trip {trip:.2f} MW in {case.region_ids[0]}")
    print(f"{'level':>6} {'nadir Hz':>10} {'rocof mHz/s':>12} {'settle s':>9} {'settle Hz':>10}")
    for level in args.levels:
        try:
            dc = build_dynamic_case(case, sol, block, level)
        except ScenarioError as exc:
            print(f"{level:6.2f}  unbuildable: {exc}")
            continue
        m = compute_metrics(simulate_contingency(dc, cfg), cfg)
        print(f"{level:6.2f} {m.nadir:10.5f} {m.rocof:12.3f} {m.settling_time:9.2f} {m.settling_frequency:10.5f}")


if __name__ == "__main__":
    main()
