"""Command-line pipeline: partition -> plan -> sweep -> report.

Every stage writes under one run directory whose ``manifest.json`` records the
bundle hash, the effective configuration, seeds and the files each stage
produced. Outputs carry no timestamps, so identical inputs give identical bytes.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from . import __version__
from .blocks import partition_blocks, partition_report, read_blocks, write_blocks
from .data import BundleError, PlanningCase, bundle_hash, load_case_bundle, read_config
from .dynamics import (Disturbance, SimConfig, compute_metrics, flat_run, simulate_contingency,
                       write_metrics_json, write_trace_csv)
from .expansion import COST_TERMS, ExpansionSolution, audit_solution, plan_expansion
from .lp import write_mps
from .scenario import ScenarioError, base_dynamic_case, build_dynamic_case, select_block
from .simplex import SolverOptions

log = logging.getLogger("hipv")

EXIT_OK, EXIT_INTERNAL, EXIT_INPUT, EXIT_SOLVER = 0, 1, 2, 3

DEFAULT_CONFIG = {
    "partition": {"k_per_year": 8, "seed": 0},
    "expansion": {"emission_basis": "per_mbtu"},
    "solver": {},
    "sweep": {"levels": [0.05, 0.25, 0.45, 0.65], "trip_fraction": 0.003, "trip_region": "",
              "block": "peak_solar", "workers": 1},
    "sim": {"dt": 0.005, "flat_horizon": 20.0, "contingency_horizon": 60.0, "event_time": 1.0,
            "damping": 1.0, "deadband": 0.0, "ripple_tol": 0.001, "settle_band": 0.005,
            "rocof_window": 0.5, "average": "inertia"},
}


class InputError(Exception):
    """Bad user input; maps to exit code 2."""


class SolverFailure(Exception):
    """The planning MILP ended without a proven optimum; maps to exit code 3."""


@dataclass(frozen=True)
class SweepSpec:
    levels: tuple[float, ...]
    trip_region: str
    trip_mw: float
    block: str = "peak_solar"

    def __post_init__(self):
        lv = list(self.levels)
        if not lv:
            raise InputError("sweep needs at least one level")
        if any(not (0.0 <= v < 1.0) for v in lv):
            raise InputError("sweep levels must lie in [0, 1)")
        if any(b <= a for a, b in zip(lv, lv[1:])):
            raise InputError("sweep levels must be strictly increasing")


def level_tag(level: float) -> str:
    return f"{level:.2f}"


def merge_config(*layers: dict) -> dict:
    out = copy.deepcopy(DEFAULT_CONFIG)
    for layer in layers:
        for table, values in (layer or {}).items():
            if table == "horizon":
                continue
            if not isinstance(values, dict):
                raise InputError(f"config entry {table!r} must be a table")
            out.setdefault(table, {}).update(values)
    return out


def _dump_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


class Run:
    """Shared state for one invocation: bundle, config and run directory."""

    def __init__(self, args):
        if not args.bundle:
            raise InputError("--bundle is required")
        self.bundle = Path(args.bundle)
        self.out = Path(args.out)
        bundle_cfg = read_config(self.bundle / "config.toml") if (self.bundle / "config.toml").is_file() else {}
        user_cfg = read_config(args.config) if args.config else {}
        self.config = merge_config(bundle_cfg, user_cfg)
        if args.seed is not None:
            self.config["partition"]["seed"] = int(args.seed)
        self._case: PlanningCase | None = None
        self._hash: str | None = None

    @property
    def case(self) -> PlanningCase:
        if self._case is None:
            self._case = load_case_bundle(self.bundle)
        return self._case

    @property
    def bundle_hash(self) -> str:
        if self._hash is None:
            if not self.bundle.is_dir():
                raise BundleError(f"{self.bundle}: not a directory")
            self._hash = bundle_hash(self.bundle)
        return self._hash

    def stage_dir(self, name: str) -> Path:
        d = self.out / name
        d.mkdir(parents=True, exist_ok=True)
        return d

    def record(self, stage: str, files: list[Path]) -> None:
        path = self.out / "manifest.json"
        manifest = json.loads(path.read_text()) if path.is_file() else {}
        manifest.update({
            "tool": "hipv",
            "version": __version__,
            "bundle_hash": self.bundle_hash,
            "config": self.config,
            "seeds": {"partition": self.config["partition"]["seed"]},
        })
        stages = manifest.setdefault("stages", {})
        stages[stage] = sorted(p.relative_to(self.out).as_posix() for p in files)
        _dump_json(path, manifest)


def cmd_partition(run: Run, k: int | None = None) -> int:
    cfg = run.config["partition"]
    k = int(k if k is not None else cfg["k_per_year"])
    seed = int(cfg["seed"])
    run.config["partition"]["k_per_year"] = k
    case = run.case
    sched = partition_blocks(case, k_per_year=k, seed=seed)
    out = run.stage_dir("partition")
    write_blocks(sched, out)
    report = partition_report(sched, case)
    _dump_json(out / "report.json", report.to_dict())
    run.record("partition", [out / "blocks.csv", out / "assignment.csv", out / "report.json"])
    log.info("partition: %d blocks per year, seed %d", k, seed)
    return EXIT_OK


def _load_schedule(run: Run, blocks: str | None):
    path = Path(blocks) if blocks else run.out / "partition"
    try:
        return read_blocks(path)
    except FileNotFoundError as exc:
        raise InputError(f"{exc} (run the partition stage first or pass --blocks)") from None


def cmd_plan(run: Run, blocks: str | None = None) -> int:
    case = run.case
    sched = _load_schedule(run, blocks)
    if tuple(sched.region_ids) != case.region_ids or sched.years != list(case.years):
        raise InputError("block schedule does not match the bundle's regions or years")
    opts = SolverOptions.from_dict(run.config["solver"])
    basis = run.config["expansion"]["emission_basis"]
    sol, res, spec = plan_expansion(case, sched, opts, basis)
    out = run.stage_dir("plan")
    files = [out / "solution.json", out / "model.mps", out / "node_log.txt"]
    write_mps(spec, out / "model.mps")
    (out / "node_log.txt").write_text("\n".join(res.node_log) + "\n")
    doc = sol.to_dict()
    doc["bundle_hash"] = run.bundle_hash
    _dump_json(out / "solution.json", doc)
    if res.incumbent is not None:
        audit = audit_solution(case, sched, sol)
        _dump_json(out / "audit.json", audit.to_dict())
        with (out / "costs.csv").open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["term", "present_value"])
            for t in COST_TERMS:
                w.writerow([t, repr(getattr(sol.cost_breakdown, t))])
            w.writerow(["total", repr(sol.cost_breakdown.total)])
        with (out / "pv_by_region.csv").open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["region", "existing_mw"] + [f"built_y{y}" for y in case.years]
                       + ["final_capacity_mw", "validated_dispatch_total", "within_cap"])
            for rid in case.region_ids:
                pv = case.pv_group(rid)
                existing = pv.capacity if pv is not None else 0.0
                cap = sol.pv_capacity(case, rid)
                limit = case.region(rid).validated_dispatch_total
                w.writerow([rid, repr(float(existing))]
                           + [sol.pv_built.get((rid, y), 0) for y in case.years]
                           + [repr(float(cap)), repr(float(limit)), str(cap <= limit + 1e-6).lower()])
        files += [out / "audit.json", out / "costs.csv", out / "pv_by_region.csv"]
    run.record("plan", files)
    if res.status != "optimal":
        raise SolverFailure(f"planning MILP ended with status {res.status!r}")
    log.info("plan: objective %.6g, %d nodes", sol.objective, sol.nodes)
    return EXIT_OK


def _sim_configs(sim: dict, disturbance: Disturbance) -> tuple[SimConfig, SimConfig]:
    common = dict(dt=float(sim["dt"]), damping=float(sim["damping"]), deadband=float(sim["deadband"]),
                  ripple_tol=float(sim["ripple_tol"]), settle_band=float(sim["settle_band"]),
                  rocof_window=float(sim["rocof_window"]), average=str(sim["average"]))
    flat = SimConfig(horizon=float(sim["flat_horizon"]), **common)
    cont = SimConfig(horizon=float(sim["contingency_horizon"]), disturbance=disturbance, **common)
    return flat, cont


def _run_level(case, sol, block, level, flat_cfg, cont_cfg):
    """Build and simulate one penetration level; returns (row, scenario, trace, metrics)."""
    try:
        dc = build_dynamic_case(case, sol, block, level)
    except ScenarioError as exc:
        short = exc.shortfall_mw if exc.shortfall_mw is not None else math.nan
        return {"level": level, "status": "unbuildable", "shortfall_mw": short, "message": str(exc)}, None, None, None
    flat = flat_run(dc, flat_cfg)
    trace = simulate_contingency(dc, cont_cfg)
    m = compute_metrics(trace, cont_cfg)
    row = {"level": level, "status": "ok", "pv_share": dc.pv_share, "stored_energy_mws": dc.stored_energy,
           "flat_ripple_hz": flat.ripple, "flat_pass": flat.passed, "nadir_hz": m.nadir,
           "rocof_mhz_s": m.rocof, "settling_time_s": m.settling_time, "settling_frequency_hz": m.settling_frequency,
           "shortfall_mw": 0.0, "message": ""}
    return row, dc, trace, m


SUMMARY_COLUMNS = ("level", "status", "pv_share", "stored_energy_mws", "flat_ripple_hz", "flat_pass",
                   "nadir_hz", "rocof_mhz_s", "settling_time_s", "settling_frequency_hz", "shortfall_mw",
                   "message")


def _cell(v) -> str:
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, float):
        return repr(v)
    return "" if v is None else str(v)


def sweep_spec_from_config(run: Run, levels=None) -> SweepSpec:
    sw = run.config["sweep"]
    case = run.case
    region = sw.get("trip_region") or case.region_ids[0]
    if region not in case.region_ids:
        raise InputError(f"unknown trip region {region!r}")
    if "trip_mw" in sw:
        trip = float(sw["trip_mw"])
    else:
        trip = float(sw["trip_fraction"]) * base_dynamic_case(case).total_load
    return SweepSpec(tuple(float(v) for v in (levels if levels is not None else sw["levels"])),
                     region, trip, str(sw.get("block", "peak_solar")))


def cmd_sweep(run: Run, solution: str | None = None, blocks: str | None = None, levels=None,
              workers: int | None = None) -> int:
    sol_path = Path(solution) if solution else run.out / "plan" / "solution.json"
    if not sol_path.is_file():
        raise InputError(f"{sol_path}: missing solution file")
    doc = json.loads(sol_path.read_text())
    if doc.get("bundle_hash") != run.bundle_hash:
        raise InputError(f"{sol_path}: solution was computed for a different bundle")
    sol = ExpansionSolution.from_dict(doc)
    case = run.case
    sched = _load_schedule(run, blocks)
    spec = sweep_spec_from_config(run, levels)
    run.config["sweep"]["levels"] = list(spec.levels)
    block = select_block(sched, case, sol, spec.block)
    sim = run.config["sim"]
    disturbance = Disturbance(spec.trip_region, spec.trip_mw, float(sim["event_time"]))
    flat_cfg, cont_cfg = _sim_configs(sim, disturbance)
    workers = int(workers if workers is not None else run.config["sweep"].get("workers", 1))

    jobs = [(case, sol, block, lv, flat_cfg, cont_cfg) for lv in spec.levels]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_level, *zip(*jobs)))
    else:
        results = [_run_level(*j) for j in jobs]

    out = run.stage_dir("sweep")
    files = []
    rows = []
    for row, dc, trace, m in results:
        tag = level_tag(row["level"])
        rows.append(row)
        if dc is None:
            log.warning("level %s unbuildable: %s", tag, row["message"])
            continue
        p = out / f"scenario_{tag}.json"
        p.write_text(dc.to_json())
        files.append(p)
        files.append(write_trace_csv(trace, out / f"trace_{tag}.csv"))
        files.append(write_metrics_json(m, out / f"metrics_{tag}.json",
                                        {"level": row["level"], "flat_ripple_hz": row["flat_ripple_hz"],
                                         "flat_pass": row["flat_pass"]}))
    rows.sort(key=lambda r: r["level"])
    with (out / "summary.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        for r in rows:
            w.writerow([_cell(r.get(c)) for c in SUMMARY_COLUMNS])
    files.append(out / "summary.csv")
    _dump_json(out / "sweep.json", {"block": [block.year, block.block], "trip_region": spec.trip_region,
                                    "trip_mw": spec.trip_mw, "levels": list(spec.levels)})
    files.append(out / "sweep.json")
    run.record("sweep", files)
    return EXIT_OK


def _read_csv_rows(path: Path) -> list[dict]:
    with path.open(newline="") as fh:
        return list(csv.DictReader(fh))


def _md_table(header, rows) -> list[str]:
    lines = ["| " + " | ".join(header) + " |", "|" + "---|" * len(header)]
    lines += ["| " + " | ".join(str(c) for c in r) + " |" for r in rows]
    return lines


def _num(text: str, fmt: str) -> str:
    try:
        return format(float(text), fmt)
    except ValueError:
        return text or "-"


def build_report(run_dir: Path) -> str:
    """Markdown report over whatever stage outputs exist; gaps are named."""
    lines = ["# Run report", ""]

    lines += ["## Manifest", ""]
    mpath = run_dir / "manifest.json"
    if mpath.is_file():
        m = json.loads(mpath.read_text())
        lines += [f"- tool: {m.get('tool')} {m.get('version')}",
                  f"- bundle hash: `{m.get('bundle_hash')}`",
                  f"- seeds: {json.dumps(m.get('seeds', {}), sort_keys=True)}",
                  f"- stages: {', '.join(sorted(m.get('stages', {})))}"]
    else:
        lines.append("Incomplete: missing manifest.json")
    lines.append("")

    lines += ["## Cost breakdown", ""]
    cpath = run_dir / "plan" / "costs.csv"
    if cpath.is_file():
        rows = [(r["term"], _num(r["present_value"], ",.2f")) for r in _read_csv_rows(cpath)]
        lines += _md_table(("term", "present value ($)"), rows)
        apath = run_dir / "plan" / "audit.json"
        if apath.is_file():
            audit = json.loads(apath.read_text())
            worst = max(audit["residuals"].values()) if audit["residuals"] else 0.0
            lines += ["", f"Constraint audit: {'pass' if audit['passed'] else 'FAIL'} "
                          f"(max residual {worst:.3g})"]
    else:
        lines.append("Incomplete: missing plan/costs.csv")
    lines.append("")

    lines += ["## PV distribution by region", ""]
    ppath = run_dir / "plan" / "pv_by_region.csv"
    if ppath.is_file():
        prow = _read_csv_rows(ppath)
        built_cols = [c for c in prow[0] if c.startswith("built_y")] if prow else []
        header = ("region", "existing MW", *built_cols, "final MW", "cap MW", "within cap")
        rows = [(r["region"], _num(r["existing_mw"], ".1f"), *(r[c] for c in built_cols),
                 _num(r["final_capacity_mw"], ".1f"), _num(r["validated_dispatch_total"], ".1f"),
                 r["within_cap"]) for r in prow]
        lines += _md_table(header, rows)
    else:
        lines.append("Incomplete: missing plan/pv_by_region.csv")
    lines.append("")

    lines += ["## Penetration sweep", ""]
    spath = run_dir / "sweep" / "summary.csv"
    if spath.is_file():
        srows = _read_csv_rows(spath)
        missing = []
        for r in srows:
            if r["status"] != "ok":
                continue
            tag = level_tag(float(r["level"]))
            for name in (f"trace_{tag}.csv", f"metrics_{tag}.json", f"scenario_{tag}.json"):
                if not (run_dir / "sweep" / name).is_file():
                    missing.append(f"sweep/{name}")
        header = ("level", "status", "PV share", "nadir Hz", "ROCOF mHz/s", "settling s", "settling Hz",
                  "flat ripple Hz", "shortfall MW")
        rows = [(r["level"], r["status"], _num(r["pv_share"], ".4f"), _num(r["nadir_hz"], ".5f"),
                 _num(r["rocof_mhz_s"], ".3f"), _num(r["settling_time_s"], ".2f"),
                 _num(r["settling_frequency_hz"], ".5f"), _num(r["flat_ripple_hz"], ".2e"),
                 _num(r["shortfall_mw"], ".1f")) for r in srows]
        lines += _md_table(header, rows)
        if missing:
            lines += ["", "Incomplete: missing " + ", ".join(missing)]
    else:
        lines.append("Incomplete: missing sweep/summary.csv")
    lines.append("")
    return "\n".join(lines)


def cmd_report(run_dir: Path) -> int:
    if not run_dir.is_dir():
        raise InputError(f"{run_dir}: run directory does not exist")
    (run_dir / "report.md").write_text(build_report(run_dir))
    return EXIT_OK


def _add_common(p: argparse.ArgumentParser, suppress: bool) -> None:
    default = argparse.SUPPRESS if suppress else None
    p.add_argument("--bundle", default=default, help="case bundle directory")
    p.add_argument("--out", default=argparse.SUPPRESS if suppress else "run", help="run directory")
    p.add_argument("--seed", type=int, default=default, help="partition seed (overrides config)")
    p.add_argument("--config", default=default, help="TOML file overriding the bundle config")
    p.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS if suppress else False)


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hipv", description=__doc__.splitlines()[0])
    _add_common(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("partition", help="cluster hours into time blocks")
    _add_common(p, suppress=True)
    p.add_argument("-k", type=int, default=None, help="blocks per year")

    p = sub.add_parser("plan", help="solve the PV expansion MILP")
    _add_common(p, suppress=True)
    p.add_argument("--blocks", default=None, help="directory with blocks.csv (default: <out>/partition)")

    p = sub.add_parser("sweep", help="build and simulate penetration scenarios")
    _add_common(p, suppress=True)
    p.add_argument("--solution", default=None, help="solution.json (default: <out>/plan/solution.json)")
    p.add_argument("--blocks", default=None)
    p.add_argument("--levels", type=float, nargs="+", default=None)
    p.add_argument("--workers", type=int, default=None)

    p = sub.add_parser("report", help="write report.md for a run directory")
    _add_common(p, suppress=True)

    p = sub.add_parser("run-all", help="partition, plan, sweep and report")
    _add_common(p, suppress=True)
    p.add_argument("-k", type=int, default=None)
    p.add_argument("--workers", type=int, default=None)
    return parser


def dispatch(args) -> int:
    if args.command == "report":
        return cmd_report(Path(args.out))
    run = Run(args)
    run.out.mkdir(parents=True, exist_ok=True)
    if args.command == "partition":
        return cmd_partition(run, args.k)
    if args.command == "plan":
        return cmd_plan(run, args.blocks)
    if args.command == "sweep":
        return cmd_sweep(run, args.solution, args.blocks, args.levels, args.workers)
    if args.command == "run-all":
        cmd_partition(run, args.k)
        cmd_plan(run)
        cmd_sweep(run, workers=args.workers)
        return cmd_report(run.out)
    raise InputError(f"unknown command {args.command!r}")


def main(argv: list[str] | None = None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return dispatch(args)
    except (BundleError, InputError) as exc:
        print(f"hipv: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except SolverFailure as exc:
        print(f"hipv: solver: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except Exception as exc:  # noqa: BLE001
        log.debug("internal error", exc_info=True)
        print(f"hipv: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
