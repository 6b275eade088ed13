import csv
import json
import shutil

import pytest

from hipv.cli import SUMMARY_COLUMNS, SweepSpec, InputError, main, merge_config
from hipv.dynamics import SimConfig, Disturbance, compute_metrics, simulate_contingency
from hipv.scenario import base_dynamic_case
from hipv.data import load_case_bundle

from conftest import TINY3


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def tiny3_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("run") / "tiny3"
    assert main(["run-all", "--bundle", str(TINY3), "--out", str(out)]) == 0
    return out


def test_run_all_outputs(tiny3_run):
    manifest = json.loads((tiny3_run / "manifest.json").read_text())
    assert set(manifest["stages"]) == {"partition", "plan", "sweep"}
    assert manifest["seeds"] == {"partition": 7}
    summary = rows(tiny3_run / "sweep" / "summary.csv")
    assert list(summary[0]) == list(SUMMARY_COLUMNS)
    assert [float(r["level"]) for r in summary] == [0.05, 0.25, 0.45, 0.65]
    nadir = [float(r["nadir_hz"]) for r in summary]
    assert all(b < a for a, b in zip(nadir, nadir[1:]))
    audit = json.loads((tiny3_run / "plan" / "audit.json").read_text())
    assert audit["passed"]
    report = (tiny3_run / "report.md").read_text()
    for section in ("## Manifest", "## Cost breakdown", "## PV distribution by region", "## Penetration sweep"):
        assert section in report
    assert "Incomplete" not in report


def test_partition_k1_one_block_per_year(tmp_path):
    assert main(["partition", "--bundle", str(TINY3), "--out", str(tmp_path), "-k", "1"]) == 0
    blocks = rows(tmp_path / "partition" / "blocks.csv")
    years = [int(b["year"]) for b in blocks]
    assert sorted(set(years)) == [1, 2] and len(years) == 2
    assert all(float(b["duration_fraction"]) == 1.0 for b in blocks)


def test_partition_twice_identical(tmp_path):
    for name in ("a", "b"):
        assert main(["partition", "--bundle", str(TINY3), "--out", str(tmp_path / name),
                     "-k", "8", "--seed", "7"]) == 0
    for f in ("blocks.csv", "assignment.csv", "report.json"):
        assert (tmp_path / "a" / "partition" / f).read_bytes() == (tmp_path / "b" / "partition" / f).read_bytes()
    assert (tmp_path / "a" / "manifest.json").read_bytes() == (tmp_path / "b" / "manifest.json").read_bytes()


def test_missing_series_exit_2(tmp_path, capsys):
    bundle = tmp_path / "bundle"
    shutil.copytree(TINY3, bundle)
    (bundle / "series" / "C_2.csv").unlink()
    assert main(["partition", "--bundle", str(bundle), "--out", str(tmp_path / "run")]) == 2
    assert "C_2.csv" in capsys.readouterr().err


def test_missing_bundle_flag_exit_2(tmp_path, capsys):
    assert main(["partition", "--out", str(tmp_path)]) == 2
    assert "--bundle" in capsys.readouterr().err


def plan(bundle, out):
    assert main(["partition", "--bundle", str(bundle), "--out", str(out)]) == 0
    return main(["plan", "--bundle", str(bundle), "--out", str(out)])


def test_plan_zero_build_limit_builds_nothing(tmp_path, mini_bundle):
    out = tmp_path / "run"
    assert plan(mini_bundle(build_limit=0), out) == 0
    for r in rows(out / "plan" / "pv_by_region.csv"):
        assert r["built_y1"] == "0"
        assert r["within_cap"] == "true"
    costs = {r["term"]: float(r["present_value"]) for r in rows(out / "plan" / "costs.csv")}
    assert costs["pv_expansion"] == 0.0


def test_plan_large_reserve_uses_lost_load(tmp_path, mini_bundle):
    # 400 MW exceeds firm capacity plus imports but stays within what unserved power (<= load) can cover
    out = tmp_path / "run"
    assert plan(mini_bundle(reserve=400.0, build_limit=0), out) == 0
    costs = {r["term"]: float(r["present_value"]) for r in rows(out / "plan" / "costs.csv")}
    assert costs["lost_load"] > 0
    assert json.loads((out / "plan" / "audit.json").read_text())["passed"]


def test_plan_reserve_beyond_slack_exit_3(tmp_path, mini_bundle, capsys):
    assert plan(mini_bundle(reserve=2000.0, build_limit=0), tmp_path / "run") == 3
    assert "infeasible" in capsys.readouterr().err


def test_node_limit_from_config_exit_3(tmp_path, capsys):
    cfg = tmp_path / "limit.toml"
    cfg.write_text("[solver]\nmax_nodes = 1\n")
    out = tmp_path / "run"
    assert main(["partition", "--bundle", str(TINY3), "--out", str(out)]) == 0
    assert main(["plan", "--bundle", str(TINY3), "--out", str(out), "--config", str(cfg)]) == 3
    assert "node_limit" in capsys.readouterr().err
    assert (out / "plan" / "node_log.txt").is_file()


def sweep(tiny3_run, out, *extra):
    return main(["sweep", "--bundle", str(TINY3), "--out", str(out),
                 "--solution", str(tiny3_run / "plan" / "solution.json"),
                 "--blocks", str(tiny3_run / "partition"), *extra])


def test_sweep_level_zero_matches_base_case(tiny3_run, tmp_path):
    assert sweep(tiny3_run, tmp_path, "--levels", "0") == 0
    (row,) = rows(tmp_path / "sweep" / "summary.csv")
    case = load_case_bundle(TINY3)
    base = base_dynamic_case(case)
    cfg = SimConfig(disturbance=Disturbance("N", 0.003 * base.total_load, 1.0))
    m = compute_metrics(simulate_contingency(base, cfg), cfg)
    assert float(row["nadir_hz"]) == m.nadir
    assert float(row["rocof_mhz_s"]) == m.rocof
    assert float(row["pv_share"]) == base.pv_share


def test_sweep_unbuildable_level_recorded(tiny3_run, tmp_path):
    assert sweep(tiny3_run, tmp_path, "--levels", "0.05", "0.9") == 0
    ok, bad = rows(tmp_path / "sweep" / "summary.csv")
    assert ok["status"] == "ok"
    assert bad["status"] == "unbuildable" and float(bad["shortfall_mw"]) > 0
    assert not (tmp_path / "sweep" / "trace_0.90.csv").exists()


def test_sweep_refuses_foreign_solution(tiny3_run, tmp_path, mini_bundle, capsys):
    other = mini_bundle()
    code = main(["sweep", "--bundle", str(other), "--out", str(tmp_path),
                 "--solution", str(tiny3_run / "plan" / "solution.json")])
    assert code == 2
    assert "different bundle" in capsys.readouterr().err


def test_sweep_workers_do_not_change_results(tiny3_run, tmp_path):
    for name, workers in (("serial", "1"), ("pool", "2")):
        assert sweep(tiny3_run, tmp_path / name, "--levels", "0.05", "0.65", "--workers", workers) == 0
    for f in ("summary.csv", "trace_0.65.csv", "metrics_0.05.json"):
        assert (tmp_path / "serial" / "sweep" / f).read_bytes() == (tmp_path / "pool" / "sweep" / f).read_bytes()


def test_report_marks_missing_trace(tiny3_run, tmp_path):
    run = tmp_path / "copy"
    shutil.copytree(tiny3_run, run)
    (run / "sweep" / "trace_0.45.csv").unlink()
    assert main(["report", "--out", str(run)]) == 0
    text = (run / "report.md").read_text()
    assert "Incomplete: missing sweep/trace_0.45.csv" in text
    assert "## Cost breakdown" in text and "Incomplete: missing plan" not in text


def test_report_deterministic(tiny3_run, tmp_path):
    run = tmp_path / "copy"
    shutil.copytree(tiny3_run, run)
    assert main(["report", "--out", str(run)]) == 0
    assert (run / "report.md").read_bytes() == (tiny3_run / "report.md").read_bytes()


def test_report_on_missing_dir_exit_2(tmp_path):
    assert main(["report", "--out", str(tmp_path / "nope")]) == 2


@pytest.mark.parametrize("levels", [(), (0.5, 0.25), (0.1, 1.0), (-0.1,)])
def test_sweep_spec_validation(levels):
    with pytest.raises(InputError):
        SweepSpec(levels, "N", 10.0)


def test_config_layers_override_in_order():
    cfg = merge_config({"sim": {"dt": 0.01}}, {"sim": {"dt": 0.002}, "sweep": {"workers": 3}})
    assert cfg["sim"]["dt"] == 0.002 and cfg["sim"]["damping"] == 1.0
    assert cfg["sweep"]["workers"] == 3
    with pytest.raises(InputError):
        merge_config({"sim": 5})
