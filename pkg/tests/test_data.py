import dataclasses

import numpy as np
import pytest

from hipv.data import (BundleError, HourlySeries, load_case_bundle, replace, validate_case,
                       write_case_bundle, bundle_hash)
from hipv.synthetic import pv_unit

from conftest import TINY3, mini_case


def test_tiny3_counts(tiny3_case):
    assert (len(tiny3_case.regions), len(tiny3_case.units), len(tiny3_case.interfaces)) == (3, 6, 2)


def test_shipped_fixture_is_valid(tiny3_case):
    assert validate_case(tiny3_case).ok


def test_round_trip_identity(tmp_path, tiny3_case):
    write_case_bundle(tiny3_case, tmp_path / "copy")
    again = load_case_bundle(tmp_path / "copy")
    assert again == tiny3_case
    for a, b in zip(again.units, tiny3_case.units):
        for f in dataclasses.fields(a):
            assert getattr(a, f.name) == getattr(b, f.name), f.name


def test_zero_interfaces_bundle(tmp_path):
    case = mini_case(two_regions=False)
    again = load_case_bundle(write_case_bundle(case, tmp_path / "one"))
    assert again.interfaces == ()
    assert validate_case(again).ok


def test_dangling_region_names_id(tmp_path):
    root = write_case_bundle(mini_case(), tmp_path / "b")
    text = (root / "units.csv").read_text().replace("A_gas,A,", "A_gas,X,")
    (root / "units.csv").write_text(text)
    with pytest.raises(BundleError, match=r"units\.csv row \d+.*'X'"):
        load_case_bundle(root)


def test_missing_series_file_named(tmp_path):
    root = write_case_bundle(mini_case(), tmp_path / "b")
    (root / "series" / "B_1.csv").unlink()
    with pytest.raises(BundleError, match="B_1.csv"):
        load_case_bundle(root)


def test_unparseable_row_reported(tmp_path):
    root = write_case_bundle(mini_case(), tmp_path / "b")
    text = (root / "regions.csv").read_text().splitlines()
    text[1] = text[1].replace(",10000,", ",lots,")
    (root / "regions.csv").write_text("\n".join(text) + "\n")
    with pytest.raises(BundleError, match=r"regions\.csv row 2"):
        load_case_bundle(root)


def test_solar_cf_out_of_bounds_single_violation(tiny3_case):
    s = tiny3_case.series[0]
    cf = np.array(s.solar_cf)
    cf[5] = 1.2
    bad = replace(tiny3_case, series=(HourlySeries(s.region, s.year, s.load_mw, cf),) + tiny3_case.series[1:])
    report = validate_case(bad)
    assert len(report) == 1
    assert "bounds [0,1]" in str(report)


def test_pv_inertia_violation(tiny3_case):
    units = tuple(replace(u, inertia_h=3.0) if u.id == "N_pv" else u for u in tiny3_case.units)
    report = validate_case(replace(tiny3_case, units=units))
    assert [v.message for v in report] == ["inertia_h must be 0 for pv"]


@pytest.mark.parametrize(
    ("field", "value", "fragment"),
    [
        ("forced_outage_rate", 1.5, "forced_outage_rate"),
        ("governor_droop", 0.0, "governor_droop"),
        ("p_max", 0.0, "p_max"),
        ("existing_count", -1, "existing_count"),
    ],
)
def test_unit_invariants(tiny3_case, field, value, fragment):
    units = tuple(replace(u, **{field: value}) if u.id == "C_gas" else u for u in tiny3_case.units)
    report = validate_case(replace(tiny3_case, units=units))
    assert not report.ok
    assert any(fragment in v.path for v in report)


def test_two_pv_groups_rejected(tiny3_case):
    extra = replace(pv_unit("N", 2), id="N_pv2")
    report = validate_case(replace(tiny3_case, units=tiny3_case.units + (extra,)))
    assert "more than one pv unit group" in str(report)


def test_per_year_values_broadcast_and_split(tmp_path):
    root = write_case_bundle(mini_case(n_years=2, hours=24), tmp_path / "b")
    rows = (root / "units.csv").read_text().splitlines()
    rows[1] = rows[1].replace(",4,", ",4;6,", 1)
    (root / "units.csv").write_text("\n".join(rows) + "\n")
    case = load_case_bundle(root)
    assert case.units[0].fuel_price_by_year == (4.0, 6.0)
    assert case.units[2].fuel_price_by_year == (4.0, 4.0)


def test_bundle_hash_tracks_content(tmp_path):
    root = write_case_bundle(mini_case(), tmp_path / "b")
    h = bundle_hash(root)
    assert h == bundle_hash(root)
    (root / "interfaces.csv").write_text((root / "interfaces.csv").read_text().replace("150", "151"))
    assert bundle_hash(root) != h


def test_maintenance_factor_broadcast(tiny3_case):
    r = tiny3_case.region("N")
    assert r.maintenance_factor(0) == r.maintenance_factor(7) == 0.5


def test_fixture_generator_reproduces_shipped_bundle(tmp_path):
    from hipv.synthetic import TINY3_CONFIG, tiny3_case

    root = write_case_bundle(tiny3_case(), tmp_path / "tiny3", TINY3_CONFIG)
    assert bundle_hash(root) == bundle_hash(TINY3)
