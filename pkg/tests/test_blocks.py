import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from hipv.blocks import kmeans_path, partition_blocks, partition_report, read_blocks, write_blocks
from hipv.data import HourlySeries, PlanningHorizon, replace

from conftest import mini_case


def one_region_case(load, cf):
    case = mini_case(hours=len(load), two_regions=False)
    return replace(case, horizon=PlanningHorizon(1, 0.06, len(load)),
                   series=(HourlySeries("A", 1, np.asarray(load, float), np.asarray(cf, float)),))


def test_constant_series_single_block():
    sched = partition_blocks(one_region_case([100.0] * 24, [0.2] * 24), k_per_year=1)
    (b,) = sched.blocks
    got = (b.duration_fraction, b.load_by_region["A"], b.pv_cf_by_region["A"])
    assert got == pytest.approx((1.0, 100.0, 0.2), rel=1e-12)


def test_day_night_two_blocks():
    load = [50.0] * 12 + [100.0] * 12
    cf = [0.0] * 12 + [0.8] * 12
    case = one_region_case(load, cf)
    sched = partition_blocks(case, k_per_year=2, seed=3)
    got = [(b.duration_fraction, b.load_by_region["A"], b.pv_cf_by_region["A"]) for b in sched.blocks]
    assert np.allclose(got, [(0.5, 50.0, 0.0), (0.5, 100.0, 0.8)], rtol=1e-12, atol=0)
    assert partition_report(sched, case).years[0].zero_cf_blocks == 1


def _brute_force_ssd(points, k):
    """Best k-partition SSD by exhaustive labelling (tiny inputs only)."""
    best = math.inf
    for labels in itertools.product(range(k), repeat=len(points)):
        labels = np.array(labels)
        if len(set(labels)) < k:
            continue
        ssd = sum(((points[labels == c] - points[labels == c].mean(axis=0)) ** 2).sum() for c in range(k))
        best = min(best, ssd)
    return best


@pytest.mark.parametrize("seed", range(4))
def test_kmeans_two_clouds_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    pts = np.vstack([rng.normal(0, 0.05, (4, 2)), rng.normal(1, 0.05, (4, 2))])
    (_, s1), (_, s2) = kmeans_path(pts, 2, np.random.default_rng(seed))
    assert s2 == pytest.approx(_brute_force_ssd(pts, 2), rel=1e-12)
    assert s1 >= s2


def test_k1_levels_are_plain_means(tiny3_case):
    sched = partition_blocks(tiny3_case, k_per_year=1)
    for y in tiny3_case.years:
        (b,) = sched.year_blocks(y)
        assert b.duration_fraction == 1.0
        for r in tiny3_case.region_ids:
            s = tiny3_case.series_for(r, y)
            assert b.load_by_region[r] == pytest.approx(np.mean(s.load_mw), rel=1e-14)
            assert b.pv_cf_by_region[r] == pytest.approx(np.mean(s.solar_cf), rel=1e-14)
    rep = partition_report(sched, tiny3_case)
    assert all(y.energy_error_rel < 1e-12 for y in rep.years)


def test_tiny3_partition_invariants(tiny3_case, tiny3_sched):
    rep = partition_report(tiny3_sched, tiny3_case)
    for y in rep.years:
        assert y.n_blocks == 8
        assert y.duration_sum == pytest.approx(1.0, abs=1e-9)
        assert y.energy_error_rel < 1e-6
        assert y.zero_cf_blocks >= 1


def test_dark_hours_land_in_dark_blocks(tiny3_case, tiny3_sched):
    for y in tiny3_case.years:
        cf = np.column_stack([tiny3_case.series_for(r, y).solar_cf for r in tiny3_case.region_ids])
        dark_hours = np.all(cf == 0, axis=1)
        block_cf = tiny3_sched.cfs(y)
        assert np.all(block_cf[tiny3_sched.assignment[y][dark_hours]] == 0)


def test_blocks_ordered_by_system_load(tiny3_sched):
    for y in tiny3_sched.years:
        totals = tiny3_sched.loads(y).sum(axis=1)
        assert np.all(np.diff(totals) >= 0)


def test_ssd_non_increasing_in_k():
    case = mini_case(hours=240, seed=5)
    ssd = [partition_blocks(case, k, seed=2).ssd[1] for k in range(1, 9)]
    assert all(b <= a + 1e-12 for a, b in zip(ssd, ssd[1:]))


@given(seed=st.integers(0, 2**16), k=st.integers(1, 6), hours=st.integers(12, 72))
def test_energy_and_duration_preserved(seed, k, hours):
    case = mini_case(hours=hours, seed=seed)
    sched = partition_blocks(case, k, seed=seed)
    for y in case.years:
        assert math.fsum(sched.durations(y)) == pytest.approx(1.0, abs=1e-9)
        assert sched.n_blocks(y) <= k
        assert np.all(sched.durations(y) > 0)
    for stats in partition_report(sched, case).years:
        assert stats.energy_error_rel < 1e-9


def test_deterministic_given_seed():
    case = mini_case(hours=120, seed=9)
    assert partition_blocks(case, 4, seed=11) == partition_blocks(case, 4, seed=11)


def test_fewer_blocks_when_few_distinct_hours():
    sched = partition_blocks(one_region_case([10.0, 20.0] * 6, [0.0, 0.5] * 6), k_per_year=5)
    assert len(sched.blocks) == 2


@pytest.mark.parametrize("k", [0, -1])
def test_bad_k_rejected(k):
    with pytest.raises(ValueError):
        partition_blocks(mini_case(hours=24), k)


def test_empty_series_rejected():
    with pytest.raises(ValueError, match="empty"):
        partition_blocks(one_region_case([], []), 1)


def test_write_read_round_trip(tmp_path):
    case = mini_case(hours=72, n_years=2)
    sched = partition_blocks(case, 3, seed=4)
    write_blocks(sched, tmp_path)
    assert read_blocks(tmp_path) == sched


def test_report_rejects_foreign_schedule(tiny3_sched):
    with pytest.raises(ValueError):
        partition_report(tiny3_sched, mini_case())
