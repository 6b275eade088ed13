"""Load-solar time-block partition of hourly series.

Each year's hours are clustered into representative blocks. The clustering
atoms are hour-vectors holding every region's load and solar capacity factor,
each scaled to [0, 1] by its yearly min/max. Hours that are dark in every
region and hours with some sun are clustered as separate strata (when both
exist and ``k >= 2``), so night hours always land in zero-PV blocks.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import PlanningCase

MAX_ITER = 100


@dataclass(frozen=True)
class TimeBlock:
    year: int
    block: int
    duration_fraction: float
    load_by_region: dict[str, float]
    pv_cf_by_region: dict[str, float]


@dataclass(frozen=True, eq=False)
class BlockSchedule:
    region_ids: tuple[str, ...]
    blocks: tuple[TimeBlock, ...]
    # year -> block index for every hour of that year
    assignment: dict[int, np.ndarray]
    # year -> within-block sum of squared deviations in scaled feature space
    ssd: dict[int, float] = field(default_factory=dict)

    @property
    def years(self) -> list[int]:
        return sorted({b.year for b in self.blocks})

    def year_blocks(self, year: int) -> list[TimeBlock]:
        return [b for b in self.blocks if b.year == year]

    def n_blocks(self, year: int) -> int:
        return len(self.year_blocks(year))

    def durations(self, year: int) -> np.ndarray:
        return np.array([b.duration_fraction for b in self.year_blocks(year)])

    def loads(self, year: int) -> np.ndarray:
        """Array (blocks, regions) of block load levels."""
        return np.array([[b.load_by_region[r] for r in self.region_ids] for b in self.year_blocks(year)])

    def cfs(self, year: int) -> np.ndarray:
        return np.array([[b.pv_cf_by_region[r] for r in self.region_ids] for b in self.year_blocks(year)])

    def __eq__(self, other):
        if not isinstance(other, BlockSchedule):
            return NotImplemented
        return (
            self.region_ids == other.region_ids
            and self.blocks == other.blocks
            and self.assignment.keys() == other.assignment.keys()
            and all(np.array_equal(self.assignment[y], other.assignment[y]) for y in self.assignment)
        )


def _scale(x: np.ndarray) -> np.ndarray:
    lo, hi = x.min(axis=0), x.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    return np.where(hi > lo, (x - lo) / span, 0.0)


def _sq_dist(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    return ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)


def _farthest_point_order(points: np.ndarray, k: int, rng: np.random.Generator) -> list[int]:
    order = [int(rng.integers(len(points)))]
    dmin = ((points - points[order[0]]) ** 2).sum(axis=1)
    while len(order) < k:
        nxt = int(np.argmax(dmin))
        order.append(nxt)
        dmin = np.minimum(dmin, ((points - points[nxt]) ** 2).sum(axis=1))
    return order


def _lloyd(points: np.ndarray, centers: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
    centers = centers.copy()
    k = len(centers)
    labels = None
    for _ in range(MAX_ITER):
        d = _sq_dist(points, centers)
        new = np.argmin(d, axis=1)
        # an empty cluster takes the worst-served point of a cluster with spare members
        for c in range(k):
            if not np.any(new == c):
                counts = np.bincount(new, minlength=k)
                own = d[np.arange(len(points)), new]
                own = np.where(counts[new] > 1, own, -1.0)
                p = int(np.argmax(own))
                new[p] = c
                centers[c] = points[p]
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        centers = np.array([points[labels == c].mean(axis=0) for c in range(k)])
    ssd = float(((points - centers[labels]) ** 2).sum())
    return labels, centers, ssd


def kmeans_path(points: np.ndarray, kmax: int, rng: np.random.Generator) -> list[tuple[np.ndarray, float]]:
    """Clusterings for k = 1..min(kmax, distinct points) with non-increasing SSD.

    Each k keeps the better of a fresh farthest-point start and a warm start
    from the (k-1) solution plus its worst-served point.
    """
    kmax = min(kmax, len(np.unique(points, axis=0)))
    order = _farthest_point_order(points, kmax, rng)
    path = []
    prev_centers = None
    for k in range(1, kmax + 1):
        best = _lloyd(points, points[order[:k]])
        if prev_centers is not None:
            d = _sq_dist(points, prev_centers).min(axis=1)
            warm = np.vstack([prev_centers, points[int(np.argmax(d))]])
            cand = _lloyd(points, warm)
            if cand[2] < best[2]:
                best = cand
        labels, prev_centers, ssd = best
        path.append((labels, ssd))
    return path


def _cluster_year(features: np.ndarray, dark: np.ndarray, k: int, seed: int, year: int):
    strata = [np.flatnonzero(~dark), np.flatnonzero(dark)]
    if k < 2 or any(len(s) == 0 for s in strata):
        strata = [np.arange(len(features))]
    paths = []
    for i, idx in enumerate(strata):
        rng = np.random.default_rng(np.random.SeedSequence([seed, year, i]))
        paths.append(kmeans_path(features[idx], k, rng))
    if len(paths) == 1:
        j = min(k, len(paths[0]))
        split = (j,)
    else:
        best = None
        for j0 in range(1, len(paths[0]) + 1):
            j1 = min(k - j0, len(paths[1]))
            if j1 < 1:
                continue
            key = (paths[0][j0 - 1][1] + paths[1][j1 - 1][1], -(j0 + j1))
            if best is None or key < best[0]:
                best = (key, (j0, j1))
        split = best[1]
    labels = np.empty(len(features), dtype=int)
    offset = 0
    ssd = 0.0
    for idx, path, j in zip(strata, paths, split):
        lab, s = path[j - 1]
        labels[idx] = lab + offset
        offset += j
        ssd += s
    return labels, offset, ssd


def partition_blocks(case: PlanningCase, k_per_year: int = 8, seed: int = 0) -> BlockSchedule:
    """Partition each year into ``k_per_year`` representative blocks.

    Block levels are hour-weighted means of the raw series, so energy totals
    are preserved. Blocks are numbered by ascending system load (then solar).
    """
    if k_per_year < 1:
        raise ValueError("k_per_year must be >= 1")
    rids = case.region_ids
    T = case.horizon.hours_per_year
    blocks = []
    assignment = {}
    ssd = {}
    for y in case.years:
        try:
            load = np.column_stack([case.series_for(r, y).load_mw for r in rids])
            cf = np.column_stack([case.series_for(r, y).solar_cf for r in rids])
        except KeyError as exc:
            raise ValueError(f"missing series for {exc.args[0]}") from None
        if load.shape[0] == 0:
            raise ValueError(f"empty series for year {y}")
        if load.shape[0] != T:
            raise ValueError(f"year {y}: series length {load.shape[0]} != hours_per_year {T}")
        features = np.hstack([_scale(load), _scale(cf)])
        dark = np.all(cf == 0, axis=1)
        labels, k, ssd[y] = _cluster_year(features, dark, k_per_year, seed, y)

        counts = np.bincount(labels, minlength=k)
        mean_load = np.array([load[labels == c].mean(axis=0) for c in range(k)])
        mean_cf = np.array([cf[labels == c].mean(axis=0) for c in range(k)])
        first = np.array([np.flatnonzero(labels == c)[0] for c in range(k)])
        order = sorted(range(k), key=lambda c: (mean_load[c].sum(), mean_cf[c].sum(), first[c]))
        relabel = np.empty(k, dtype=int)
        relabel[order] = np.arange(k)
        assignment[y] = relabel[labels]
        for s, c in enumerate(order):
            blocks.append(TimeBlock(
                year=y,
                block=s,
                duration_fraction=float(counts[c] / T),
                load_by_region={r: float(mean_load[c, i]) for i, r in enumerate(rids)},
                pv_cf_by_region={r: float(mean_cf[c, i]) for i, r in enumerate(rids)},
            ))
    return BlockSchedule(rids, tuple(blocks), assignment, ssd)


@dataclass
class YearPartitionStats:
    year: int
    n_blocks: int
    duration_sum: float
    energy_error_mwh: float  # max over regions of |block energy - hourly energy|
    energy_error_rel: float
    zero_cf_blocks: int


@dataclass
class PartitionReport:
    years: list[YearPartitionStats]

    def to_dict(self) -> dict:
        return {"years": [vars(y) for y in self.years]}


def partition_report(sched: BlockSchedule, case: PlanningCase) -> PartitionReport:
    if tuple(sched.region_ids) != case.region_ids:
        raise ValueError("schedule regions do not match case")
    if sched.years != list(case.years):
        raise ValueError("schedule years do not match case")
    T = case.horizon.hours_per_year
    stats = []
    for y in case.years:
        if len(sched.assignment[y]) != T:
            raise ValueError(f"year {y}: assignment length does not match hours_per_year")
        df = sched.durations(y)
        loads = sched.loads(y)
        worst_abs = worst_rel = 0.0
        for i, r in enumerate(sched.region_ids):
            hourly = math.fsum(case.series_for(r, y).load_mw)
            blocked = math.fsum(df * loads[:, i] * T)
            err = abs(blocked - hourly)
            worst_abs = max(worst_abs, err)
            worst_rel = max(worst_rel, err / hourly if hourly else err)
        zero = int(np.sum(np.all(sched.cfs(y) == 0, axis=1)))
        stats.append(YearPartitionStats(y, len(df), float(math.fsum(df)), worst_abs, worst_rel, zero))
    return PartitionReport(stats)


def write_blocks(sched: BlockSchedule, out: Path | str) -> None:
    """Write ``blocks.csv`` and ``assignment.csv`` into ``out``."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    rids = sched.region_ids
    with (out / "blocks.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["year", "block", "duration_fraction"]
                   + [f"load_{r}" for r in rids] + [f"cf_{r}" for r in rids])
        for b in sched.blocks:
            w.writerow([b.year, b.block, repr(b.duration_fraction)]
                       + [repr(b.load_by_region[r]) for r in rids]
                       + [repr(b.pv_cf_by_region[r]) for r in rids])
    with (out / "assignment.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["year", "hour", "block"])
        for y in sorted(sched.assignment):
            for h, s in enumerate(sched.assignment[y]):
                w.writerow([y, h, int(s)])


def read_blocks(out: Path | str) -> BlockSchedule:
    out = Path(out)
    for name in ("blocks.csv", "assignment.csv"):
        if not (out / name).is_file():
            raise FileNotFoundError(f"{out / name}: missing file")
    with (out / "blocks.csv").open(newline="") as fh:
        reader = csv.DictReader(fh)
        rids = tuple(c[len("load_"):] for c in reader.fieldnames if c.startswith("load_"))
        blocks = tuple(
            TimeBlock(
                year=int(row["year"]),
                block=int(row["block"]),
                duration_fraction=float(row["duration_fraction"]),
                load_by_region={r: float(row[f"load_{r}"]) for r in rids},
                pv_cf_by_region={r: float(row[f"cf_{r}"]) for r in rids},
            )
            for row in reader
        )
    per_year: dict[int, list[int]] = {}
    with (out / "assignment.csv").open(newline="") as fh:
        for row in csv.DictReader(fh):
            per_year.setdefault(int(row["year"]), []).append(int(row["block"]))
    assignment = {y: np.array(v, dtype=int) for y, v in per_year.items()}
    return BlockSchedule(rids, blocks, assignment)


def schedule_from_arrays(region_ids, durations, loads, cfs) -> BlockSchedule:
    """Build a schedule directly from per-year arrays (no hourly data).

    ``durations[y]`` has shape (S,), ``loads[y]`` and ``cfs[y]`` shape (S, R);
    years are numbered from 1 in list order. The assignment is left empty.
    """
    blocks = []
    for y, (df, ld, cf) in enumerate(zip(durations, loads, cfs), start=1):
        for s in range(len(df)):
            blocks.append(TimeBlock(
                year=y,
                block=s,
                duration_fraction=float(df[s]),
                load_by_region={r: float(ld[s][i]) for i, r in enumerate(region_ids)},
                pv_cf_by_region={r: float(cf[s][i]) for i, r in enumerate(region_ids)},
            ))
    return BlockSchedule(tuple(region_ids), tuple(blocks), {})
