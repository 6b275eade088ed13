"""Domain types for planning cases and the on-disk case bundle format.

A bundle is a directory holding ``config.toml``, ``regions.csv``,
``units.csv``, ``interfaces.csv`` and ``series/<region>_<year>.csv``.
Per-year columns accept one value (broadcast to every year) or ``;``-separated
values, one per year.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

KINDS = ("retiring", "oil", "coal", "gas", "nuclear", "hydro", "wind", "pv")
CONVENTIONAL_KINDS = ("retiring", "oil", "coal", "gas", "nuclear", "hydro")

REGION_COLUMNS = (
    "id", "name", "pv_build_cost", "land_cost", "pv_build_limit", "voll",
    "reserve_margin", "rps", "maintenance_factor", "validated_dispatch_total",
)
UNIT_COLUMNS = (
    "id", "region", "kind", "p_max", "existing_count", "fixed_om", "var_om",
    "heat_rate", "fuel_price", "emission_coeff", "emission_price",
    "forced_outage_rate", "maintenance_outage_rate", "inertia_h",
    "governor_droop", "governor_tg", "validated_dispatch",
)
INTERFACE_COLUMNS = (
    "id", "from_region", "to_region", "capacity", "wheeling_price", "sync_stiffness",
)
SERIES_COLUMNS = ("hour", "load_mw", "solar_cf")


class BundleError(Exception):
    """A case bundle could not be read; the message names file and row."""


@dataclass(frozen=True)
class PlanningHorizon:
    n_years: int
    discount_rate: float
    hours_per_year: int = 8760


@dataclass(frozen=True)
class Region:
    id: str
    name: str
    pv_build_cost_by_year: tuple[float, ...]
    land_cost_by_year: tuple[float, ...]
    pv_build_limit_by_year: tuple[float, ...]
    voll: float
    reserve_margin_by_year: tuple[float, ...]
    rps_by_year: tuple[float, ...]
    # one entry per block (broadcast when a single value is given)
    maintenance_factor_by_block: tuple[float, ...]
    validated_dispatch_total: float

    def maintenance_factor(self, block: int) -> float:
        mf = self.maintenance_factor_by_block
        if len(mf) == 1:
            return mf[0]
        return mf[block]


@dataclass(frozen=True)
class UnitGroup:
    id: str
    region: str
    kind: str
    p_max: float  # MW per unit
    existing_count: int
    fixed_om: float  # $/MW-year
    var_om: float  # $/MWh
    heat_rate: float  # MBtu/MWh
    fuel_price_by_year: tuple[float, ...]  # $/MBtu
    emission_coeff: float  # ton/MBtu
    emission_price_by_year: tuple[float, ...]  # $/ton
    forced_outage_rate: float
    maintenance_outage_rate: float
    inertia_h: float  # s on unit MVA base
    governor_droop: float  # pu; 0 means no governor
    validated_dispatch: float  # MW, whole group, validated base case
    governor_tg: float = 5.0  # s

    @property
    def is_pv(self) -> bool:
        return self.kind == "pv"

    @property
    def is_conventional(self) -> bool:
        return self.kind in CONVENTIONAL_KINDS

    @property
    def capacity(self) -> float:
        return self.p_max * self.existing_count


@dataclass(frozen=True)
class Interface:
    id: str
    from_region: str
    to_region: str
    capacity: float  # MW
    wheeling_price: float  # $/MWh
    sync_stiffness: float  # MW/rad


@dataclass(frozen=True, eq=False)
class HourlySeries:
    region: str
    year: int
    load_mw: np.ndarray
    solar_cf: np.ndarray

    def __post_init__(self):
        for name in ("load_mw", "solar_cf"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def __eq__(self, other):
        if not isinstance(other, HourlySeries):
            return NotImplemented
        return (
            self.region == other.region
            and self.year == other.year
            and np.array_equal(self.load_mw, other.load_mw)
            and np.array_equal(self.solar_cf, other.solar_cf)
        )

    __hash__ = None


@dataclass(frozen=True)
class PlanningCase:
    horizon: PlanningHorizon
    regions: tuple[Region, ...]
    units: tuple[UnitGroup, ...]
    interfaces: tuple[Interface, ...]
    series: tuple[HourlySeries, ...]

    @property
    def years(self) -> range:
        return range(1, self.horizon.n_years + 1)

    @cached_property
    def region_ids(self) -> tuple[str, ...]:
        return tuple(r.id for r in self.regions)

    @cached_property
    def _region_by_id(self) -> dict[str, Region]:
        return {r.id: r for r in self.regions}

    @cached_property
    def _series_by_key(self) -> dict[tuple[str, int], HourlySeries]:
        return {(s.region, s.year): s for s in self.series}

    def region(self, region_id: str) -> Region:
        return self._region_by_id[region_id]

    def units_in(self, region_id: str) -> list[UnitGroup]:
        return [u for u in self.units if u.region == region_id]

    def pv_group(self, region_id: str) -> UnitGroup | None:
        for u in self.units:
            if u.region == region_id and u.is_pv:
                return u
        return None

    def series_for(self, region_id: str, year: int) -> HourlySeries:
        return self._series_by_key[(region_id, year)]


@dataclass(frozen=True)
class Violation:
    path: str
    message: str

    def __str__(self):
        return f"{self.path}: {self.message}"


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    def add(self, path: str, message: str) -> None:
        self.violations.append(Violation(path, message))

    @property
    def ok(self) -> bool:
        return not self.violations

    def __len__(self):
        return len(self.violations)

    def __iter__(self):
        return iter(self.violations)

    def __str__(self):
        return "\n".join(str(v) for v in self.violations) or "valid"


# --------------------------------------------------------------------------
# validation


def _check_range(report, path, values, lo=None, hi=None, lo_open=False):
    for i, v in enumerate(np.atleast_1d(values)):
        p = path if np.ndim(values) == 0 else f"{path}[{i}]"
        if not math.isfinite(v):
            report.add(p, f"must be finite, got {v}")
        elif lo is not None and (v <= lo if lo_open else v < lo):
            bound = f"> {lo}" if lo_open else f">= {lo}"
            report.add(p, f"must be {bound}, got {v}")
        elif hi is not None and v > hi:
            report.add(p, f"must be within bounds [{lo},{hi}], got {v}")


def validate_case(case: PlanningCase) -> ValidationReport:
    """Collect every invariant violation; an empty report means the case is valid."""
    report = ValidationReport()
    h = case.horizon
    if h.n_years < 1:
        report.add("horizon.n_years", f"must be >= 1, got {h.n_years}")
    if not h.discount_rate > 0:
        report.add("horizon.discount_rate", f"must be > 0, got {h.discount_rate}")
    if not h.hours_per_year > 0:
        report.add("horizon.hours_per_year", f"must be > 0, got {h.hours_per_year}")
    ny = h.n_years

    region_ids = [r.id for r in case.regions]
    for dup in sorted({i for i in region_ids if region_ids.count(i) > 1}):
        report.add(f"regions[{dup}]", "duplicate id")
    for r in case.regions:
        p = f"regions[{r.id}]"
        for name in ("pv_build_cost_by_year", "land_cost_by_year", "pv_build_limit_by_year",
                     "reserve_margin_by_year", "rps_by_year"):
            values = getattr(r, name)
            if len(values) != ny:
                report.add(f"{p}.{name}", f"expected {ny} values, got {len(values)}")
        _check_range(report, f"{p}.pv_build_cost_by_year", r.pv_build_cost_by_year, lo=0)
        _check_range(report, f"{p}.land_cost_by_year", r.land_cost_by_year, lo=0)
        _check_range(report, f"{p}.pv_build_limit_by_year", r.pv_build_limit_by_year, lo=0)
        _check_range(report, f"{p}.voll", r.voll, lo=0)
        _check_range(report, f"{p}.reserve_margin_by_year", r.reserve_margin_by_year, lo=0)
        _check_range(report, f"{p}.rps_by_year", r.rps_by_year, lo=0, hi=1)
        _check_range(report, f"{p}.maintenance_factor_by_block", r.maintenance_factor_by_block, lo=0, hi=1)
        if not r.maintenance_factor_by_block:
            report.add(f"{p}.maintenance_factor_by_block", "needs at least one value")
        _check_range(report, f"{p}.validated_dispatch_total", r.validated_dispatch_total, lo=0)

    unit_ids = [u.id for u in case.units]
    for dup in sorted({i for i in unit_ids if unit_ids.count(i) > 1}):
        report.add(f"units[{dup}]", "duplicate id")
    known = set(region_ids)
    pv_regions: list[str] = []
    for u in case.units:
        p = f"units[{u.id}]"
        if u.region not in known:
            report.add(f"{p}.region", f"unknown region {u.region!r}")
        if u.kind not in KINDS:
            report.add(f"{p}.kind", f"unknown kind {u.kind!r}")
        if not u.p_max > 0:
            report.add(f"{p}.p_max", f"must be > 0, got {u.p_max}")
        if u.existing_count < 0:
            report.add(f"{p}.existing_count", f"must be >= 0, got {u.existing_count}")
        for name in ("fixed_om", "var_om", "heat_rate", "emission_coeff", "validated_dispatch"):
            _check_range(report, f"{p}.{name}", getattr(u, name), lo=0)
        for name in ("fuel_price_by_year", "emission_price_by_year"):
            values = getattr(u, name)
            if len(values) != ny:
                report.add(f"{p}.{name}", f"expected {ny} values, got {len(values)}")
            _check_range(report, f"{p}.{name}", values, lo=0)
        _check_range(report, f"{p}.forced_outage_rate", u.forced_outage_rate, lo=0, hi=1)
        _check_range(report, f"{p}.maintenance_outage_rate", u.maintenance_outage_rate, lo=0, hi=1)
        if u.is_pv:
            pv_regions.append(u.region)
            if u.inertia_h != 0:
                report.add(f"{p}.inertia_h", "inertia_h must be 0 for pv")
        elif not u.inertia_h > 0:
            report.add(f"{p}.inertia_h", f"inertia_h must be > 0 for {u.kind}, got {u.inertia_h}")
        if u.is_conventional and not u.governor_droop > 0:
            report.add(f"{p}.governor_droop", f"must be > 0 for {u.kind}, got {u.governor_droop}")
        elif u.governor_droop < 0:
            report.add(f"{p}.governor_droop", f"must be >= 0, got {u.governor_droop}")
        if not u.governor_tg > 0:
            report.add(f"{p}.governor_tg", f"must be > 0, got {u.governor_tg}")
        if u.validated_dispatch > u.capacity + 1e-9:
            report.add(f"{p}.validated_dispatch",
                       f"exceeds installed capacity {u.capacity} MW")
    for rid in sorted({r for r in pv_regions if pv_regions.count(r) > 1}):
        report.add(f"regions[{rid}]", "more than one pv unit group")

    iface_ids = [i.id for i in case.interfaces]
    for dup in sorted({i for i in iface_ids if iface_ids.count(i) > 1}):
        report.add(f"interfaces[{dup}]", "duplicate id")
    for itf in case.interfaces:
        p = f"interfaces[{itf.id}]"
        for end in ("from_region", "to_region"):
            if getattr(itf, end) not in known:
                report.add(f"{p}.{end}", f"unknown region {getattr(itf, end)!r}")
        if itf.from_region == itf.to_region:
            report.add(p, "from_region must differ from to_region")
        _check_range(report, f"{p}.capacity", itf.capacity, lo=0)
        _check_range(report, f"{p}.wheeling_price", itf.wheeling_price, lo=0)
        _check_range(report, f"{p}.sync_stiffness", itf.sync_stiffness, lo=0, lo_open=True)

    seen = set()
    for s in case.series:
        p = f"series[{s.region},{s.year}]"
        key = (s.region, s.year)
        if key in seen:
            report.add(p, "duplicate series")
        seen.add(key)
        if s.region not in known:
            report.add(p, f"unknown region {s.region!r}")
        if not 1 <= s.year <= ny:
            report.add(p, f"year outside 1..{ny}")
        for name in ("load_mw", "solar_cf"):
            arr = getattr(s, name)
            if len(arr) != h.hours_per_year:
                report.add(f"{p}.{name}", f"expected {h.hours_per_year} hours, got {len(arr)}")
        bad = np.flatnonzero(~(s.load_mw >= 0))
        if bad.size:
            report.add(f"{p}.load_mw[{bad[0]}]", f"must be >= 0, got {s.load_mw[bad[0]]}")
        bad = np.flatnonzero(~((s.solar_cf >= 0) & (s.solar_cf <= 1)))
        if bad.size:
            report.add(f"{p}.solar_cf[{bad[0]}]",
                       f"must be within bounds [0,1], got {s.solar_cf[bad[0]]}")
    for rid in region_ids:
        for y in range(1, ny + 1):
            if (rid, y) not in seen:
                report.add(f"series[{rid},{y}]", "missing")
    return report


# --------------------------------------------------------------------------
# reading


def _read_csv(path: Path, columns: Sequence[str], required: Iterable[str]) -> list[dict]:
    if not path.is_file():
        raise BundleError(f"{path}: missing file")
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in required if c not in header]
        if missing:
            raise BundleError(f"{path}: missing column(s) {', '.join(missing)}")
        unknown = [c for c in header if c not in columns]
        if unknown:
            raise BundleError(f"{path}: unknown column(s) {', '.join(unknown)}")
        rows = []
        for n, row in enumerate(reader, start=2):
            row["_where"] = f"{path.name} row {n}"
            rows.append(row)
    return rows


def _num(row: dict, key: str, default: float | None = None) -> float:
    raw = (row.get(key) or "").strip()
    if raw == "":
        if default is None:
            raise BundleError(f"{row['_where']}: column {key!r} is empty")
        return default
    try:
        return float(raw)
    except ValueError:
        raise BundleError(f"{row['_where']}: column {key!r} is not a number: {raw!r}") from None


def _int(row: dict, key: str) -> int:
    value = _num(row, key)
    if value != int(value):
        raise BundleError(f"{row['_where']}: column {key!r} must be an integer, got {value}")
    return int(value)


def _seq(row: dict, key: str, n: int | None = None) -> tuple[float, ...]:
    raw = (row.get(key) or "").strip()
    if raw == "":
        raise BundleError(f"{row['_where']}: column {key!r} is empty")
    try:
        values = tuple(float(v) for v in raw.split(";"))
    except ValueError:
        raise BundleError(f"{row['_where']}: column {key!r} is not a number list: {raw!r}") from None
    if n is not None:
        if len(values) == 1:
            values = values * n
        elif len(values) != n:
            raise BundleError(f"{row['_where']}: column {key!r} needs 1 or {n} values, got {len(values)}")
    return values


def _ident(row: dict, key: str) -> str:
    value = (row.get(key) or "").strip()
    if not value or not value.isascii() or any(c in value for c in ",; "):
        raise BundleError(f"{row['_where']}: bad identifier in {key!r}: {value!r}")
    return value


def read_config(path: Path | str) -> dict:
    path = Path(path)
    if not path.is_file():
        raise BundleError(f"{path}: missing file")
    try:
        with path.open("rb") as fh:
            return tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise BundleError(f"{path}: {exc}") from None


def load_case_bundle(path: Path | str, validate: bool = True) -> PlanningCase:
    """Read a bundle directory into a cross-linked :class:`PlanningCase`.

    Raises :class:`BundleError` for missing files, unparseable rows, dangling
    identifiers and (when ``validate``) invariant violations.
    """
    root = Path(path)
    if not root.is_dir():
        raise BundleError(f"{root}: not a directory")
    cfg = read_config(root / "config.toml")
    hz = cfg.get("horizon", {})
    try:
        horizon = PlanningHorizon(
            n_years=int(hz["n_years"]),
            discount_rate=float(hz["discount_rate"]),
            hours_per_year=int(hz.get("hours_per_year", 8760)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise BundleError(f"{root / 'config.toml'}: bad [horizon] table ({exc})") from None
    ny = horizon.n_years

    unit_rows = _read_csv(root / "units.csv", UNIT_COLUMNS, [c for c in UNIT_COLUMNS if c != "governor_tg"])
    units = []
    for row in unit_rows:
        units.append(UnitGroup(
            id=_ident(row, "id"),
            region=_ident(row, "region"),
            kind=(row.get("kind") or "").strip(),
            p_max=_num(row, "p_max"),
            existing_count=_int(row, "existing_count"),
            fixed_om=_num(row, "fixed_om"),
            var_om=_num(row, "var_om"),
            heat_rate=_num(row, "heat_rate"),
            fuel_price_by_year=_seq(row, "fuel_price", ny),
            emission_coeff=_num(row, "emission_coeff"),
            emission_price_by_year=_seq(row, "emission_price", ny),
            forced_outage_rate=_num(row, "forced_outage_rate"),
            maintenance_outage_rate=_num(row, "maintenance_outage_rate"),
            inertia_h=_num(row, "inertia_h"),
            governor_droop=_num(row, "governor_droop"),
            governor_tg=_num(row, "governor_tg", 5.0),
            validated_dispatch=_num(row, "validated_dispatch"),
        ))
        if units[-1].kind not in KINDS:
            raise BundleError(f"{row['_where']}: unknown kind {units[-1].kind!r}")

    region_rows = _read_csv(root / "regions.csv", REGION_COLUMNS,
                            [c for c in REGION_COLUMNS if c != "validated_dispatch_total"])
    regions = []
    for row in region_rows:
        rid = _ident(row, "id")
        default_total = sum(u.validated_dispatch for u in units if u.region == rid)
        regions.append(Region(
            id=rid,
            name=(row.get("name") or "").strip(),
            pv_build_cost_by_year=_seq(row, "pv_build_cost", ny),
            land_cost_by_year=_seq(row, "land_cost", ny),
            pv_build_limit_by_year=_seq(row, "pv_build_limit", ny),
            voll=_num(row, "voll"),
            reserve_margin_by_year=_seq(row, "reserve_margin", ny),
            rps_by_year=_seq(row, "rps", ny),
            maintenance_factor_by_block=_seq(row, "maintenance_factor"),
            validated_dispatch_total=_num(row, "validated_dispatch_total", default_total),
        ))
    known = {r.id for r in regions}
    for row, u in zip(unit_rows, units):
        if u.region not in known:
            raise BundleError(f"{row['_where']}: dangling region id {u.region!r}")

    iface_rows = _read_csv(root / "interfaces.csv", INTERFACE_COLUMNS, INTERFACE_COLUMNS)
    interfaces = []
    for row in iface_rows:
        itf = Interface(
            id=_ident(row, "id"),
            from_region=_ident(row, "from_region"),
            to_region=_ident(row, "to_region"),
            capacity=_num(row, "capacity"),
            wheeling_price=_num(row, "wheeling_price"),
            sync_stiffness=_num(row, "sync_stiffness"),
        )
        for end in (itf.from_region, itf.to_region):
            if end not in known:
                raise BundleError(f"{row['_where']}: dangling region id {end!r}")
        interfaces.append(itf)

    series = []
    for r in regions:
        for y in range(1, ny + 1):
            spath = root / "series" / f"{r.id}_{y}.csv"
            rows = _read_csv(spath, SERIES_COLUMNS, SERIES_COLUMNS)
            for n, row in enumerate(rows):
                if _int(row, "hour") != n:
                    raise BundleError(f"{row['_where']}: expected hour {n}")
            series.append(HourlySeries(
                region=r.id,
                year=y,
                load_mw=np.array([_num(row, "load_mw") for row in rows]),
                solar_cf=np.array([_num(row, "solar_cf") for row in rows]),
            ))

    case = PlanningCase(horizon, tuple(regions), tuple(units), tuple(interfaces), tuple(series))
    if validate:
        report = validate_case(case)
        if not report.ok:
            raise BundleError(f"{root}: invalid case\n{report}")
    return case


# --------------------------------------------------------------------------
# writing


def _fmt(value) -> str:
    if isinstance(value, (tuple, list)):
        if len(set(value)) == 1:
            return _fmt(value[0])
        return ";".join(_fmt(v) for v in value)
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    value = float(value)
    if value.is_integer() and abs(value) < 1e15:
        return str(int(value))
    return repr(value)


def _toml_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, str):
        return '"' + value.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_toml_value(v) for v in value) + "]"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def dump_toml(tables: dict) -> str:
    """Serialize ``{table: {key: scalar-or-list}}``; enough for bundle configs."""
    lines = []
    for name, table in tables.items():
        if lines:
            lines.append("")
        lines.append(f"[{name}]")
        for key, value in table.items():
            lines.append(f"{key} = {_toml_value(value)}")
    return "\n".join(lines) + "\n"


def write_case_bundle(case: PlanningCase, path: Path | str, extra_config: dict | None = None) -> Path:
    """Write ``case`` as a bundle directory readable by :func:`load_case_bundle`."""
    root = Path(path)
    (root / "series").mkdir(parents=True, exist_ok=True)
    tables = {"horizon": {
        "n_years": case.horizon.n_years,
        "discount_rate": case.horizon.discount_rate,
        "hours_per_year": case.horizon.hours_per_year,
    }}
    for name, table in (extra_config or {}).items():
        if name != "horizon":
            tables[name] = table
    (root / "config.toml").write_text(dump_toml(tables))

    def write(name, columns, rows):
        with (root / name).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(columns)
            w.writerows(rows)

    write("regions.csv", REGION_COLUMNS, [
        (r.id, r.name, _fmt(r.pv_build_cost_by_year), _fmt(r.land_cost_by_year),
         _fmt(r.pv_build_limit_by_year), _fmt(r.voll), _fmt(r.reserve_margin_by_year),
         _fmt(r.rps_by_year), _fmt(r.maintenance_factor_by_block), _fmt(r.validated_dispatch_total))
        for r in case.regions
    ])
    write("units.csv", UNIT_COLUMNS, [
        (u.id, u.region, u.kind, _fmt(u.p_max), u.existing_count, _fmt(u.fixed_om), _fmt(u.var_om),
         _fmt(u.heat_rate), _fmt(u.fuel_price_by_year), _fmt(u.emission_coeff),
         _fmt(u.emission_price_by_year), _fmt(u.forced_outage_rate),
         _fmt(u.maintenance_outage_rate), _fmt(u.inertia_h), _fmt(u.governor_droop),
         _fmt(u.governor_tg), _fmt(u.validated_dispatch))
        for u in case.units
    ])
    write("interfaces.csv", INTERFACE_COLUMNS, [
        (i.id, i.from_region, i.to_region, _fmt(i.capacity), _fmt(i.wheeling_price),
         _fmt(i.sync_stiffness))
        for i in case.interfaces
    ])
    for s in case.series:
        write(f"series/{s.region}_{s.year}.csv", SERIES_COLUMNS, [
            (h, _fmt(load), _fmt(cf)) for h, (load, cf) in enumerate(zip(s.load_mw, s.solar_cf))
        ])
    return root


def bundle_hash(path: Path | str) -> str:
    """SHA-256 over every file in the bundle, keyed by relative path."""
    root = Path(path)
    digest = hashlib.sha256()
    for f in sorted(p for p in root.rglob("*") if p.is_file()):
        digest.update(f.relative_to(root).as_posix().encode())
        digest.update(b"\0")
        digest.update(f.read_bytes())
        digest.update(b"\0")
    return digest.hexdigest()


def replace(obj, **changes):
    """Shorthand for :func:`dataclasses.replace`."""
    return dataclasses.replace(obj, **changes)
