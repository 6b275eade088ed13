"""Solver-agnostic linear program container and MPS exchange files."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Hashable

import numpy as np

SENSES = ("<=", ">=", "==")


@dataclass(frozen=True, eq=False)
class LinearProgramSpec:
    """min c.x + c0  s.t.  rows (sense) rhs,  lb <= x <= ub,  some x integer.

    Rows are stored sparse as (indices, coefficients). ``keys`` maps each
    variable to its (role, region, unit, year, block)-style tuple; ``families``
    labels every row so audits can group residuals.
    """

    names: tuple[str, ...]
    keys: tuple[Hashable, ...]
    lb: np.ndarray
    ub: np.ndarray
    integer: np.ndarray
    c: np.ndarray
    c0: float
    row_names: tuple[str, ...]
    families: tuple[str, ...]
    row_index: tuple[np.ndarray, ...]
    row_coef: tuple[np.ndarray, ...]
    senses: tuple[str, ...]
    rhs: np.ndarray
    name: str = "lp"

    def __post_init__(self):
        n = len(self.names)
        for i, (idx, sense) in enumerate(zip(self.row_index, self.senses)):
            if len(idx) and (idx.min() < 0 or idx.max() >= n):
                raise ValueError(f"row {self.row_names[i]} references an undeclared variable")
            if sense not in SENSES:
                raise ValueError(f"row {self.row_names[i]}: bad sense {sense!r}")
        bad = np.flatnonzero(self.lb > self.ub)
        if bad.size:
            raise ValueError(f"variable {self.names[bad[0]]}: lb > ub")

    @property
    def n_vars(self) -> int:
        return len(self.names)

    @property
    def n_rows(self) -> int:
        return len(self.row_names)

    @cached_property
    def index(self) -> dict:
        return {k: i for i, k in enumerate(self.keys)}

    @cached_property
    def A(self) -> np.ndarray:
        dense = np.zeros((self.n_rows, self.n_vars))
        for i, (idx, coef) in enumerate(zip(self.row_index, self.row_coef)):
            np.add.at(dense[i], idx, coef)
        dense.setflags(write=False)
        return dense

    def objective(self, x: np.ndarray) -> float:
        return float(self.c0 + math.fsum(self.c * np.asarray(x, dtype=float)))

    def row_activity(self, x: np.ndarray) -> np.ndarray:
        return self.A @ np.asarray(x, dtype=float)

    def row_violation(self, x: np.ndarray) -> np.ndarray:
        """Non-negative violation of every row at ``x``."""
        act = self.row_activity(x)
        viol = np.zeros(self.n_rows)
        for i, sense in enumerate(self.senses):
            diff = act[i] - self.rhs[i]
            if sense == "<=":
                viol[i] = max(diff, 0.0)
            elif sense == ">=":
                viol[i] = max(-diff, 0.0)
            else:
                viol[i] = abs(diff)
        return viol

    def bound_violation(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.maximum(np.maximum(self.lb - x, x - self.ub), 0.0)

    def with_bounds(self, lb: np.ndarray, ub: np.ndarray) -> "LinearProgramSpec":
        return _replace(self, lb=np.asarray(lb, dtype=float), ub=np.asarray(ub, dtype=float))

    def with_objective(self, c: np.ndarray, c0: float | None = None) -> "LinearProgramSpec":
        return _replace(self, c=np.asarray(c, dtype=float), c0=self.c0 if c0 is None else c0)

    def relaxed(self) -> "LinearProgramSpec":
        return _replace(self, integer=np.zeros(self.n_vars, dtype=bool))


def _replace(spec: LinearProgramSpec, **changes) -> LinearProgramSpec:
    fields = {f: getattr(spec, f) for f in spec.__dataclass_fields__}
    fields.update(changes)
    return LinearProgramSpec(**fields)


@dataclass
class LpBuilder:
    """Accumulates variables and rows, then freezes them into a spec."""

    name: str = "lp"
    _names: list = field(default_factory=list)
    _keys: list = field(default_factory=list)
    _lb: list = field(default_factory=list)
    _ub: list = field(default_factory=list)
    _int: list = field(default_factory=list)
    _c: list = field(default_factory=list)
    _index: dict = field(default_factory=dict)
    c0: float = 0.0
    _rows: list = field(default_factory=list)

    def var(self, key, lb=0.0, ub=math.inf, cost=0.0, integer=False, name=None) -> int:
        if key in self._index:
            raise KeyError(f"duplicate variable {key!r}")
        i = len(self._names)
        self._index[key] = i
        self._keys.append(key)
        self._names.append(name or _key_name(key))
        self._lb.append(float(lb))
        self._ub.append(float(ub))
        self._int.append(bool(integer))
        self._c.append(float(cost))
        return i

    def __getitem__(self, key) -> int:
        return self._index[key]

    def __contains__(self, key) -> bool:
        return key in self._index

    def add_cost(self, key, amount: float) -> None:
        self._c[self._index[key]] += float(amount)

    def row(self, family: str, name: str, terms: dict[int, float], sense: str, rhs: float) -> None:
        self._rows.append((family, name, dict(terms), sense, float(rhs)))

    def build(self) -> LinearProgramSpec:
        row_index, row_coef = [], []
        for _, _, terms, _, _ in self._rows:
            idx = np.array(sorted(terms), dtype=int)
            row_index.append(idx)
            row_coef.append(np.array([terms[i] for i in idx], dtype=float))
        return LinearProgramSpec(
            names=tuple(self._names),
            keys=tuple(self._keys),
            lb=np.array(self._lb, dtype=float),
            ub=np.array(self._ub, dtype=float),
            integer=np.array(self._int, dtype=bool),
            c=np.array(self._c, dtype=float),
            c0=float(self.c0),
            row_names=tuple(r[1] for r in self._rows),
            families=tuple(r[0] for r in self._rows),
            row_index=tuple(row_index),
            row_coef=tuple(row_coef),
            senses=tuple(r[3] for r in self._rows),
            rhs=np.array([r[4] for r in self._rows], dtype=float),
            name=self.name,
        )


def _key_name(key) -> str:
    if isinstance(key, tuple):
        head, *rest = key
        return f"{head}[{','.join(str(k) for k in rest if k is not None)}]"
    return str(key)


# --------------------------------------------------------------------------
# MPS

_MPS_SENSE = {"<=": "L", ">=": "G", "==": "E"}
_FROM_MPS = {v: k for k, v in _MPS_SENSE.items()}


def _num(v: float) -> str:
    text = repr(float(v))
    return text[:-2] if text.endswith(".0") else text


def _fixed(f1="", f2="", f3="", f4="", f5="", f6="") -> str:
    # field columns 2-3, 5-12, 15-22, 25-36, 40-47, 50-61
    line = f" {f1:<2} {f2:<8}  {f3:<8}  {f4:>12}"
    if f5:
        line += f"   {f5:<8}  {f6:>12}"
    return line.rstrip()


def write_mps(spec: LinearProgramSpec, path: Path | str, full_names: bool = False) -> Path:
    """Write ``spec`` in MPS format.

    With short names (default) every record follows the fixed-field layout and
    a ``*`` comment header maps short names back to the model's names. With
    ``full_names`` the file is free-format MPS using the model names directly.
    """
    path = Path(path)
    if full_names:
        cname = list(spec.names)
        rname = list(spec.row_names)
    else:
        cname = [f"X{j:07d}" for j in range(spec.n_vars)]
        rname = [f"R{i:07d}" for i in range(spec.n_rows)]

    def rec(*f):
        if full_names:
            return " " + " ".join(str(x) for x in f if x != "")
        return _fixed(*f)

    lines = [f"* {spec.name}"]
    if not full_names:
        lines += [f"* {cname[j]} {spec.names[j]}" for j in range(spec.n_vars)]
        lines += [f"* {rname[i]} {spec.row_names[i]}" for i in range(spec.n_rows)]
    lines.append(f"NAME          {spec.name[:8] if not full_names else spec.name}")
    lines.append("ROWS")
    lines.append(rec("N", "COST"))
    for i in range(spec.n_rows):
        lines.append(rec(_MPS_SENSE[spec.senses[i]], rname[i]))

    cols: list[list[tuple[str, float]]] = [[] for _ in range(spec.n_vars)]
    for j in range(spec.n_vars):
        if spec.c[j] != 0:
            cols[j].append(("COST", spec.c[j]))
    for i, (idx, coef) in enumerate(zip(spec.row_index, spec.row_coef)):
        for j, a in zip(idx, coef):
            if a != 0:
                cols[j].append((rname[i], a))
    lines.append("COLUMNS")
    in_int = False
    marker = 0
    for j in range(spec.n_vars):
        if spec.integer[j] != in_int:
            tag = "'INTORG'" if spec.integer[j] else "'INTEND'"
            lines.append(rec("", f"M{marker:07d}", "'MARKER'", "", tag))
            marker += 1
            in_int = bool(spec.integer[j])
        entries = cols[j] or [("COST", 0.0)]
        for e in range(0, len(entries), 2):
            pair = entries[e:e + 2]
            fields = ["", cname[j], pair[0][0], _num(pair[0][1])]
            if len(pair) == 2:
                fields += [pair[1][0], _num(pair[1][1])]
            lines.append(rec(*fields))
    if in_int:
        lines.append(rec("", f"M{marker:07d}", "'MARKER'", "", "'INTEND'"))

    lines.append("RHS")
    if spec.c0 != 0:
        # objective constant enters as the negated RHS of the cost row
        lines.append(rec("", "RHS", "COST", _num(-spec.c0)))
    for i in range(spec.n_rows):
        if spec.rhs[i] != 0:
            lines.append(rec("", "RHS", rname[i], _num(spec.rhs[i])))

    lines.append("BOUNDS")
    for j in range(spec.n_vars):
        lo, hi = spec.lb[j], spec.ub[j]
        if lo == hi:
            lines.append(rec("FX", "BND", cname[j], _num(lo)))
            continue
        if lo == -math.inf and hi == math.inf:
            lines.append(rec("FR", "BND", cname[j]))
            continue
        if lo == -math.inf:
            lines.append(rec("MI", "BND", cname[j]))
        elif lo != 0 or (spec.integer[j] and hi == math.inf):
            lines.append(rec("LO", "BND", cname[j], _num(lo)))
        if hi != math.inf:
            lines.append(rec("UP", "BND", cname[j], _num(hi)))
        elif spec.integer[j]:
            lines.append(rec("PL", "BND", cname[j]))
    lines.append("ENDATA")
    path.write_text("\n".join(lines) + "\n")
    return path


def read_mps(path: Path | str) -> LinearProgramSpec:
    """Read an MPS file written by :func:`write_mps` (or any plain MPS model).

    Names are whitespace-delimited. Short names mapped in the comment header
    are translated back to model names.
    """
    path = Path(path)
    alias: dict[str, str] = {}
    section = None
    obj_row = None
    rows: list[tuple[str, str]] = []
    cols: dict[str, dict[str, float]] = {}
    col_order: list[str] = []
    integer: set[str] = set()
    rhs: dict[str, float] = {}
    lb: dict[str, float] = {}
    ub: dict[str, float] = {}
    in_int = False
    name = path.stem
    for raw in path.read_text().splitlines():
        if not raw.strip():
            continue
        if raw.startswith("*"):
            parts = raw[1:].split(None, 1)
            if len(parts) == 2 and parts[0][:1] in "XR" and parts[0][1:].isdigit():
                alias[parts[0]] = parts[1]
            continue
        if not raw[0].isspace():
            head = raw.split()
            section = head[0]
            if section == "NAME" and len(head) > 1:
                name = head[1]
            continue
        f = raw.split()
        if section == "ROWS":
            if f[0] == "N":
                if obj_row is None:
                    obj_row = f[1]
            else:
                rows.append((f[1], _FROM_MPS[f[0]]))
        elif section == "COLUMNS":
            if len(f) >= 3 and f[1] == "'MARKER'":
                in_int = f[2] == "'INTORG'"
                continue
            col = f[0]
            if col not in cols:
                cols[col] = {}
                col_order.append(col)
                if in_int:
                    integer.add(col)
            for r, v in zip(f[1::2], f[2::2]):
                cols[col][r] = cols[col].get(r, 0.0) + float(v)
        elif section == "RHS":
            body = f[1:] if len(f) % 2 == 1 else f
            for r, v in zip(body[0::2], body[1::2]):
                rhs[r] = float(v)
        elif section == "BOUNDS":
            kind, col = f[0], f[2]
            val = float(f[3]) if len(f) > 3 else 0.0
            if kind == "UP":
                ub[col] = val
                if val < 0 and col not in lb:
                    lb[col] = -math.inf
            elif kind == "LO":
                lb[col] = val
            elif kind == "FX":
                lb[col] = ub[col] = val
            elif kind == "FR":
                lb[col], ub[col] = -math.inf, math.inf
            elif kind == "MI":
                lb[col] = -math.inf
            elif kind == "PL":
                ub[col] = math.inf
            elif kind == "BV":
                lb[col], ub[col] = 0.0, 1.0
                integer.add(col)
            else:
                raise ValueError(f"{path}: unsupported bound type {kind}")
    b = LpBuilder(name=name)
    for col in col_order:
        nm = alias.get(col, col)
        b.var(nm, lb=lb.get(col, 0.0), ub=ub.get(col, math.inf),
              cost=cols[col].get(obj_row, 0.0), integer=col in integer, name=nm)
    b.c0 = -rhs.get(obj_row, 0.0)
    col_index = {col: j for j, col in enumerate(col_order)}
    terms_by_row: dict[str, dict[int, float]] = {r: {} for r, _ in rows}
    for col, entries in cols.items():
        for r, v in entries.items():
            if r != obj_row:
                terms_by_row[r][col_index[col]] = v
    for r, sense in rows:
        nm = alias.get(r, r)
        b.row(nm.split("[", 1)[0], nm, terms_by_row[r], sense, rhs.get(r, 0.0))
    return b.build()


def read_solution_values(spec: LinearProgramSpec, path: Path | str) -> np.ndarray:
    """Import an external solver's primal values (``name value`` per line).

    Names may be model names or the short ``X#######`` names used in MPS
    exports. Unlisted variables are taken as zero; ``#``/``*`` lines are
    comments.
    """
    lookup = {nm: j for j, nm in enumerate(spec.names)}
    x = np.zeros(spec.n_vars)
    for raw in Path(path).read_text().splitlines():
        line = raw.strip()
        if not line or line[0] in "#*":
            continue
        nm, value = line.rsplit(None, 1)
        if nm in lookup:
            x[lookup[nm]] = float(value)
        elif nm[:1] == "X" and nm[1:].isdigit() and int(nm[1:]) < spec.n_vars:
            x[int(nm[1:])] = float(value)
        else:
            raise KeyError(f"{path}: unknown variable {nm!r}")
    return x
