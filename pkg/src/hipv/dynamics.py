"""Reduced multi-area frequency dynamics and frequency-response metrics.

Each region is one aggregate machine with states rotor angle, frequency
deviation and governor mechanical power::

    (2 H S / f0) d(df)/dt = Pm + Ppv - Pload - sum K (d_r - d_j) - D S df / f0 - Ptrip
    d(delta)/dt          = 2 pi df
    Tg dPm/dt            = Pset - S db(df) / (R f0) - Pm,   0 <= Pm <= S

integrated with classical fixed-step RK4.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .scenario import DynamicCase

AVERAGING = ("inertia", "arithmetic")


class NumericalInstabilityError(RuntimeError):
    def __init__(self, step: int, time: float):
        super().__init__(f"non-finite state at step {step} (t = {time:.6g} s)")
        self.step = step
        self.time = time


@dataclass(frozen=True)
class Disturbance:
    region: str
    mw: float
    time: float = 1.0


@dataclass(frozen=True)
class SimConfig:
    dt: float = 0.005
    horizon: float = 60.0
    ripple_tol: float = 0.001  # Hz
    settle_band: float = 0.005  # Hz
    rocof_window: float = 0.5  # s
    disturbance: Disturbance | None = None
    damping: float = 1.0  # pu power per pu frequency, on online rating
    deadband: float = 0.0  # Hz, governor input
    pv_droop: float = 0.0  # pu; 0 disables PV over-frequency curtailment
    average: str = "inertia"
    settle_tail: float = 2.0  # s averaged for the settling frequency

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")
        if self.average not in AVERAGING:
            raise ValueError(f"average must be one of {AVERAGING}")
        if isinstance(self.disturbance, (tuple, list)):
            object.__setattr__(self, "disturbance", Disturbance(*self.disturbance))

    def with_(self, **changes) -> "SimConfig":
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d.update(changes)
        return SimConfig(**d)


@dataclass
class FrequencyTrace:
    region_ids: tuple[str, ...]
    time: np.ndarray
    freq: np.ndarray  # (samples, regions) Hz
    average: np.ndarray  # Hz
    angle: np.ndarray  # (samples, regions) rad
    f0: float = 60.0
    event_time: float | None = None

    @property
    def dt(self) -> float:
        return float(self.time[1] - self.time[0])

    @property
    def spread(self) -> np.ndarray:
        """Max inter-region frequency difference per sample."""
        return self.freq.max(axis=1) - self.freq.min(axis=1)


@dataclass(frozen=True)
class FrequencyMetrics:
    nadir: float  # Hz
    rocof: float  # mHz/s, magnitude
    settling_time: float  # s after the event
    settling_frequency: float  # Hz

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class MetricTolerances:
    nadir: float = 0.005
    rocof: float = 0.5
    settling_time: float = 2.0
    settling_frequency: float = 0.005


@dataclass(frozen=True)
class MetricComparison:
    metric: str
    a: float
    b: float
    mismatch: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.mismatch <= self.tolerance


@dataclass
class SanityReport:
    rows: list[MetricComparison] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)

    def failing(self) -> list[str]:
        return [r.metric for r in self.rows if not r.passed]

    def mismatch(self, metric: str) -> float:
        return next(r.mismatch for r in self.rows if r.metric == metric)

    def to_dict(self) -> dict:
        return {"passed": self.passed,
                "rows": [dict(asdict(r), passed=r.passed) for r in self.rows]}


@dataclass
class FlatRunResult:
    trace: FrequencyTrace
    ripple: float  # max |f - f0| over regions and time, Hz
    passed: bool


@dataclass(frozen=True)
class AggregateMachine:
    """Regional equivalent machine."""

    rating: float  # MVA
    inertia_h: float  # s on rating
    droop: float  # pu, harmonic mean over governed rating; 0 if none
    gain: float  # MW/Hz governor response
    governor_tg: float
    p_set: float


def aggregate_region(machines, f0: float = 60.0) -> AggregateMachine:
    rating = sum(m.rating for m in machines)
    if rating <= 0:
        return AggregateMachine(0.0, 0.0, 0.0, 0.0, 5.0, 0.0)
    hs = sum(m.inertia_h * m.rating for m in machines)
    gov = [m for m in machines if m.droop > 0 and m.rating > 0]
    inv_r = sum(m.rating / m.droop for m in gov)
    gain = inv_r / f0
    droop = rating / inv_r if inv_r > 0 else 0.0
    if gov:
        tg = sum(m.governor_tg * m.rating / m.droop for m in gov) / inv_r
    else:
        tg = 5.0
    return AggregateMachine(rating, hs / rating, droop, gain, tg, sum(m.dispatch_mw for m in machines))


class _Model:
    def __init__(self, case: DynamicCase, cfg: SimConfig):
        self.case = case
        self.cfg = cfg
        self.f0 = case.f0
        rids = list(case.region_ids)
        self.rids = rids
        n = len(rids)
        aggs = [aggregate_region(r.machines, case.f0) for r in case.regions]
        self.aggs = aggs
        self.rating = np.array([a.rating for a in aggs])
        self.hs = np.array([a.inertia_h * a.rating for a in aggs])
        bad = [rids[i] for i in range(n) if self.hs[i] <= 0]
        if bad:
            raise ValueError(f"region(s) {bad} have no online inertia")
        self.m = 2.0 * self.hs / self.f0  # MW s / Hz
        self.gain = np.array([a.gain for a in aggs])
        self.tg = np.array([a.governor_tg for a in aggs])
        self.p_set = np.array([a.p_set for a in aggs])
        self.pv = np.array([r.pv_mw for r in case.regions])
        self.load = np.array([r.load_mw for r in case.regions])
        self.damp = cfg.damping * self.rating / self.f0
        lap = np.zeros((n, n))
        idx = {r: i for i, r in enumerate(rids)}
        for t in case.ties:
            i, j, k = idx[t.from_region], idx[t.to_region], t.sync_stiffness
            lap[i, i] += k
            lap[j, j] += k
            lap[i, j] -= k
            lap[j, i] -= k
        self.lap = lap
        self.delta0 = np.array([r.angle_rad for r in case.regions])
        self.n = n

    def _deadband(self, df):
        db = self.cfg.deadband
        if db <= 0:
            return df
        return np.sign(df) * np.maximum(np.abs(df) - db, 0.0)

    def deriv(self, x, trip):
        n = self.n
        delta, df, pm = x[:n], x[n:2 * n], x[2 * n:]
        pm_eff = np.clip(pm, 0.0, self.rating)
        pv = self.pv
        if self.cfg.pv_droop > 0:
            over = np.maximum(self._deadband(df), 0.0)
            pv = np.maximum(pv - pv * over / (self.cfg.pv_droop * self.f0), 0.0)
        acc = (pm_eff + pv - self.load - self.lap @ delta - self.damp * df - trip) / self.m
        dpm = (self.p_set - self.gain * self._deadband(df) - pm) / self.tg
        # output limiter: no winding beyond the limits
        dpm = np.where((pm >= self.rating) & (dpm > 0), 0.0, dpm)
        dpm = np.where((pm <= 0) & (dpm < 0), 0.0, dpm)
        return np.concatenate([2.0 * math.pi * df, acc, dpm])


def _run(case: DynamicCase, cfg: SimConfig, disturbance: Disturbance | None) -> FrequencyTrace:
    model = _Model(case, cfg)
    n = model.n
    steps = int(round(cfg.horizon / cfg.dt))
    dt = cfg.dt
    trip = np.zeros(n)
    k_event = steps + 1
    event_time = None
    if disturbance is not None:
        if disturbance.region not in model.rids:
            raise ValueError(f"unknown disturbance region {disturbance.region!r}")
        i = model.rids.index(disturbance.region)
        online = model.p_set[i]
        if disturbance.mw < 0:
            raise ValueError("disturbance MW must be non-negative")
        if disturbance.mw > online + 1e-9:
            raise ValueError(f"disturbance {disturbance.mw:.6g} MW exceeds online generation "
                             f"{online:.6g} MW in region {disturbance.region!r}")
        k_event = int(round(disturbance.time / dt))
        if not 0 <= k_event < steps:
            raise ValueError("disturbance time must fall inside the horizon")
        event_time = k_event * dt
        trip[i] = disturbance.mw
    zero = np.zeros(n)

    x = np.concatenate([model.delta0, np.zeros(n), model.p_set])
    states = np.empty((steps + 1, 3 * n))
    states[0] = x
    f = model.deriv
    # overflow is reported as NumericalInstabilityError, not as a warning
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(steps):
            p = trip if k >= k_event else zero
            k1 = f(x, p)
            k2 = f(x + 0.5 * dt * k1, p)
            k3 = f(x + 0.5 * dt * k2, p)
            k4 = f(x + dt * k3, p)
            x = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if not np.all(np.isfinite(x)):
                raise NumericalInstabilityError(k + 1, (k + 1) * dt)
            states[k + 1] = x

    time = np.arange(steps + 1) * dt
    freq = case.f0 + states[:, n:2 * n]
    weights = model.hs if cfg.average == "inertia" else np.ones(n)
    average = freq @ (weights / weights.sum())
    return FrequencyTrace(tuple(model.rids), time, freq, average, states[:, :n], case.f0, event_time)


def flat_run(case: DynamicCase, cfg: SimConfig | None = None) -> FlatRunResult:
    """Undisturbed run; passes when no region drifts more than ``ripple_tol``."""
    cfg = cfg or SimConfig(horizon=20.0)
    if cfg.horizon < 20.0:
        raise ValueError("flat run horizon must be at least 20 s")
    trace = _run(case, cfg, None)
    ripple = float(np.max(np.abs(trace.freq - case.f0)))
    return FlatRunResult(trace, ripple, ripple <= cfg.ripple_tol)


def simulate_contingency(case: DynamicCase, cfg: SimConfig) -> FrequencyTrace:
    """Step loss of ``cfg.disturbance.mw`` MW of generation, snapped to the time grid."""
    if cfg.disturbance is None:
        raise ValueError("contingency simulation needs a disturbance")
    return _run(case, cfg, cfg.disturbance)


def _window_slopes(t: np.ndarray, y: np.ndarray, n_w: int) -> np.ndarray:
    """Least-squares slope of every run of ``n_w`` consecutive samples."""
    dt = t[1] - t[0]
    w = np.arange(n_w) - (n_w - 1) / 2.0
    return np.correlate(y, w, mode="valid") / (float(w @ w) * dt)


def compute_metrics(trace: FrequencyTrace, cfg: SimConfig | None = None) -> FrequencyMetrics:
    cfg = cfg or SimConfig()
    t = trace.time
    f = trace.average
    te = trace.event_time if trace.event_time is not None else float(t[0])
    post = t >= te - 1e-9
    tp, fp = t[post], f[post]
    dt = float(t[1] - t[0])
    n_w = int(round(cfg.rocof_window / dt)) + 1
    if tp.size < n_w:
        raise ValueError(f"trace after the event is shorter than the {cfg.rocof_window} s rocof window")
    rocof = float(np.max(np.abs(_window_slopes(tp, fp, n_w)))) * 1000.0
    tail = t >= t[-1] - cfg.settle_tail - 1e-9
    settling = float(np.mean(f[tail]))
    outside = np.flatnonzero(np.abs(fp - settling) > cfg.settle_band)
    if outside.size == 0:
        settling_time = 0.0
    else:
        last = outside[-1]
        settling_time = float(tp[min(last + 1, tp.size - 1)] - te)
    return FrequencyMetrics(float(fp.min()), rocof, settling_time, settling)


def initial_rocof(trace: FrequencyTrace, window: float = 0.1) -> float:
    """Signed least-squares slope (Hz/s) of the average frequency just after the event."""
    te = trace.event_time if trace.event_time is not None else float(trace.time[0])
    sel = (trace.time >= te - 1e-9) & (trace.time <= te + window + 1e-9)
    tt, ff = trace.time[sel], trace.average[sel]
    if tt.size < 3:
        raise ValueError("window too short for a slope estimate")
    return float(_window_slopes(tt, ff, tt.size)[0])


def compare_metrics(a: FrequencyMetrics, b: FrequencyMetrics,
                    tol: MetricTolerances | None = None) -> SanityReport:
    """Per-metric absolute mismatch, rounded to 1e-9 to drop binary noise."""
    tol = tol or MetricTolerances()
    rows = []
    for name in ("nadir", "rocof", "settling_time", "settling_frequency"):
        va, vb = getattr(a, name), getattr(b, name)
        rows.append(MetricComparison(name, va, vb, round(abs(va - vb), 9), getattr(tol, name)))
    return SanityReport(rows)


def write_trace_csv(trace: FrequencyTrace, path: Path | str) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time"] + [f"f_{r}" for r in trace.region_ids] + ["f_avg"])
        for i in range(trace.time.size):
            w.writerow([f"{trace.time[i]:.4f}"] + [f"{v:.9f}" for v in trace.freq[i]] + [f"{trace.average[i]:.9f}"])
    return path


def read_trace_csv(path: Path | str, event_time: float | None = None, f0: float = 60.0) -> FrequencyTrace:
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], np.array(rows[1:], dtype=float)
    rids = tuple(h[2:] for h in header[1:-1])
    return FrequencyTrace(rids, body[:, 0], body[:, 1:-1], body[:, -1], np.zeros((body.shape[0], len(rids))),
                          f0, event_time)


def write_metrics_json(metrics: FrequencyMetrics, path: Path | str, extra: dict | None = None) -> Path:
    path = Path(path)
    d = metrics.to_dict()
    d.update(extra or {})
    path.write_text(json.dumps(d, indent=2, sort_keys=True) + "\n")
    return path
