"""Harvester traces, the storage capacitor and per-action energy costs.

Units throughout: time in seconds, power in milliwatts, energy in
millijoules (1 mW for 1 s is 1 mJ), durations in the cost table in
milliseconds.
"""

from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional

import numpy as np

from ._io import atomic_write_text
from .core import ActionKind, ContractViolation

RF_MIN_MW = 0.04
RF_MAX_MW = 50.0
PIEZO_MIN_MW = 1.8
PIEZO_MAX_MW = 36.5


class TraceKind(enum.Enum):
    SolarDiurnal = "solar"
    RfDistance = "rf"
    PiezoShaking = "piezo"
    FileTrace = "file"
    Constant = "constant"


class HarvesterTrace:
    """Piecewise-constant harvested power over ``[times[0], end)``.

    Every trace kind, synthetic or file-backed, is stored as segment start
    times and the constant power on each segment, so harvested energy over any
    interval is an exact sum rather than a numerical integral.
    """

    def __init__(self, times, powers, end: float, kind: TraceKind = TraceKind.FileTrace, params=None):
        times = np.asarray(times, dtype=float)
        powers = np.asarray(powers, dtype=float)
        if times.ndim != 1 or times.shape != powers.shape or len(times) == 0:
            raise ContractViolation("times and powers must be equal-length non-empty 1-D sequences")
        if np.any(np.diff(times) <= 0):
            raise ContractViolation("trace times must be strictly increasing")
        if np.any(powers < 0) or not np.all(np.isfinite(powers)):
            raise ContractViolation("trace power must be finite and non-negative")
        if end <= times[-1]:
            raise ContractViolation("trace end must be after the last sample time")
        self.times = times
        self.powers = powers
        self.end = float(end)
        self.kind = kind
        self.params = dict(params or {})
        bounds = np.append(times, self.end)
        self._cum = np.concatenate([[0.0], np.cumsum(powers * np.diff(bounds))])

    @property
    def start(self) -> float:
        return float(self.times[0])

    def __repr__(self):
        return f"HarvesterTrace(kind={self.kind.value}, segments={len(self.times)}, end={self.end:g})"

    def _segment(self, t: float) -> int:
        return int(np.searchsorted(self.times, t, side="right") - 1)

    def power(self, t: float) -> float:
        if t < self.times[0] or t >= self.end:
            return 0.0
        return float(self.powers[self._segment(t)])

    def cumulative(self, t: float) -> float:
        """Energy harvested from the trace start up to time ``t``."""
        if t <= self.times[0]:
            return 0.0
        if t >= self.end:
            return float(self._cum[-1])
        i = self._segment(t)
        return float(self._cum[i] + self.powers[i] * (t - self.times[i]))

    def energy(self, t0: float, t1: float) -> float:
        """Energy (mJ) harvested over ``[t0, t1]``."""
        if t1 <= t0:
            return 0.0
        return self.cumulative(t1) - self.cumulative(t0)

    def time_to_harvest(self, t: float, amount: float) -> Optional[float]:
        """Earliest time at which ``amount`` mJ has been harvested since ``t``."""
        if amount <= 0:
            return t
        target = self.cumulative(t) + amount
        if target > self._cum[-1]:
            return None
        # first boundary whose cumulative energy reaches the target
        j = int(np.searchsorted(self._cum, target, side="left"))
        i = max(j - 1, 0)
        seg_start = max(float(self.times[i]), t)
        p = self.powers[i]
        if p <= 0:
            return seg_start
        return max(t, float(self.times[i] + (target - self._cum[i]) / p), seg_start)

    def to_csv_text(self) -> str:
        """``time_s,power_mw`` rows; a zero-power row marks the end."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["time_s", "power_mw"])
        for t, p in zip(self.times, self.powers):
            w.writerow([repr(float(t)), repr(float(p))])
        w.writerow([repr(self.end), "0.0"])
        return buf.getvalue()

    def to_csv(self, path) -> None:
        atomic_write_text(path, self.to_csv_text())

    @classmethod
    def from_csv(cls, path) -> "HarvesterTrace":
        """Read a ``time_s,power_mw`` CSV; the last row's time is the trace end."""
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        if not rows or [c.strip() for c in rows[0]] != ["time_s", "power_mw"]:
            raise ContractViolation(f"{path}: expected header 'time_s,power_mw'")
        data = []
        for lineno, row in enumerate(rows[1:], start=2):
            if not row:
                continue
            try:
                data.append((float(row[0]), float(row[1])))
            except (ValueError, IndexError):
                raise ContractViolation(f"{path}:{lineno}: malformed row {row!r}") from None
        if len(data) < 2:
            raise ContractViolation(f"{path}: need at least two rows")
        times = [t for t, _ in data]
        powers = [p for _, p in data]
        return cls(times[:-1], powers[:-1], end=times[-1], kind=TraceKind.FileTrace, params={"path": str(path)})


def constant_trace(power_mw: float, duration_s: float) -> HarvesterTrace:
    return HarvesterTrace([0.0], [power_mw], end=duration_s, kind=TraceKind.Constant, params={"power_mw": power_mw})


def solar_diurnal(
    days: float = 3,
    peak_mw: float = 2.0,
    day_start_h: float = 8.0,
    day_end_h: float = 17.0,
    resolution_s: float = 60.0,
    dropouts_per_day: float = 2.0,
    dropout_mean_s: float = 1200.0,
    dropout_factor: float = 0.05,
    seed: int = 0,
) -> HarvesterTrace:
    """Half-sine daylight window with random cloud dropouts; zero at night."""
    rng = np.random.default_rng(seed)
    end = days * 86400.0
    times = np.arange(0.0, end, resolution_s)
    mid = times + resolution_s / 2
    hour = (mid % 86400.0) / 3600.0
    day_len = day_end_h - day_start_h
    phase = (hour - day_start_h) / day_len
    daylight = (phase > 0) & (phase < 1)
    powers = np.where(daylight, peak_mw * np.sin(np.pi * np.clip(phase, 0, 1)), 0.0)
    drops = []
    for d in range(int(math.ceil(days))):
        for _ in range(rng.poisson(dropouts_per_day)):
            s = d * 86400 + 3600 * (day_start_h + rng.uniform(0, day_len))
            drops.append((s, s + rng.exponential(dropout_mean_s)))
    for s, e in drops:
        powers[(mid >= s) & (mid < e)] *= dropout_factor
    params = dict(days=days, peak_mw=peak_mw, day_start_h=day_start_h, day_end_h=day_end_h,
                  resolution_s=resolution_s, seed=seed, dropouts=drops)
    return HarvesterTrace(times, powers, end=end, kind=TraceKind.SolarDiurnal, params=params)


# Mean harvested power per distance tier (metres -> mW).
RF_TIER_POWER = {3: 24.0, 5: 9.0, 7: 1.2}


def rf_distance(
    tiers: Iterable[tuple[int, float]] = ((3, 3600.0), (5, 3600.0), (7, 3600.0)),
    jitter: float = 0.15,
    resolution_s: float = 10.0,
    seed: int = 0,
) -> HarvesterTrace:
    """Constant power per distance tier with multiplicative Gaussian jitter.

    ``tiers`` is a sequence of (distance in metres, duration in seconds).
    """
    rng = np.random.default_rng(seed)
    times, powers, t = [], [], 0.0
    for dist, dur in tiers:
        if dist not in RF_TIER_POWER:
            raise ContractViolation(f"unknown RF distance tier {dist} (known: {sorted(RF_TIER_POWER)})")
        n = max(1, int(round(dur / resolution_s)))
        base = RF_TIER_POWER[dist]
        p = base * (1.0 + jitter * rng.standard_normal(n))
        times.extend(t + resolution_s * np.arange(n))
        powers.extend(np.clip(p, RF_MIN_MW, RF_MAX_MW))
        t += n * resolution_s
    return HarvesterTrace(times, powers, end=t, kind=TraceKind.RfDistance,
                          params=dict(tiers=list(tiers), jitter=jitter, seed=seed))


def piezo_shaking(
    blocks: Iterable[tuple[str, float]] = (("gentle", 3600.0), ("abrupt", 3600.0)) * 2,
    gentle_mw: float = 4.0,
    abrupt_mw: float = 20.0,
    jitter: float = 0.3,
    resolution_s: float = 5.0,
    seed: int = 0,
) -> HarvesterTrace:
    """Alternating gentle/abrupt shaking blocks, one power level per 5 s gesture."""
    rng = np.random.default_rng(seed)
    levels = {"gentle": gentle_mw, "abrupt": abrupt_mw}
    times, powers, t = [], [], 0.0
    for name, dur in blocks:
        n = max(1, int(round(dur / resolution_s)))
        p = levels[name] * (1.0 + jitter * rng.standard_normal(n))
        times.extend(t + resolution_s * np.arange(n))
        powers.extend(np.clip(p, PIEZO_MIN_MW, PIEZO_MAX_MW))
        t += n * resolution_s
    return HarvesterTrace(times, powers, end=t, kind=TraceKind.PiezoShaking,
                          params=dict(blocks=list(blocks), gentle_mw=gentle_mw, abrupt_mw=abrupt_mw, seed=seed))


@dataclass(frozen=True)
class Capacitor:
    """Ideal storage capacitor.

    The stored energy is the state variable; voltage is derived from it so
    repeated charge/drain steps do not accumulate sqrt round-off.
    """

    capacitance: float
    max_voltage: float
    cutoff_voltage: float
    energy_mj: float = 0.0

    def __post_init__(self):
        if self.capacitance <= 0 or not (0 <= self.cutoff_voltage <= self.max_voltage):
            raise ContractViolation("need capacitance > 0 and 0 <= cutoff <= max voltage")
        if not (0 <= self.energy_mj <= self.e_max * (1 + 1e-12)):
            raise ContractViolation(f"stored energy {self.energy_mj} mJ outside [0, {self.e_max}]")

    @classmethod
    def at(cls, capacitance: float, voltage: float, max_voltage: float, cutoff_voltage: float) -> "Capacitor":
        if not 0 <= voltage <= max_voltage:
            raise ContractViolation("voltage must lie in [0, max_voltage]")
        return cls(capacitance, max_voltage, cutoff_voltage, _energy(capacitance, voltage))

    @property
    def voltage(self) -> float:
        return math.sqrt(2.0 * self.energy_mj / 1000.0 / self.capacitance)

    @property
    def e_max(self) -> float:
        return _energy(self.capacitance, self.max_voltage)

    @property
    def e_cutoff(self) -> float:
        return _energy(self.capacitance, self.cutoff_voltage)

    @property
    def budget(self) -> float:
        """Largest energy a single wake can spend (full charge down to cutoff)."""
        return self.e_max - self.e_cutoff

    def with_energy(self, energy_mj: float) -> "Capacitor":
        return replace(self, energy_mj=energy_mj)


def _energy(capacitance: float, voltage: float) -> float:
    return 0.5 * capacitance * voltage * voltage * 1000.0


def stored_energy(cap: Capacitor) -> float:
    return cap.energy_mj


@dataclass(frozen=True)
class StepResult:
    cap: Capacitor
    harvested: float
    drained: float
    clamp_loss: float


def step_detailed(cap: Capacitor, trace: HarvesterTrace, t: float, dt: float, drain: float) -> StepResult:
    """Advance ``dt`` seconds: harvest from the trace, remove ``drain`` mJ, clamp to [0, E_max].

    ``clamp_loss`` is whatever the clamp removed (positive on overflow,
    negative when the floor absorbed an overdraw).
    """
    if dt < 0 or drain < 0:
        raise ContractViolation("need dt >= 0 and drain >= 0")
    harvested = trace.energy(t, t + dt)
    raw = cap.energy_mj + harvested - drain
    new = min(max(raw, 0.0), cap.e_max)
    return StepResult(cap.with_energy(new), harvested, drain, raw - new)


def step(cap: Capacitor, trace: HarvesterTrace, t: float, dt: float, drain: float) -> Capacitor:
    if dt <= 0:
        raise ContractViolation("dt must be positive")
    return step_detailed(cap, trace, t, dt, drain).cap


def can_execute(cap: Capacitor, cost: float) -> bool:
    """True iff spending ``cost`` mJ keeps the capacitor at or above cutoff."""
    return cap.energy_mj - cost >= cap.e_cutoff


def next_wakeup(cap: Capacitor, trace: HarvesterTrace, t: float, min_cost: float) -> Optional[float]:
    """Earliest time >= ``t`` at which ``can_execute(min_cost)`` holds with no drain."""
    if can_execute(cap, min_cost):
        return t
    target = cap.e_cutoff + min_cost
    if target > cap.e_max:
        return None
    t_w = trace.time_to_harvest(t, target - cap.energy_mj)
    if t_w is None:
        return None
    bump = 1e-9
    for _ in range(64):
        if t_w > trace.end:
            return None
        if can_execute(step_detailed(cap, trace, t, t_w - t, 0.0).cap, min_cost):
            return t_w
        t_w += bump
        bump *= 2
    return None


@dataclass
class EnergyLedger:
    """Per-episode energy bookkeeping used for the conservation check."""

    initial: float = 0.0
    harvested: float = 0.0
    drained: float = 0.0
    clamp_loss: float = 0.0
    charges: list = field(default_factory=list)

    def add(self, res: StepResult, label=None) -> Capacitor:
        self.harvested += res.harvested
        self.drained += res.drained
        self.clamp_loss += res.clamp_loss
        if label is not None and res.drained > 0:
            self.charges.append((*label, res.drained))
        return res.cap

    def residual(self, final: float) -> float:
        """Relative conservation error against the final stored energy."""
        lhs = self.initial + self.harvested
        rhs = final + self.drained + self.clamp_loss
        return abs(lhs - rhs) / max(abs(lhs), abs(rhs), 1e-300)


@dataclass(frozen=True)
class Cost:
    energy_mj: float
    duration_ms: float

    def __post_init__(self):
        if self.energy_mj <= 0 or self.duration_ms <= 0:
            raise ContractViolation(f"costs must be strictly positive, got {self}")

    @property
    def duration_s(self) -> float:
        return self.duration_ms / 1000.0


@dataclass(frozen=True)
class CostTable:
    """Energy/time of every action sub-step, of the planner, and of each selection heuristic."""

    entries: dict
    planner_overhead: Cost
    selection_overhead: dict
    heuristic: str = "none"

    def substeps(self, kind: ActionKind) -> list[Cost]:
        out, i = [], 0
        while (kind, i) in self.entries:
            out.append(self.entries[(kind, i)])
            i += 1
        return out

    def cost(self, kind: ActionKind, substep: int = 0) -> Cost:
        return self.entries[(kind, substep)]

    def action_energy(self, kind: ActionKind) -> float:
        return sum(c.energy_mj for c in self.substeps(kind))

    def action_duration_ms(self, kind: ActionKind) -> float:
        return sum(c.duration_ms for c in self.substeps(kind))

    def with_heuristic(self, heuristic: str) -> "CostTable":
        if heuristic not in self.selection_overhead:
            raise ContractViolation(f"no selection cost for heuristic {heuristic!r}")
        entries = dict(self.entries)
        entries[(ActionKind.Select, 0)] = self.selection_overhead[heuristic]
        return replace(self, entries=entries, heuristic=heuristic)

    def cheapest(self) -> float:
        return min(c.energy_mj for c in self.entries.values())


A = ActionKind

PLANNER_OVERHEAD = Cost(0.057, 4.3)

SELECTION_OVERHEAD = {
    "none": Cost(0.0009, 0.08),
    "random": Cost(0.0018, 0.15),
    "round_robin": Cost(0.034, 2.6),
    "k_last": Cost(0.270, 21.0),
}

# Values not reported for an action are filled with small plausible numbers;
# see README "Cost tables".
_SHARED = {
    (A.Decide, 0): Cost(0.012, 1.1),
    (A.Learnable, 0): Cost(0.008, 0.7),
    (A.Evaluate, 0): Cost(0.021, 1.8),
}


def knn_costs(heuristic: str = "none") -> CostTable:
    """kNN anomaly learner on the air-quality board."""
    entries = {
        (A.Sense, 0): Cost(3.8, 120.0),
        (A.Extract, 0): Cost(0.95, 151.0),
        (A.Learn, 0): Cost(3.102, 517.0),
        (A.Learn, 1): Cost(3.104, 517.0),
        (A.Learn, 2): Cost(3.103, 517.0),
        (A.Infer, 0): Cost(0.41, 64.98),
        **_SHARED,
    }
    entries[(A.Select, 0)] = SELECTION_OVERHEAD[heuristic]
    return CostTable(entries, PLANNER_OVERHEAD, dict(SELECTION_OVERHEAD), heuristic)


def kmeans_costs(heuristic: str = "none") -> CostTable:
    """Competitive k-means learner on the vibration board."""
    entries = {
        (A.Sense, 0): Cost(3.62, 5000.0),
        (A.Extract, 0): Cost(2.26, 380.0),
        (A.Learn, 0): Cost(2.7085, 476.8),
        (A.Learn, 1): Cost(2.7085, 476.8),
        (A.Infer, 0): Cost(0.0632, 9.47),
        **_SHARED,
    }
    entries[(A.Select, 0)] = SELECTION_OVERHEAD[heuristic]
    return CostTable(entries, PLANNER_OVERHEAD, dict(SELECTION_OVERHEAD), heuristic)
