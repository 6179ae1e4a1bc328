"""Scenario configuration, its versioned text format, and the packaged presets.

A scenario file looks like::

    format = intermlearn-scenario/1

    [scenario]
    name = vibration
    seed = 3

    [trace]
    kind = piezo
    blocks = gentle:600, abrupt:600

    [learner]
    kind = kmeans

Sections are ``scenario``, ``trace``, ``energy``, ``learner``, ``selection``,
``goal``, ``planner``, ``stream``, ``scheduler`` and ``faults``. Keys are the
field names of the matching config classes; omitted keys keep their defaults.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

import numpy as np

from ..core import ContractViolation, GoalSpec
from ..energy import (
    Capacitor,
    HarvesterTrace,
    constant_trace,
    piezo_shaking,
    rf_distance,
    solar_diurnal,
)
from ..learners.features import FeatureSet
from ..planner import PlanConfig
from ..selection import HEURISTICS
from .schedulers import SchedulerSpec
from .streams import StreamSpec

FORMAT = "intermlearn-scenario/1"

TRACE_KEYS = {
    "solar": {"days": float, "peak_mw": float, "day_start_h": float, "day_end_h": float, "resolution_s": float,
              "dropouts_per_day": float, "dropout_mean_s": float, "dropout_factor": float},
    "rf": {"tiers": str, "jitter": float, "resolution_s": float},
    "piezo": {"blocks": str, "gentle_mw": float, "abrupt_mw": float, "jitter": float, "resolution_s": float},
    "constant": {"power_mw": float, "duration_s": float},
    "file": {"path": str},
}


class ScenarioError(ValueError):
    """Malformed scenario text; ``lineno`` is 1-based (0 when not tied to a line)."""

    def __init__(self, message: str, lineno: int = 0, source: str = "<scenario>"):
        self.lineno = lineno
        self.source = source
        where = f"{source}:{lineno}: " if lineno else f"{source}: "
        super().__init__(where + message)


def _pairs(text: str, cast) -> list:
    out = []
    for part in text.split(","):
        name, _, dur = part.strip().partition(":")
        out.append((cast(name.strip()), float(dur)))
    return out


@dataclass(frozen=True)
class TraceSpec:
    kind: str = "constant"
    params: tuple = ()

    def __post_init__(self):
        if self.kind not in TRACE_KEYS:
            raise ContractViolation(f"unknown trace kind {self.kind!r}")
        allowed = TRACE_KEYS[self.kind]
        for k, _ in self.params:
            if k not in allowed:
                raise ContractViolation(f"trace kind {self.kind!r} has no parameter {k!r}")
        object.__setattr__(self, "params", tuple(sorted(self.params)))

    @classmethod
    def of(cls, kind: str, **params) -> "TraceSpec":
        return cls(kind, tuple(params.items()))

    def build(self, seed: int = 0, base_dir: Optional[Path] = None) -> HarvesterTrace:
        p = dict(self.params)
        if self.kind == "solar":
            return solar_diurnal(seed=seed, **p)
        if self.kind == "rf":
            if "tiers" in p:
                p["tiers"] = _pairs(p["tiers"], int)
            return rf_distance(seed=seed, **p)
        if self.kind == "piezo":
            if "blocks" in p:
                p["blocks"] = _pairs(p["blocks"], str)
            return piezo_shaking(seed=seed, **p)
        if self.kind == "constant":
            return constant_trace(p.get("power_mw", 10.0), p.get("duration_s", 3600.0))
        path = Path(p["path"])
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        return HarvesterTrace.from_csv(path)


@dataclass(frozen=True)
class EnergySpec:
    """Storage capacitor; ``wake_threshold_mj`` is the energy above cutoff needed to wake
    (``None``: the cheapest action in the cost table)."""

    capacitance: float = 0.2
    max_voltage: float = 3.3
    cutoff_voltage: float = 2.0
    initial_voltage: float = 2.0
    wake_threshold_mj: Optional[float] = None

    def __post_init__(self):
        if not 0 <= self.initial_voltage <= self.max_voltage:
            raise ContractViolation("initial_voltage must lie in [0, max_voltage]")
        Capacitor.at(self.capacitance, self.initial_voltage, self.max_voltage, self.cutoff_voltage)
        if self.wake_threshold_mj is not None and self.wake_threshold_mj < 0:
            raise ContractViolation("wake_threshold_mj must be non-negative")

    def capacitor(self) -> Capacitor:
        return Capacitor.at(self.capacitance, self.initial_voltage, self.max_voltage, self.cutoff_voltage)


@dataclass(frozen=True)
class LearnerSpec:
    kind: str = "knn"
    features: str = "air"
    k: int = 5
    capacity: int = 30
    percentile: float = 90.0
    n_clusters: int = 2
    eta: float = 0.05
    harmonic: bool = False
    labeled_buffer: int = 32

    def __post_init__(self):
        if self.kind not in ("knn", "kmeans"):
            raise ContractViolation(f"unknown learner {self.kind!r}")
        try:
            FeatureSet.parse(self.features)
        except ValueError as exc:
            raise ContractViolation(str(exc)) from None
        if not 0 < self.eta <= 1:
            raise ContractViolation("eta must lie in (0, 1]")
        if self.k < 1 or self.capacity <= self.k or self.n_clusters < 1 or self.labeled_buffer < 1:
            raise ContractViolation("need k >= 1, capacity > k, n_clusters >= 1, labeled_buffer >= 1")
        if not 0 < self.percentile <= 100:
            raise ContractViolation("percentile must lie in (0, 100]")

    @property
    def feature_set(self) -> FeatureSet:
        return FeatureSet.parse(self.features)


@dataclass(frozen=True)
class SelectionSpec:
    heuristic: str = "none"
    k: int = 3
    p: float = 0.5

    def __post_init__(self):
        if self.heuristic not in HEURISTICS:
            raise ContractViolation(f"heuristic must be one of {HEURISTICS}")
        if self.k < 1 or not 0 <= self.p <= 1:
            raise ContractViolation("need k >= 1 and p in [0, 1]")


@dataclass(frozen=True)
class FaultSpec:
    rate_per_s: float = 0.0
    times: tuple = ()

    def __post_init__(self):
        if self.rate_per_s < 0 or any(t < 0 for t in self.times):
            raise ContractViolation("fault rate and times must be non-negative")
        object.__setattr__(self, "times", tuple(float(t) for t in self.times))


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything needed to run one deterministic episode.

    ``duration_s`` of 0 runs until the trace ends. ``holdout`` is the size of
    the balanced held-out set scored after every learn.
    """

    name: str = "scenario"
    seed: int = 0
    duration_s: float = 0.0
    holdout: int = 100
    trace: TraceSpec = field(default_factory=TraceSpec)
    energy: EnergySpec = field(default_factory=EnergySpec)
    learner: LearnerSpec = field(default_factory=LearnerSpec)
    selection: SelectionSpec = field(default_factory=SelectionSpec)
    goal: GoalSpec = field(default_factory=GoalSpec)
    planner: PlanConfig = field(default_factory=PlanConfig)
    stream: StreamSpec = field(default_factory=StreamSpec)
    scheduler: SchedulerSpec = field(default_factory=SchedulerSpec)
    faults: FaultSpec = field(default_factory=FaultSpec)
    base_dir: Optional[str] = field(default=None, compare=False)

    def __post_init__(self):
        if self.duration_s < 0 or self.holdout < 0:
            raise ContractViolation("duration_s and holdout must be non-negative")

    def sub_seeds(self) -> dict:
        """Independent seeds for each source of randomness."""
        names = ("stream", "scheduler", "planner", "faults", "holdout", "trace")
        children = np.random.SeedSequence(self.seed).spawn(len(names))
        return {n: int(c.generate_state(1)[0]) for n, c in zip(names, children)}

    def build_trace(self) -> HarvesterTrace:
        base = Path(self.base_dir) if self.base_dir else None
        return self.trace.build(self.sub_seeds()["trace"], base)

    def with_(self, **changes) -> "ScenarioConfig":
        """Copy with top-level or dotted (``"selection.heuristic"``) fields replaced."""
        out = self
        for key, value in changes.items():
            section, _, name = key.replace("__", ".").partition(".")
            if name:
                out = replace(out, **{section: replace(getattr(out, section), **{name: value})})
            else:
                out = replace(out, **{section: value})
        return out


# ---- text format -----------------------------------------------------------------

SECTIONS = {
    "energy": EnergySpec,
    "learner": LearnerSpec,
    "selection": SelectionSpec,
    "goal": GoalSpec,
    "planner": PlanConfig,
    "stream": StreamSpec,
    "scheduler": SchedulerSpec,
    "faults": FaultSpec,
}
SCENARIO_KEYS = {"name": str, "seed": int, "duration_s": float, "holdout": int}
OPTIONAL_TYPES = {("planner", "horizon"): int, ("energy", "wake_threshold_mj"): float}


def _bool(text: str) -> bool:
    t = text.lower()
    if t in ("true", "yes", "on", "1"):
        return True
    if t in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _caster(section: str, f: dataclasses.Field):
    if (section, f.name) in OPTIONAL_TYPES:
        base = OPTIONAL_TYPES[(section, f.name)]
        return lambda s: None if s.lower() in ("none", "") else base(s)
    default = f.default if f.default is not dataclasses.MISSING else f.default_factory()
    if isinstance(default, bool):
        return _bool
    if isinstance(default, int):
        return int
    if isinstance(default, float):
        return float
    if isinstance(default, tuple):
        return lambda s: tuple(float(v) for v in s.split(",") if v.strip())
    return str


def _section_keys(section: str) -> dict:
    return {f.name: _caster(section, f) for f in fields(SECTIONS[section])}


def parse_scenario(text: str, source: str = "<scenario>", base_dir=None) -> ScenarioConfig:
    """Parse scenario text; raises :class:`ScenarioError` with the offending line."""
    header_seen = False
    section = None
    values: dict = {name: {} for name in (*SECTIONS, "scenario", "trace")}
    where: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith(("#", ";")):
            continue
        if not header_seen:
            key, sep, val = line.partition("=")
            if not sep or key.strip() != "format":
                raise ScenarioError(f"first line must be 'format = {FORMAT}'", lineno, source)
            if val.strip() != FORMAT:
                raise ScenarioError(f"unsupported format {val.strip()!r} (expected {FORMAT})", lineno, source)
            header_seen = True
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ScenarioError(f"malformed section header {line!r}", lineno, source)
            section = line[1:-1].strip()
            if section not in values:
                raise ScenarioError(f"unknown section [{section}]", lineno, source)
            continue
        key, sep, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if not sep or not key:
            raise ScenarioError(f"expected 'key = value', got {line!r}", lineno, source)
        if section is None:
            raise ScenarioError(f"key {key!r} outside any section", lineno, source)
        if key in values[section]:
            raise ScenarioError(f"duplicate key {key!r} in [{section}]", lineno, source)
        if section == "scenario":
            keys = SCENARIO_KEYS
        elif section == "trace":
            keys = None
        else:
            keys = _section_keys(section)
        if keys is not None:
            if key not in keys:
                raise ScenarioError(f"unknown key {key!r} in [{section}] (known: {', '.join(keys)})", lineno, source)
            try:
                val = keys[key](val)
            except ValueError as exc:
                raise ScenarioError(f"bad value for {key!r}: {exc}", lineno, source) from None
        values[section][key] = val
        where[(section, key)] = lineno
    if not header_seen:
        raise ScenarioError(f"missing 'format = {FORMAT}' header", 0, source)

    def build(section, cls, kwargs):
        try:
            return cls(**kwargs)
        except (ContractViolation, TypeError, ValueError) as exc:
            line = min((where[(section, k)] for k in kwargs), default=0)
            raise ScenarioError(f"[{section}] {exc}", line, source) from None

    tr = dict(values["trace"])
    kind = tr.pop("kind", "constant")
    if kind not in TRACE_KEYS:
        raise ScenarioError(f"unknown trace kind {kind!r}", where.get(("trace", "kind"), 0), source)
    params = []
    for k, v in tr.items():
        if k not in TRACE_KEYS[kind]:
            raise ScenarioError(f"trace kind {kind!r} has no parameter {k!r}", where[("trace", k)], source)
        try:
            params.append((k, TRACE_KEYS[kind][k](v)))
        except ValueError as exc:
            raise ScenarioError(f"bad value for {k!r}: {exc}", where[("trace", k)], source) from None
    for k in ("tiers", "blocks"):
        v = dict(params).get(k)
        if v is not None:
            try:
                _pairs(v, int if k == "tiers" else str)
            except ValueError:
                raise ScenarioError(f"{k} must look like 'a:seconds, b:seconds'", where[("trace", k)], source) from None
    trace = build("trace", TraceSpec, {"kind": kind, "params": tuple(params)})
    parts = {name: build(name, cls, values[name]) for name, cls in SECTIONS.items()}
    sc = values["scenario"]
    try:
        return ScenarioConfig(**sc, trace=trace, **parts, base_dir=None if base_dir is None else str(base_dir))
    except ContractViolation as exc:
        raise ScenarioError(str(exc), 0, source) from None


def load_scenario(path) -> ScenarioConfig:
    """Read and parse a scenario file (``OSError`` propagates for I/O failures)."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    return parse_scenario(text, source=str(path), base_dir=path.parent)


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if v is None:
        return "none"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ", ".join(repr(float(x)) for x in v)
    return str(v)


def dump_scenario(cfg: ScenarioConfig) -> str:
    """Scenario text that parses back to an equal config."""
    lines = [f"format = {FORMAT}", "", "[scenario]"]
    lines += [f"{k} = {_fmt(getattr(cfg, k))}" for k in SCENARIO_KEYS]
    lines += ["", "[trace]", f"kind = {cfg.trace.kind}"]
    lines += [f"{k} = {_fmt(v)}" for k, v in cfg.trace.params]
    for name in SECTIONS:
        obj = getattr(cfg, name)
        lines += ["", f"[{name}]"]
        lines += [f"{f.name} = {_fmt(getattr(obj, f.name))}" for f in fields(obj)]
    return "\n".join(lines) + "\n"


# ---- presets -----------------------------------------------------------------------

def air_quality(seed: int = 0, days: float = 3.0, **changes) -> ScenarioConfig:
    """Solar-harvesting air-quality node learning kNN anomaly detection."""
    cfg = ScenarioConfig(
        name="air_quality", seed=seed,
        trace=TraceSpec.of("solar", days=days, peak_mw=0.25),
        energy=EnergySpec(capacitance=0.2, max_voltage=3.3, cutoff_voltage=2.0, initial_voltage=2.0),
        learner=LearnerSpec(kind="knn", features="air"),
        goal=GoalSpec(learn_rate_target=1.0, learn_count_target=30, infer_rate_target=1.0, horizon_cycles=4),
        stream=StreamSpec(kind="air", anomaly_rate=0.1, anomaly_magnitude=4.0),
    )
    return cfg.with_(**changes)


def human_presence(seed: int = 0, tiers: str = "3:1200, 5:1200, 7:1200", **changes) -> ScenarioConfig:
    """RF-harvesting presence detector (kNN over RSSI windows) at several distances."""
    cfg = ScenarioConfig(
        name="human_presence", seed=seed,
        trace=TraceSpec.of("rf", tiers=tiers),
        energy=EnergySpec(capacitance=0.05, max_voltage=3.3, cutoff_voltage=2.0, initial_voltage=2.0),
        learner=LearnerSpec(kind="knn", features="rf"),
        stream=StreamSpec(kind="rf", anomaly_rate=0.05, anomaly_magnitude=6.0, relocate_every=0),
    )
    return cfg.with_(**changes)


def vibration(seed: int = 0, blocks: str = "gentle:900, abrupt:900, gentle:900, abrupt:900", **changes) -> ScenarioConfig:
    """Piezo-harvesting vibration monitor with competitive k-means and cluster-then-label."""
    cfg = ScenarioConfig(
        name="vibration", seed=seed,
        trace=TraceSpec.of("piezo", blocks=blocks),
        energy=EnergySpec(capacitance=0.006, max_voltage=3.3, cutoff_voltage=2.0, initial_voltage=2.0),
        learner=LearnerSpec(kind="kmeans", features="vibration", n_clusters=2, eta=0.1),
        goal=GoalSpec(learn_rate_target=1.0, learn_count_target=60, infer_rate_target=1.0, horizon_cycles=4),
        stream=StreamSpec(kind="vibration", label_mode="blocks", block_len=40, anomaly_magnitude=10.0,
                          labeled_fraction=0.25),
    )
    return cfg.with_(**changes)


PRESETS = {"air_quality": air_quality, "human_presence": human_presence, "vibration": vibration}
