"""Episode loop: wake, plan, execute, log, repeat until the trace ends."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, replace
from typing import NamedTuple, Optional

import numpy as np

from .._io import atomic_write_text, fmt_float, parse_float
from ..apps import make_app
from ..core import ActionKind, ContractViolation, SystemState, Transition
from ..energy import Capacitor, EnergyLedger, can_execute, kmeans_costs, knn_costs, next_wakeup, step_detailed
from ..harness.metrics import MetricsFrame, MetricsRecorder, accuracy
from ..harness.scenario import ScenarioConfig
from ..harness.schedulers import duty_cycle_schedule
from ..harness.streams import gen_stream
from ..planner import Planner, PlanStats
from .execution import FaultInjector, NvStore, Status, TraceExhausted, execute_action

A = ActionKind
LOG_HEADER = ("t_s", "action", "substep", "example_id", "energy_before_mj", "energy_after_mj", "outcome", "decision")


class LogRow(NamedTuple):
    t_s: float
    action: str
    substep: int
    example_id: Optional[int]
    energy_before_mj: float
    energy_after_mj: float
    outcome: str
    decision: str


class EpisodeLog:
    """One row per sub-step attempt, plus ``plan``, ``sleep`` and ``leave`` rows.

    Sub-step outcomes are ``commit``, ``done`` (the action's last sub-step)
    and ``fault``.
    """

    def __init__(self, rows=None):
        self.rows: list[LogRow] = [LogRow(*r) for r in (rows or [])]

    def __len__(self):
        return len(self.rows)

    def __eq__(self, other):
        return isinstance(other, EpisodeLog) and self.rows == other.rows

    __hash__ = None

    def append(self, *fields) -> None:
        self.rows.append(LogRow(*fields))

    def completed_actions(self) -> list[tuple[int, ActionKind]]:
        """(example id, action) for every completed action, in order."""
        return [(r.example_id, ActionKind.parse(r.action)) for r in self.rows if r.outcome == "done"]

    def histories(self) -> dict[int, list[ActionKind]]:
        out: dict[int, list[ActionKind]] = {}
        for eid, act in self.completed_actions():
            out.setdefault(eid, []).append(act)
        return out

    def count(self, action: ActionKind) -> int:
        return sum(1 for r in self.rows if r.outcome == "done" and r.action == action.value)

    def to_csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(LOG_HEADER)
        for r in self.rows:
            w.writerow([fmt_float(r.t_s), r.action, r.substep, "" if r.example_id is None else r.example_id,
                        fmt_float(r.energy_before_mj), fmt_float(r.energy_after_mj), r.outcome, r.decision])
        return buf.getvalue()

    def to_csv(self, path) -> None:
        atomic_write_text(path, self.to_csv_text())

    @classmethod
    def from_csv_text(cls, text: str) -> "EpisodeLog":
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or tuple(rows[0]) != LOG_HEADER:
            raise ValueError("not an episode log CSV (header mismatch)")
        out = []
        for r in rows[1:]:
            out.append(LogRow(float(r[0]), r[1], int(r[2]), None if r[3] == "" else int(r[3]),
                              parse_float(r[4]), parse_float(r[5]), r[6], r[7]))
        return cls(out)

    @classmethod
    def from_csv(cls, path) -> "EpisodeLog":
        with open(path, encoding="utf-8") as fh:
            return cls.from_csv_text(fh.read())


@dataclass
class EpisodeResult:
    config: ScenarioConfig
    log: EpisodeLog
    metrics: MetricsFrame
    ledger: EnergyLedger
    cap: Capacitor
    store: NvStore
    state: SystemState
    t_end: float
    plan_stats: PlanStats
    faults_fired: int = 0

    @property
    def learned(self) -> int:
        return self.log.count(A.Learn)

    @property
    def inferred(self) -> int:
        return self.log.count(A.Infer)

    @property
    def energy_used(self) -> float:
        return self.ledger.drained

    @property
    def final_accuracy(self) -> float:
        return self.metrics.last()["holdout_accuracy"]

    def conservation_residual(self) -> float:
        return self.ledger.residual(self.cap.energy_mj)

    def summary(self) -> dict:
        acc = self.metrics.column("accuracy")
        acc = acc[~np.isnan(acc)]
        return {
            "name": self.config.name,
            "seed": self.config.seed,
            "scheduler": self.config.scheduler.kind,
            "heuristic": self.config.selection.heuristic,
            "learn_actions": self.learned,
            "infer_actions": self.inferred,
            "energy_mj": self.energy_used,
            "final_holdout_accuracy": self.final_accuracy,
            "mean_inference_accuracy": float(acc.mean()) if len(acc) else math.nan,
        }


def build_costs(cfg: ScenarioConfig):
    make = knn_costs if cfg.learner.kind == "knn" else kmeans_costs
    return make(cfg.selection.heuristic)


def build_app(cfg: ScenarioConfig, seed: int):
    L = cfg.learner
    kw = dict(heuristic=cfg.selection.heuristic, select_k=cfg.selection.k, select_p=cfg.selection.p, seed=seed)
    if L.kind == "knn":
        return make_app("knn", L.feature_set, k=L.k, capacity=L.capacity, percentile=L.percentile, **kw)
    return make_app("kmeans", L.feature_set, n_clusters=L.n_clusters, eta=L.eta, harmonic=L.harmonic,
                    labeled_buffer=L.labeled_buffer, **kw)


class _Episode:
    """Mutable state of one running episode."""

    def __init__(self, cfg: ScenarioConfig):
        self.cfg = cfg
        seeds = cfg.sub_seeds()
        self.trace = cfg.build_trace()
        self.costs = build_costs(cfg)
        self.app = build_app(cfg, seeds["scheduler"])
        self.stream = gen_stream(cfg.stream, seeds["stream"])
        held = self.stream.holdout(cfg.holdout, seeds["holdout"])
        self.hold_f = np.array([self.app.extract(s.window) for s in held]).reshape(len(held), -1)
        self.hold_y = np.array([s.label for s in held])
        self.cap = cfg.energy.capacitor()
        self.ledger = EnergyLedger(initial=self.cap.energy_mj)
        self.store = self.app.initial_store()
        self.state = SystemState()
        f = cfg.faults
        self.faults = (FaultInjector(f.times, f.rate_per_s, np.random.default_rng(seeds["faults"]))
                       if (f.times or f.rate_per_s > 0) else None)
        self.planner = Planner(cfg.goal, self.costs, cfg.planner, seeds["planner"])
        self.sched_rng = np.random.default_rng(seeds["scheduler"] + 1)
        self.duty = cfg.scheduler.kind == "duty_cycle"
        self.horizon = min(self.trace.end, cfg.duration_s or math.inf)
        self.t = self.trace.start
        wake = cfg.energy.wake_threshold_mj
        self.wake = self.costs.cheapest() if wake is None else wake
        self.log = EpisodeLog()
        self.rec = MetricsRecorder()
        self.sensed = 0
        self.truth: dict[int, int] = {}
        self.created: dict[int, float] = {}

    # -- energy helpers ----------------------------------------------------------

    def sleep_until(self, energy: float) -> None:
        if can_execute(self.cap, energy):
            return
        t_w = next_wakeup(self.cap, self.trace, self.t, energy)
        if t_w is None or t_w > self.horizon:
            raise TraceExhausted(self.store, self.cap, self.t)
        before = self.cap.energy_mj
        self.cap = self.ledger.add(step_detailed(self.cap, self.trace, self.t, t_w - self.t, 0.0))
        self.log.append(self.t, "sleep", 0, None, before, self.cap.energy_mj, "wake", "")
        self.t = t_w

    def charge_planner(self) -> tuple[float, float]:
        po = self.costs.planner_overhead
        before = self.cap.energy_mj
        res = step_detailed(self.cap, self.trace, self.t, po.duration_s, po.energy_mj)
        self.cap = self.ledger.add(res, ("plan", 0, None))
        t0, self.t = self.t, self.t + po.duration_s
        return t0, before

    # -- actions -----------------------------------------------------------------

    def record(self, holdout=None):
        self.rec.record(self.t, self.ledger.drained, self.state.learned_count, self.state.inferred_count, holdout)

    def leave(self, eid: int, outcome: str, decision: str = "") -> None:
        e = self.cap.energy_mj
        self.store = self.store.apply(self.app.leave_delta(self.store, eid))
        self.state = self.state.without(eid)
        self.created.pop(eid, None)
        self.log.append(self.t, "leave", 0, eid, e, e, outcome, decision)

    def run(self, kind: ActionKind, eid: int, decision: str, **prog_kw) -> bool:
        prog = self.app.program(kind, eid, **prog_kw)
        out, self.store, self.cap, self.t = execute_action(
            prog, self.store, self.cap, self.trace, self.t, self.costs, faults=self.faults,
            ledger=self.ledger, log=self.log.append, until=self.horizon, decision=decision,
        )
        return out.status is Status.Completed

    def admit(self, decision: str) -> None:
        eid = self.state.next_id
        s = self.stream.sample(self.sensed)
        t0 = self.t
        if self.run(A.Sense, eid, decision, window=s.window, label=s.label if s.exposed else None, t=t0):
            self.sensed += 1
            self.truth[eid] = s.label
            self.created[eid] = t0
            self.state = self.state.admitted()
            self.rec.counts[A.Sense] += 1
            self.record()

    def advance(self, tr: Transition, decision: str) -> None:
        eid = tr.example_id
        for act in tr.actions:
            if not self.run(act, eid, decision):
                return
            self.state = self.state.with_action(eid, act)
            self.rec.counts[act] += 1
            holdout = None
            if act is A.Learn:
                if self.duty:
                    self.state = replace(self.state, learned_count=self.state.learned_count + 1)
                holdout = accuracy(self.app.predict_features(self.store, self.hold_f), self.hold_y)
            elif act is A.Infer:
                self.rec.inference(self.app.inference(self.store, eid) == self.truth[eid])
            self.record(holdout)
            if act in (A.Select, A.Learnable) and not self.app.gate(self.store, eid):
                self.leave(eid, "discard", decision)
                return
            if self.duty and act in (A.Learn, A.Infer):
                self.leave(eid, "done", decision)

    def step(self) -> None:
        if self.duty:
            self.sleep_until(self.wake)
            d = duty_cycle_schedule(self.state, self.cfg.scheduler, self.sched_rng, self.t, self.created)
        else:
            po = self.costs.planner_overhead.energy_mj
            self.sleep_until(max(self.wake, po))
            t0, before = self.charge_planner()
            d = self.planner.plan(self.state, self.cap, infer_ready=self.app.ready(self.store))
            self.log.append(t0, "plan", 0, None, before, self.cap.energy_mj, "commit", str(d))
            if d.sleep:
                self.sleep_until(d.wake_cost + po)
                return
        tr, label = d.transition, str(d)
        if tr.kind == "leave":
            self.leave(tr.example_id, "stale" if self.duty else "planned", label)
        elif tr.kind == "admit":
            self.admit(label)
        else:
            self.advance(tr, label)


def run_episode(cfg: ScenarioConfig) -> EpisodeResult:
    """Simulate one episode of ``cfg``; deterministic given the scenario seed.

    Stops when the trace or ``cfg.duration_s`` ends, including while waiting
    for energy mid-action (the store then keeps its pre-action contents).
    """
    if not isinstance(cfg, ScenarioConfig):
        raise ContractViolation("run_episode needs a ScenarioConfig")
    ep = _Episode(cfg)
    try:
        while ep.t < ep.horizon:
            ep.step()
    except TraceExhausted as exc:
        # an interrupted action is as if it never ran
        ep.store, ep.cap, ep.t = exc.store, exc.cap, exc.t
    return EpisodeResult(cfg, ep.log, ep.rec.frame, ep.ledger, ep.cap, ep.store, ep.state, ep.t,
                         ep.planner.stats, ep.faults.fired if ep.faults else 0)
