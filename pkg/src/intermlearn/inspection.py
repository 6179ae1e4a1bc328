"""Pre-deployment energy check: does every sub-step fit the per-wake budget?

Each program is run under continuous power on every corpus input. The charge
of a sub-step is its cost-table entry, optionally scaled by a data-dependent
multiplier, and the report keeps the maximum over the corpus.
"""

from __future__ import annotations

import csv
import enum
import io
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

from ._io import atomic_write_text, fmt_float, parse_float
from .core import ActionKind, ContractViolation
from .energy import CostTable
from .runtime.execution import ActionProgram, NvStore

REPORT_HEADER = ("action", "substep", "max_energy_mj", "max_time_ms", "budget_mj", "verdict")

Multiplier = Callable[[object], float]


class Verdict(enum.Enum):
    Pass = "pass"
    Fail = "fail"


@dataclass(frozen=True)
class SubStepReport:
    max_energy_mj: float
    max_time_ms: float
    budget_mj: float

    @property
    def verdict(self) -> Verdict:
        return Verdict.Fail if self.max_energy_mj > self.budget_mj else Verdict.Pass

    def merge(self, other: "SubStepReport") -> "SubStepReport":
        return SubStepReport(max(self.max_energy_mj, other.max_energy_mj),
                             max(self.max_time_ms, other.max_time_ms), self.budget_mj)


@dataclass
class InspectionReport:
    """Worst observed energy and time per (action, sub-step).

    ``errors`` lists sub-steps that raised on some input; they are reported,
    never re-raised.
    """

    budget_mj: float
    entries: dict = field(default_factory=dict)
    corpus_size: int = 0
    errors: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(e.verdict is Verdict.Pass for e in self.entries.values())

    def failures(self) -> list[tuple[ActionKind, int]]:
        return [k for k, e in self.entries.items() if e.verdict is Verdict.Fail]

    def observe(self, key: tuple, energy: float, time_ms: float) -> None:
        new = SubStepReport(energy, time_ms, self.budget_mj)
        old = self.entries.get(key)
        self.entries[key] = new if old is None else old.merge(new)

    def merge(self, other: "InspectionReport") -> "InspectionReport":
        if other.budget_mj != self.budget_mj:
            raise ContractViolation("cannot merge reports with different budgets")
        out = InspectionReport(self.budget_mj, dict(self.entries), self.corpus_size + other.corpus_size,
                               self.errors + other.errors)
        for k, e in other.entries.items():
            out.entries[k] = e if k not in out.entries else out.entries[k].merge(e)
        return out

    def _sorted(self):
        order = {k: i for i, k in enumerate(ActionKind)}
        return sorted(self.entries.items(), key=lambda kv: (order[kv[0][0]], kv[0][1]))

    def to_csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(REPORT_HEADER)
        for (kind, idx), e in self._sorted():
            w.writerow([kind.value, idx, fmt_float(e.max_energy_mj), fmt_float(e.max_time_ms),
                        fmt_float(e.budget_mj), e.verdict.value])
        return buf.getvalue()

    def to_csv(self, path) -> None:
        atomic_write_text(path, self.to_csv_text())

    @classmethod
    def from_csv_text(cls, text: str, corpus_size: int = 0) -> "InspectionReport":
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or tuple(rows[0]) != REPORT_HEADER:
            raise ValueError("not an inspection report CSV (header mismatch)")
        budget = parse_float(rows[1][4]) if len(rows) > 1 else 0.0
        rep = cls(budget, corpus_size=corpus_size)
        for r in rows[1:]:
            rep.entries[(ActionKind.parse(r[0]), int(r[1]))] = SubStepReport(
                parse_float(r[2]), parse_float(r[3]), parse_float(r[4]))
        return rep


def _run(prog: ActionProgram, store: NvStore, costs: CostTable, report: InspectionReport,
         multipliers: dict) -> NvStore:
    for i, sub in enumerate(prog.sub_steps):
        scale = 1.0
        fn = multipliers.get(sub.cost_key)
        if fn is not None:
            scale = float(fn(store.view()))
        c = costs.cost(*sub.cost_key)
        report.observe(sub.cost_key, c.energy_mj * scale, c.duration_ms * scale)
        try:
            delta, _ = sub.fn(store.view(), {})
        except Exception as exc:  # reported, not raised
            report.errors.append((sub.cost_key, repr(exc)))
            return store
        store = store.apply(delta)
    return store


def inspect(programs: Iterable[ActionProgram], costs: CostTable, budget: float, corpus: list,
            multipliers: Optional[dict] = None) -> InspectionReport:
    """Run every program on every corpus store and report per-sub-step maxima.

    ``corpus`` holds :class:`NvStore` inputs; programs are applied to each one in
    order, so later programs see what earlier ones committed. ``multipliers``
    maps a cost key ``(ActionKind, sub-step)`` to a function of the store view
    giving a data-dependent cost factor.
    """
    if not corpus:
        raise ContractViolation("inspection needs a non-empty corpus")
    programs = list(programs)
    multipliers = multipliers or {}
    report = InspectionReport(float(budget), corpus_size=len(corpus))
    for store in corpus:
        for prog in programs:
            store = _run(prog, store, costs, report, multipliers)
    return report


def inspect_app(app, windows, costs: CostTable, budget: float, multipliers: Optional[dict] = None,
                labels=None) -> InspectionReport:
    """Inspect an application's full action pipeline over a list of sensor windows.

    The model grows as the corpus is processed, like it would on the device,
    so store-size dependent multipliers see the largest store at the end.
    """
    windows = list(windows)
    if not windows:
        raise ContractViolation("inspection needs a non-empty corpus")
    labels = list(labels) if labels is not None else [None] * len(windows)
    multipliers = multipliers or {}
    report = InspectionReport(float(budget), corpus_size=len(windows))
    store = app.initial_store()
    for i, (w, y) in enumerate(zip(windows, labels), start=1):
        for kind in ActionKind:
            prog = app.program(kind, i, window=w, label=y, t=float(i))
            store = _run(prog, store, costs, report, multipliers)
        store = store.apply(app.leave_delta(store, i))
    return report


def store_size_multiplier(slot: str = "model", ref_bytes: Optional[int] = None) -> Multiplier:
    """Cost factor proportional to a slot's size relative to ``ref_bytes`` (at least 1)."""

    def scale(view) -> float:
        n = len(view.get(slot, b""))
        return 1.0 if not ref_bytes else max(1.0, n / ref_bytes)

    return scale
