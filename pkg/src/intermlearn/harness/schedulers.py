"""Duty-cycled baseline: a fixed sense, extract, learn-or-infer loop with no planner."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..core import ActionKind, ContractViolation, SystemState, Transition
from ..planner import ActionDecision

A = ActionKind


@dataclass(frozen=True)
class SchedulerSpec:
    """``kind`` is ``"planner"`` or ``"duty_cycle"``.

    For the duty cycle, ``interleave`` replaces the Bernoulli learn/infer draw
    by an evenly spread deterministic pattern, and ``mayfly`` discards
    examples older than ``staleness_s`` before they are learned or inferred.
    """

    kind: str = "planner"
    learn_pct: float = 90.0
    infer_pct: float = 10.0
    interleave: bool = False
    mayfly: bool = False
    staleness_s: float = 60.0

    def __post_init__(self):
        if self.kind not in ("planner", "duty_cycle"):
            raise ContractViolation(f"unknown scheduler {self.kind!r}")
        if self.kind == "duty_cycle":
            if min(self.learn_pct, self.infer_pct) < 0 or abs(self.learn_pct + self.infer_pct - 100.0) > 1e-9:
                raise ContractViolation("learn_pct + infer_pct must equal 100")
        if self.staleness_s <= 0:
            raise ContractViolation("staleness_s must be positive")

    @property
    def learn_fraction(self) -> float:
        return self.learn_pct / 100.0


def _learns_now(config: SchedulerSpec, cycle: int, rng) -> bool:
    p = config.learn_fraction
    if config.interleave:
        # cycle n learns iff the running quota floor((n+1)p) steps up
        return math.floor((cycle + 1) * p + 1e-12) > math.floor(cycle * p + 1e-12)
    return bool(rng.random() < p)


def duty_cycle_schedule(
    state: SystemState,
    config: SchedulerSpec,
    rng: Optional[np.random.Generator] = None,
    now: float = 0.0,
    created_at: Optional[dict] = None,
) -> ActionDecision:
    """Next step of the fixed loop for the (at most one) example in flight.

    The learn/infer choice is drawn when the example has been extracted;
    ``state.learned_count + state.inferred_count`` numbers the cycle for the
    interleaved pattern.
    """
    if len(state) > 1:
        raise ContractViolation("the duty cycle holds one example at a time")
    if not state.tuples:
        return ActionDecision(Transition("admit", state.next_id, (A.Sense,)))
    eid, last = state.tuples[0]
    if last is A.Sense:
        return ActionDecision(Transition("advance", eid, (A.Extract,)))
    if last is A.Extract:
        if config.mayfly and created_at is not None and now - created_at.get(eid, now) > config.staleness_s:
            return ActionDecision(Transition("leave", eid), score=math.inf)
        cycle = state.learned_count + state.inferred_count
        rng = rng if rng is not None else np.random.default_rng(0)
        act = A.Learn if _learns_now(config, cycle, rng) else A.Infer
        return ActionDecision(Transition("advance", eid, (act,)))
    return ActionDecision(Transition("leave", eid))
