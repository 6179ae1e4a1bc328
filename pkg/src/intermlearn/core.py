"""Domain types and the legal action orderings of an intermittent learner."""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np


class ContractViolation(ValueError):
    """Raised when an operation is called outside its precondition."""


class ActionKind(enum.Enum):
    """The eight action primitives a learning task is composed of."""

    Sense = "sense"
    Extract = "extract"
    Decide = "decide"
    Select = "select"
    Learnable = "learnable"
    Learn = "learn"
    Evaluate = "evaluate"
    Infer = "infer"

    @property
    def role(self) -> str:
        return _ROLES[self]

    @property
    def order(self) -> int:
        return _ORDER[self]

    @classmethod
    def parse(cls, text: str) -> "ActionKind":
        text = text.strip().lower()
        for kind in cls:
            if kind.value == text:
                return kind
        raise ValueError(f"unknown action {text!r}")


_ROLES = {
    ActionKind.Sense: "Sense and convert data to an example.",
    ActionKind.Extract: "Extract features from an example.",
    ActionKind.Decide: "Decide to learn or infer.",
    ActionKind.Select: "Determine whether a training example increases the learning performance.",
    ActionKind.Learnable: "Check prerequisites of a learn action.",
    ActionKind.Learn: "Execute a learning algorithm intermittently.",
    ActionKind.Evaluate: "Evaluate the learning performance.",
    ActionKind.Infer: "Make an inference using the current model.",
}

_ORDER = {kind: i for i, kind in enumerate(ActionKind)}

# Outgoing edges of the action state diagram, in tie-break order.
EDGES: dict[ActionKind, tuple[ActionKind, ...]] = {
    ActionKind.Sense: (ActionKind.Extract,),
    ActionKind.Extract: (ActionKind.Decide,),
    ActionKind.Decide: (ActionKind.Select, ActionKind.Infer),
    ActionKind.Select: (ActionKind.Learnable,),
    ActionKind.Learnable: (ActionKind.Learn,),
    ActionKind.Learn: (ActionKind.Evaluate,),
    ActionKind.Evaluate: (),
    ActionKind.Infer: (),
}

# Boolean gates whose negative outcome discards the example.
DISCARDABLE = frozenset({ActionKind.Select, ActionKind.Learnable})

# Actions after which the example may leave the system.
LEAVABLE = DISCARDABLE | {ActionKind.Evaluate, ActionKind.Infer}

DEFAULT_ADMIT_CAP = 2


@dataclass
class Example:
    """A sensed window moving through the action pipeline."""

    id: int
    raw_window: np.ndarray
    features: Optional[np.ndarray] = None
    last_action: Optional[ActionKind] = None
    created_at: float = 0.0
    label: Optional[int] = None

    def __post_init__(self):
        extracted = self.last_action is not None and self.last_action.order >= ActionKind.Extract.order
        if extracted != (self.features is not None):
            raise ContractViolation(
                f"example {self.id}: features must be present iff extracted (last_action={self.last_action})"
            )


@dataclass(frozen=True)
class Transition:
    """One planner step.

    ``kind`` is ``"admit"`` (sense a new example), ``"advance"`` (run the next
    action(s) on an example) or ``"leave"`` (the example exits the system).
    ``actions`` holds the executed actions in order; it has two entries when a
    decide step is fused with its successor.
    """

    kind: str
    example_id: int
    actions: tuple[ActionKind, ...] = ()

    @property
    def target(self) -> Optional[ActionKind]:
        return self.actions[-1] if self.actions else None

    def __str__(self):
        acts = "+".join(a.value for a in self.actions) or "-"
        return f"{self.kind}({self.example_id}:{acts})"


@dataclass(frozen=True)
class SystemState:
    """Set of (example id, most recent action) tuples plus goal counters.

    ``tuples`` is kept sorted by example id so iteration is deterministic.
    ``next_id`` is the id the next admitted example receives.
    """

    tuples: tuple[tuple[int, ActionKind], ...] = ()
    learned_count: int = 0
    inferred_count: int = 0
    next_id: int = 1

    def __post_init__(self):
        ids = [u for u, _ in self.tuples]
        if len(set(ids)) != len(ids):
            raise ContractViolation("an example id appears in more than one tuple")
        if ids != sorted(ids):
            object.__setattr__(self, "tuples", tuple(sorted(self.tuples, key=lambda p: p[0])))
        if ids and self.next_id <= max(ids):
            object.__setattr__(self, "next_id", max(ids) + 1)

    @classmethod
    def of(cls, pairs: Sequence[tuple[int, ActionKind]] = (), **kw) -> "SystemState":
        return cls(tuple(sorted(pairs, key=lambda p: p[0])), **kw)

    def __len__(self):
        return len(self.tuples)

    def __contains__(self, item):
        return item in self.tuples

    def action_of(self, example_id: int) -> ActionKind:
        for u, v in self.tuples:
            if u == example_id:
                return v
        raise ContractViolation(f"example {example_id} is not in the system")

    def with_action(self, example_id: int, action: ActionKind) -> "SystemState":
        pairs = tuple((u, action if u == example_id else v) for u, v in self.tuples)
        learned = self.learned_count + (action is ActionKind.Evaluate)
        inferred = self.inferred_count + (action is ActionKind.Infer)
        return replace(self, tuples=pairs, learned_count=learned, inferred_count=inferred)

    def without(self, example_id: int) -> "SystemState":
        return replace(self, tuples=tuple(p for p in self.tuples if p[0] != example_id))

    def admitted(self) -> "SystemState":
        return replace(
            self, tuples=self.tuples + ((self.next_id, ActionKind.Sense),), next_id=self.next_id + 1
        )


@dataclass(frozen=True)
class GoalSpec:
    """Rate targets the planner steers toward.

    Phase one keeps ``learn_rate_target`` learns per ``horizon_cycles`` until
    ``learn_count_target`` examples are learned; phase two keeps
    ``infer_rate_target`` inferences per ``horizon_cycles``.
    """

    learn_rate_target: float = 1.0
    learn_count_target: int = 30
    infer_rate_target: float = 1.0
    horizon_cycles: int = 4

    def __post_init__(self):
        if min(self.learn_rate_target, self.learn_count_target, self.infer_rate_target) <= 0:
            raise ContractViolation("goal targets must be strictly positive")
        if self.horizon_cycles < 1:
            raise ContractViolation("horizon_cycles must be >= 1")

    def learning_phase(self, learned_count: int) -> bool:
        return learned_count < self.learn_count_target


def next_actions(state: SystemState, tup: tuple[int, ActionKind]) -> frozenset[ActionKind]:
    """Actions legal as the next step for ``tup``; empty means the example departs.

    Discard (for select/learnable) is not an action and is not included; see
    :data:`DISCARDABLE`.
    """
    if tup not in state.tuples:
        raise ContractViolation(f"{tup} is not a member of the state")
    return frozenset(EDGES[tup[1]])


def transitions(
    state: SystemState, admit_cap: int = DEFAULT_ADMIT_CAP
) -> list[tuple[Transition, SystemState]]:
    """All successor states of ``state`` in deterministic tie-break order.

    Admission comes first, then each tuple in ascending id with its diagram
    edges in order followed by its leave transition when one exists.
    """
    out = []
    if len(state.tuples) < admit_cap:
        out.append((Transition("admit", state.next_id, (ActionKind.Sense,)), state.admitted()))
    for u, v in state.tuples:
        for nxt in EDGES[v]:
            out.append((Transition("advance", u, (nxt,)), state.with_action(u, nxt)))
        if v in LEAVABLE:
            out.append((Transition("leave", u), state.without(u)))
    return out


def is_legal_sequence(actions: Sequence[ActionKind]) -> bool:
    """True if ``actions`` is a path through the action state diagram from sense."""
    if not actions or actions[0] is not ActionKind.Sense:
        return False
    return all(b in EDGES[a] for a, b in zip(actions, actions[1:]))
