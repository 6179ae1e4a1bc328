"""Finite-horizon action planner.

At each wake the planner enumerates trajectories of ``horizon`` transitions
from the current system state, scores each terminal node by its distance to the
current goal phase, and returns the first transition of the best trajectory.
Ties go to the first trajectory in transition order (admit first, then
ascending example id, then diagram edge order, then leave).
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .core import (
    DEFAULT_ADMIT_CAP,
    DISCARDABLE,
    EDGES,
    ActionKind,
    ContractViolation,
    GoalSpec,
    SystemState,
    Transition,
    transitions,
)
from .energy import Capacitor, CostTable, can_execute

A = ActionKind
SKIP = None


@dataclass(frozen=True)
class PlanConfig:
    """Search and pruning knobs.

    ``horizon`` of ``None`` uses the goal's ``horizon_cycles``.
    """

    horizon: Optional[int] = None
    admit_cap: int = DEFAULT_ADMIT_CAP
    p_bypass: float = 0.1
    fuse_decide: bool = False
    epsilon_energy: float = 1e-3

    def __post_init__(self):
        if self.horizon is not None and self.horizon < 1:
            raise ContractViolation("horizon must be >= 1")
        if self.admit_cap < 1:
            raise ContractViolation("admit_cap must be >= 1")
        if not 0.0 <= self.p_bypass <= 1.0:
            raise ContractViolation("p_bypass must lie in [0, 1]")
        if self.epsilon_energy < 0:
            raise ContractViolation("epsilon_energy must be non-negative")

    @classmethod
    def exhaustive(cls, **kw) -> "PlanConfig":
        """No random bypass and no fusion; the search covers every trajectory."""
        return cls(p_bypass=0.0, fuse_decide=False, **kw)


@dataclass(frozen=True)
class PlanNode:
    state: SystemState
    depth: int = 0
    path: tuple = ()
    energy: float = 0.0
    projected_energy: float = 0.0

    def __post_init__(self):
        if len(self.path) != self.depth:
            raise ContractViolation("path length must equal depth")


@dataclass(frozen=True)
class GoalScore:
    value: float

    def __post_init__(self):
        if self.value < 0:
            raise ContractViolation("goal score must be non-negative")

    def __lt__(self, other):
        return self.value < other.value


@dataclass(frozen=True)
class ActionDecision:
    """``transition`` to execute now, or a sleep until ``wake_cost`` mJ is affordable."""

    transition: Optional[Transition]
    score: float = 0.0
    wake_cost: float = 0.0
    path: tuple = ()

    @property
    def sleep(self) -> bool:
        return self.transition is None

    def __str__(self):
        return "sleep" if self.sleep else str(self.transition)


@dataclass
class PlanStats:
    calls: int = 0
    nodes: int = 0
    terminals: int = 0
    cache_hits: int = 0
    bypassed: int = 0


def transition_energy(tr: Transition, costs: CostTable) -> float:
    return sum((costs.action_energy(a) for a in tr.actions), 0.0)


def first_cost(tr: Transition, costs: CostTable) -> float:
    """Energy of the first sub-step the transition would run (0 for a leave)."""
    if not tr.actions:
        return 0.0
    return costs.cost(tr.actions[0], 0).energy_mj


def goal_distance(node: PlanNode, goal: GoalSpec, learning: Optional[bool] = None,
                  epsilon: float = 1e-3) -> GoalScore:
    """``|rate actions on the path - target| + epsilon * energy``.

    ``learning`` selects the phase (learn actions against the learn-rate
    target, or infer actions against the infer-rate target); by default it is
    taken from the node's own learned count.
    """
    if learning is None:
        learning = goal.learning_phase(node.state.learned_count)
    kind, target = (A.Learn, goal.learn_rate_target) if learning else (A.Infer, goal.infer_rate_target)
    count = sum(1 for tr in node.path if tr.kind == "advance" and kind in tr.actions)
    return GoalScore(abs(count - target) + epsilon * node.energy)


def _fused(tr: Transition, child: SystemState):
    """Replace an advance into decide by decide+successor steps."""
    for nxt in EDGES[A.Decide]:
        yield Transition("advance", tr.example_id, (A.Decide, nxt)), child.with_action(tr.example_id, nxt)


def prune(node: PlanNode, config: PlanConfig, rng: Optional[np.random.Generator] = None,
          horizon: Optional[int] = None, parent: Optional[SystemState] = None):
    """Return ``node`` if it survives pruning, else :data:`SKIP`.

    Applies the admit cap, the horizon, and the random bypass of a
    select/learnable discard (the gate is assumed to return its default true).
    """
    horizon = config.horizon if horizon is None else horizon
    if len(node.state) > config.admit_cap:
        return SKIP
    if horizon is not None and node.depth > horizon:
        return SKIP
    if node.path and config.p_bypass > 0 and rng is not None:
        last = node.path[-1]
        if last.kind == "leave" and parent is not None and parent.action_of(last.example_id) in DISCARDABLE:
            if rng.random() < config.p_bypass:
                return SKIP
    return node


def expand(node: PlanNode, config: PlanConfig, costs: CostTable, rng=None, horizon=None,
           infer_ready: bool = True, stats: Optional[PlanStats] = None) -> list[PlanNode]:
    out = []
    for tr, child in transitions(node.state, admit_cap=config.admit_cap):
        cands = [(tr, child)]
        if config.fuse_decide and tr.kind == "advance" and tr.actions == (A.Decide,):
            cands = list(_fused(tr, child))
        for t2, s2 in cands:
            if not infer_ready and t2.kind == "advance" and A.Infer in t2.actions:
                continue
            e = node.energy + transition_energy(t2, costs)
            n2 = PlanNode(s2, node.depth + 1, node.path + (t2,), e, node.projected_energy - transition_energy(t2, costs))
            kept = prune(n2, config, rng, horizon, parent=node.state)
            if kept is SKIP:
                if stats is not None and t2.kind == "leave":
                    stats.bypassed += 1
                continue
            out.append(kept)
    return out


class _Expander:
    """Memoized successor lists for one (config, costs, infer_ready) combination.

    Entries hold the transition, child state, transition energy, whether it
    discards a select/learnable example (subject to random bypass), and its
    learn/infer counts. Random bypass is applied on top at visit time.
    """

    def __init__(self, config: PlanConfig, costs: CostTable, infer_ready: bool):
        self.config = replace(config, p_bypass=0.0, horizon=None)
        self.costs = costs
        self.infer_ready = infer_ready
        self.memo: dict = {}

    def children(self, state: SystemState) -> list:
        hit = self.memo.get(state)
        if hit is None:
            hit = []
            for n in expand(PlanNode(state), self.config, self.costs, None, None, self.infer_ready):
                tr = n.path[-1]
                discard = tr.kind == "leave" and state.action_of(tr.example_id) in DISCARDABLE
                learns = int(tr.kind == "advance" and A.Learn in tr.actions)
                infers = int(tr.kind == "advance" and A.Infer in tr.actions)
                hit.append((tr, n.state, n.energy, discard, learns, infers))
            self.memo[state] = hit
        return hit


def search(state: SystemState, goal: GoalSpec, costs: CostTable, config: PlanConfig,
           rng=None, energy_available: float = 0.0, infer_ready: bool = True,
           stats: Optional[PlanStats] = None, expander: Optional[_Expander] = None,
           learning: Optional[bool] = None) -> tuple[PlanNode, float]:
    """Depth-first search for the best terminal node (first in order on ties).

    Scores match :func:`goal_distance` on the terminal node; the energy of a
    path is accumulated left to right. ``learning`` overrides the phase that
    is otherwise read from ``state.learned_count``.
    """
    horizon = config.horizon or goal.horizon_cycles
    if learning is None:
        learning = goal.learning_phase(state.learned_count)
    target = goal.learn_rate_target if learning else goal.infer_rate_target
    eps = config.epsilon_energy
    bypass = config.p_bypass if rng is not None else 0.0
    ex = expander or _Expander(config, costs, infer_ready)
    best = [None, float("inf"), None]
    nodes = terminals = bypassed = 0

    def visit(st, depth, path, energy, count):
        nonlocal nodes, terminals, bypassed
        nodes += 1
        kids = ex.children(st) if depth < horizon else ()
        if bypass > 0 and kids:
            kept = []
            for k in kids:
                if k[3] and rng.random() < bypass:
                    bypassed += 1
                    continue
                kept.append(k)
            kids = kept
        if not kids:
            terminals += 1
            v = abs(count - target) + eps * energy
            if v < best[1]:
                best[0], best[1], best[2] = path, v, st
            return
        for tr, child, e, _, nl, ni in kids:
            visit(child, depth + 1, path + (tr,), energy + e, count + (nl if learning else ni))

    visit(state, 0, (), 0.0, 0)
    if stats is not None:
        stats.nodes += nodes
        stats.terminals += terminals
        stats.bypassed += bypassed
    path, score, final = best
    energy = 0.0
    for tr in path:
        energy = energy + transition_energy(tr, costs)
    return PlanNode(final, len(path), path, energy, energy_available - energy), score


def _normalize(state: SystemState):
    """Relabel ids to 1..N (keeping order) so equivalent states share a cache entry."""
    ids = [u for u, _ in state.tuples]
    mapping = {u: i + 1 for i, u in enumerate(ids)}
    norm = SystemState(tuple((mapping[u], v) for u, v in state.tuples), 0, 0, len(ids) + 1)
    n = len(ids)

    def back(i: int) -> int:
        return ids[i - 1] if i <= n else state.next_id + (i - n - 1)

    return norm, back


class Planner:
    """Stateful wrapper holding statistics and a decision cache.

    The cache is only used when the search is deterministic (``p_bypass == 0``).
    """

    def __init__(self, goal: GoalSpec, costs: CostTable, config: Optional[PlanConfig] = None, seed: int = 0):
        self.goal = goal
        self.costs = costs
        self.config = config or PlanConfig()
        self.rng = np.random.default_rng(seed)
        self.stats = PlanStats()
        self._cache: dict = {}
        self._expanders: dict = {}

    def plan(self, state: SystemState, cap: Capacitor, infer_ready: bool = True) -> ActionDecision:
        self.stats.calls += 1
        learning = self.goal.learning_phase(state.learned_count)
        # search an id-relabeled copy so successor lists are shared across calls
        norm, back = _normalize(state)
        ex = self._expanders.get(infer_ready)
        if ex is None:
            ex = self._expanders[infer_ready] = _Expander(self.config, self.costs, infer_ready)
        key = (norm.tuples, learning, infer_ready)
        hit = self._cache.get(key) if self.config.p_bypass == 0 else None
        if hit is None:
            node, score = search(norm, self.goal, self.costs, self.config, self.rng, cap.energy_mj,
                                 infer_ready, self.stats, ex, learning)
            hit = (node.path, score)
            if self.config.p_bypass == 0:
                self._cache[key] = hit
        else:
            self.stats.cache_hits += 1
        path = tuple(Transition(t.kind, back(t.example_id), t.actions) for t in hit[0])
        return _decide(path, hit[1], cap, self.costs)


def _decide(path, score, cap, costs) -> ActionDecision:
    if not path:
        return ActionDecision(None, score, 0.0)
    first = path[0]
    need = first_cost(first, costs)
    if need > 0 and not can_execute(cap, need):
        return ActionDecision(None, score, need, path)
    return ActionDecision(first, score, 0.0, path)


def plan(state: SystemState, goal: GoalSpec, cap: Capacitor, costs: CostTable, seed=0,
         config: Optional[PlanConfig] = None, infer_ready: bool = True,
         stats: Optional[PlanStats] = None) -> ActionDecision:
    """One planning decision (stateless convenience form of :class:`Planner`)."""
    config = config or PlanConfig()
    rng = np.random.default_rng(seed) if config.p_bypass > 0 else None
    node, score = search(state, goal, costs, config, rng, cap.energy_mj, infer_ready, stats)
    return _decide(node.path if node else (), score, cap, costs)
