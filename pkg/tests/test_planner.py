from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, strategies as st

from intermlearn.core import EDGES, ActionKind, ContractViolation, GoalSpec, SystemState, Transition, transitions
from intermlearn.energy import Capacitor, kmeans_costs, knn_costs
from intermlearn.planner import (
    SKIP,
    GoalScore,
    PlanConfig,
    Planner,
    PlanNode,
    PlanStats,
    expand,
    goal_distance,
    plan,
    prune,
    transition_energy,
)

from conftest import all_states
from oracles import brute_force_plan

A = ActionKind
FULL = Capacitor.at(10.0, 3.3, 3.3, 2.0)
GOAL = GoalSpec(learn_rate_target=1.0, learn_count_target=5, infer_rate_target=1.0, horizon_cycles=3)


def _path_node(trs, energy, learned=0):
    return PlanNode(SystemState(learned_count=learned), len(trs), tuple(trs), energy)


def test_goal_distance_examples():
    learn = Transition("advance", 1, (A.Learn,))
    assert goal_distance(_path_node([learn], 9.0), GOAL).value == pytest.approx(1e-3 * 9.0)
    assert goal_distance(_path_node([], 0.0), GOAL).value == GOAL.learn_rate_target
    a = goal_distance(_path_node([learn], 5.0), GOAL)
    b = goal_distance(_path_node([learn], 7.0), GOAL)
    assert a < b
    # phase two counts inferences
    infer = Transition("advance", 1, (A.Infer,))
    assert goal_distance(_path_node([infer], 0.0, learned=5), GOAL).value == 0.0


def test_goal_score_non_negative():
    with pytest.raises(ContractViolation):
        GoalScore(-1.0)


def test_path_length_equals_depth():
    with pytest.raises(ContractViolation):
        PlanNode(SystemState(), 1, ())


def test_empty_state_senses():
    d = plan(SystemState(), GOAL, FULL, knn_costs())
    assert d.transition.kind == "admit" and d.transition.actions == (A.Sense,)


def test_decide_in_phase_two_prefers_infer():
    s = SystemState.of([(1, A.Decide)], learned_count=5)
    d = plan(s, GOAL, FULL, knn_costs(), config=PlanConfig.exhaustive(admit_cap=1))
    assert d.transition == Transition("advance", 1, (A.Infer,))
    # with a free slot the best path still routes example 1 to infer
    d2 = plan(s, GOAL, FULL, knn_costs(), config=PlanConfig.exhaustive())
    assert Transition("advance", 1, (A.Infer,)) in d2.path
    assert Transition("advance", 1, (A.Select,)) not in d2.path


def test_decide_in_phase_one_prefers_select_route():
    s = SystemState.of([(1, A.Learnable)])
    d = plan(s, GOAL, FULL, knn_costs(), config=PlanConfig.exhaustive(admit_cap=1))
    assert d.transition == Transition("advance", 1, (A.Learn,))


@pytest.mark.parametrize("n,L", [(2, 3), (1, 2), (3, 1)])
def test_matches_brute_force(n, L):
    goal = replace(GOAL, horizon_cycles=L)
    for s in all_states(n):
        if len(s) != n:
            continue
        for learned in (0, 5):
            st_ = replace(s, learned_count=learned)
            ref, ref_score = brute_force_plan(st_, goal, knn_costs(), 3, L, learned < 5)
            d = plan(st_, goal, FULL, knn_costs(), config=PlanConfig.exhaustive(admit_cap=3))
            assert (d.transition.kind, d.transition.example_id, d.transition.actions) == ref
            assert d.score == ref_score


def test_unaffordable_first_step_sleeps():
    low = Capacitor.at(0.2, 2.0, 3.3, 2.0)
    d = plan(SystemState(), GOAL, low, knn_costs())
    assert d.sleep and d.transition is None
    assert d.wake_cost == knn_costs().cost(A.Sense).energy_mj


def test_prune_examples():
    cfg0 = PlanConfig(p_bypass=0.0)
    parent = SystemState.of([(1, A.Decide)])
    child = parent.with_action(1, A.Select)
    node = PlanNode(child, 1, (Transition("advance", 1, (A.Select,)),))
    assert prune(node, cfg0, np.random.default_rng(0), parent=parent) is node
    # cap 1 with one example: admission disappears, exactly one fewer successor
    s = SystemState.of([(1, A.Sense)])
    root = PlanNode(s)
    n2 = len(expand(root, PlanConfig(admit_cap=2, p_bypass=0.0), knn_costs()))
    n1 = len(expand(root, PlanConfig(admit_cap=1, p_bypass=0.0), knn_costs()))
    assert n2 - n1 == 1
    # horizon
    deep = PlanNode(s, 2, (Transition("admit", 2, (A.Sense,)),) * 2)
    assert prune(deep, PlanConfig(horizon=1)) is SKIP
    # bypass of a discard leave
    gate = SystemState.of([(1, A.Select)])
    leave = PlanNode(gate.without(1), 1, (Transition("leave", 1),))
    assert prune(leave, PlanConfig(p_bypass=1.0), np.random.default_rng(0), parent=gate) is SKIP
    assert prune(leave, PlanConfig(p_bypass=0.0), np.random.default_rng(0), parent=gate) is leave


def test_fusion_joins_decide_with_successor():
    s = SystemState.of([(1, A.Extract)])
    kids = expand(PlanNode(s), PlanConfig(admit_cap=1, fuse_decide=True, p_bypass=0.0), knn_costs())
    acts = [k.path[-1].actions for k in kids]
    assert acts == [(A.Decide, A.Select), (A.Decide, A.Infer)]
    e = kids[0].energy
    assert e == transition_energy(kids[0].path[-1], knn_costs())


def test_pruning_reduces_explored_nodes():
    s = SystemState.of([(1, A.Extract), (2, A.Select)])
    goal = replace(GOAL, horizon_cycles=3)
    full, pruned = PlanStats(), PlanStats()
    plan(s, goal, FULL, knn_costs(), config=PlanConfig.exhaustive(admit_cap=3), stats=full)
    plan(s, goal, FULL, knn_costs(), seed=1,
         config=PlanConfig(admit_cap=2, p_bypass=0.5, fuse_decide=True), stats=pruned)
    assert pruned.nodes < full.nodes


def _branching(cfg):
    return 1 + cfg.admit_cap * 2  # admit + per example at most 2 edges or 1 edge + leave


@given(st.sampled_from(all_states(2)), st.integers(1, 3), st.integers(0, 1000), st.booleans())
def test_node_bound_and_legality(s, L, seed, fuse):
    cfg = PlanConfig(horizon=L, admit_cap=2, p_bypass=0.3, fuse_decide=fuse)
    stats = PlanStats()
    d = plan(s, GOAL, FULL, knn_costs(), seed=seed, config=cfg, stats=stats)
    b = _branching(cfg)
    assert stats.nodes <= sum(b ** k for k in range(L + 1))
    tr = d.transition
    assert tr is not None
    legal = [t for t, _ in transitions(s, admit_cap=2)]
    if tr.kind == "advance" and len(tr.actions) == 2:
        assert tr.actions[0] is A.Decide and tr.actions[1] in EDGES[A.Decide]
        assert Transition("advance", tr.example_id, (A.Decide,)) in legal
    else:
        assert tr in legal


@given(st.sampled_from(all_states(2)), st.integers(0, 50))
def test_plan_is_pure(s, seed):
    cfg = PlanConfig(p_bypass=0.2)
    a = plan(s, GOAL, FULL, knn_costs(), seed=seed, config=cfg)
    b = plan(s, GOAL, FULL, knn_costs(), seed=seed, config=cfg)
    assert a == b


def test_planner_cache_gives_same_decisions():
    cfg = PlanConfig.exhaustive()
    p = Planner(GOAL, kmeans_costs(), cfg)
    for s in all_states(2):
        s = SystemState(tuple((u + 10, v) for u, v in s.tuples))
        assert p.plan(s, FULL) == plan(s, GOAL, FULL, kmeans_costs(), config=cfg)
    assert p.stats.cache_hits == 0
    p.plan(SystemState.of([(40, A.Decide)]), FULL)
    assert p.stats.cache_hits == 1


def test_infer_not_ready_avoids_infer():
    s = SystemState.of([(1, A.Decide)], learned_count=5)
    d = plan(s, GOAL, FULL, knn_costs(), config=PlanConfig.exhaustive(admit_cap=1), infer_ready=False)
    assert all(A.Infer not in t.actions for t in d.path)
