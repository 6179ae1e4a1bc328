"""Independent reference implementations used to check the package."""

import math

import numpy as np

from intermlearn.core import EDGES, ActionKind

A = ActionKind
GATES = (A.Select, A.Learnable)
TERMINAL = (A.Evaluate, A.Infer)


def successors(tuples, next_id, cap):
    """Transition system written out from the action diagram, in tie-break order."""
    out = []
    if len(tuples) < cap:
        out.append((("admit", next_id, (A.Sense,)), tuples + ((next_id, A.Sense),), next_id + 1))
    for u, v in tuples:
        for w in EDGES[v]:
            nt = tuple((x, w if x == u else y) for x, y in tuples)
            out.append((("advance", u, (w,)), nt, next_id))
        if v in GATES or v in TERMINAL:
            out.append((("leave", u, ()), tuple(p for p in tuples if p[0] != u), next_id))
    return out


def brute_force_plan(state, goal, costs, cap, horizon, learning, eps=1e-3):
    """Enumerate every maximal trajectory (up to ``horizon`` steps) and pick the best.

    Returns (first transition as (kind, id, actions), best score).
    """
    kind = A.Learn if learning else A.Infer
    target = goal.learn_rate_target if learning else goal.infer_rate_target
    energy_of = {a: sum(c.energy_mj for c in costs.substeps(a)) for a in A}
    paths = []

    def walk(tuples, nid, path):
        succ = successors(tuples, nid, cap) if len(path) < horizon else []
        if not succ:
            paths.append(path)
            return
        for tr, nt, nn in succ:
            walk(nt, nn, path + [tr])

    walk(state.tuples, state.next_id, [])
    best, best_score = None, math.inf
    for p in paths:
        energy = 0.0
        for tr in p:
            energy = energy + sum((energy_of[a] for a in tr[2]), 0.0)
        count = sum(1 for tr in p if tr[0] == "advance" and kind in tr[2])
        score = abs(count - target) + eps * energy
        if score < best_score:
            best, best_score = p, score
    return (best[0] if best else None), best_score


def nearest_rank_sorted(values, pct):
    v = sorted(values)
    rank = max(1, math.ceil(pct / 100.0 * len(v) - 1e-12))
    return v[rank - 1]


def knn_score_all_pairs(query, examples, k):
    d = [math.sqrt(sum((a - b) ** 2 for a, b in zip(query, e))) for e in examples]
    return sum(sorted(d)[:k])


def member_scores_all_pairs(examples, k):
    out = []
    for i, e in enumerate(examples):
        others = [x for j, x in enumerate(examples) if j != i]
        out.append(knn_score_all_pairs(e, others, k))
    return out


def features_reference(x):
    """Plain-Python features in fixed order: mean, std, median, rms, p2p, zcr, aav."""
    x = [float(v) for v in x]
    n = len(x)
    mean = sum(x) / n
    std = math.sqrt(sum((v - mean) ** 2 for v in x) / n)
    med = sorted(x)[(n - 1) // 2]
    rms = math.sqrt(sum(v * v for v in x) / n)
    p2p = max(x) - min(x)
    s = [(v > mean) - (v < mean) for v in x]
    zcr = sum(1 for a, b in zip(s, s[1:]) if a * b < 0) / (n - 1)
    aav = sum(abs(b - a) for a, b in zip(x, x[1:])) / (n - 1)
    return [mean, std, med, rms, p2p, zcr, aav]


def diversity_loops(B):
    B = [np.asarray(b, dtype=float) for b in B]
    return sum(float(np.linalg.norm(a - b)) for a in B for b in B) / len(B) ** 2


def representation_loops(B, Bp):
    B = [np.asarray(b, dtype=float) for b in B]
    Bp = [np.asarray(b, dtype=float) for b in Bp]
    return sum(float(np.linalg.norm(a - b)) for a in B for b in Bp) / (len(B) * len(Bp))
