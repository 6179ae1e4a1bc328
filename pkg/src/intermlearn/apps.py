"""The two learning applications as split action programs over NV slots.

Slot layout (all values are codec blobs unless noted):

``model``            learner model
``bounds``           running min-max bounds (k-means only)
``labeled``          labeled feature buffer for cluster-then-label (k-means only)
``select.window``    selection heuristic state
``select.draws``     number of random-selection draws so far
``ex/<id>/raw``      sensed window, removed once features exist
``ex/<id>/feat``     feature vector
``ex/<id>/label``    label exposed to the learner (``-1`` when hidden)
``ex/<id>/t``        sensing time
``ex/<id>/gate``     ``b"1"`` / ``b"0"`` result of the last select/learnable
``ex/<id>/out``      inference result
``tmp/...``          intermediate results of a split learn
"""

from __future__ import annotations

from dataclasses import replace
from typing import Optional

import numpy as np

from .core import ActionKind, ContractViolation
from .learners import codec
from .learners.features import FeatureSet, extract_features
from .learners.kmeans import KmModel, MinMaxBounds, km_activation, km_infer, km_update, label_clusters, remap_rows
from .learners.knn import NORMAL, KnnModel, knn_infer, learn_commit, learn_insert, learn_scores
from .runtime.execution import ActionProgram, NvStore, SubStep
from .selection import (
    HEURISTICS,
    SelectionWindow,
    nearest_centroid,
    select_k_last,
    select_random,
    select_round_robin,
    update_cluster_mean,
)

A = ActionKind
ABSTAIN = -1
LABELED_BUFFER = 32


def _slot(eid: int, name: str) -> str:
    return f"ex/{eid}/{name}"


def _arr(store, name) -> np.ndarray:
    return codec.unpack(store[name])[0]


def _int(store, name, default=0) -> int:
    raw = store.get(name)
    return default if raw is None else int(codec.unpack(raw)[0][0])


def _pack_int(v: int) -> bytes:
    return codec.pack(np.array([v]))


class LearnerApp:
    """Shared plumbing; subclasses supply the model-specific steps."""

    n_clusters = 2

    def __init__(self, features: FeatureSet, heuristic: str = "none", select_k: int = 3,
                 select_p: float = 0.5, seed: int = 0):
        if heuristic not in HEURISTICS:
            raise ContractViolation(f"unknown heuristic {heuristic!r}")
        if not features:
            raise ContractViolation("empty feature set")
        self.features = features
        self.heuristic = heuristic
        self.select_k = select_k
        self.select_p = select_p
        self.seed = seed
        self.dim = len(features.names())

    # -- store setup and queries -------------------------------------------------

    def initial_store(self) -> NvStore:
        win = SelectionWindow.empty(self.select_k, self.n_clusters)
        return NvStore({"select.window": win.to_bytes(), "select.draws": _pack_int(0), **self._initial_slots()})

    def _initial_slots(self) -> dict:
        raise NotImplementedError

    def gate(self, store, example_id: int) -> bool:
        return store.get(_slot(example_id, "gate")) == b"1"

    def inference(self, store, example_id: int) -> int:
        return _int(store, _slot(example_id, "out"), ABSTAIN)

    def features_of(self, store, example_id: int) -> Optional[np.ndarray]:
        raw = store.get(_slot(example_id, "feat"))
        return None if raw is None else codec.unpack(raw)[0]

    def leave_delta(self, store, example_id: int) -> dict:
        prefix = f"ex/{example_id}/"
        return {k: None for k in store if k.startswith(prefix)}

    def extract(self, window) -> np.ndarray:
        return extract_features(window, self.features)

    def ready(self, store) -> bool:
        raise NotImplementedError

    def predict_features(self, store, F) -> np.ndarray:
        """Predicted labels for raw feature rows using the stored model (no energy)."""
        raise NotImplementedError

    # -- programs ----------------------------------------------------------------

    def program(self, kind: ActionKind, example_id: int, window=None, label=None, t: float = 0.0):
        steps = {
            A.Sense: self._sense_steps,
            A.Extract: self._extract_steps,
            A.Decide: self._decide_steps,
            A.Select: self._select_steps,
            A.Learnable: self._learnable_steps,
            A.Learn: self._learn_steps,
            A.Evaluate: self._evaluate_steps,
            A.Infer: self._infer_steps,
        }[kind]
        if kind is A.Sense:
            if window is None:
                raise ContractViolation("sense needs a window")
            subs = steps(example_id, np.asarray(window, dtype=float), label, t)
        else:
            subs = steps(example_id)
        return ActionProgram(kind, tuple(subs), example_id)

    def all_programs(self, example_id: int, window) -> list:
        return [self.program(k, example_id, window=window) for k in A]

    def _sense_steps(self, eid, window, label, t):
        lab = ABSTAIN if label is None else int(label)

        def sense(nv, scratch):
            return {_slot(eid, "raw"): codec.pack(window), _slot(eid, "label"): _pack_int(lab),
                    _slot(eid, "t"): codec.pack(np.array([t]))}, scratch

        return [SubStep((A.Sense, 0), sense, "sample window")]

    def _extract_steps(self, eid):
        def extract(nv, scratch):
            f = self.extract(_arr(nv, _slot(eid, "raw")))
            delta = {_slot(eid, "feat"): codec.pack(f), _slot(eid, "raw"): None}
            delta.update(self._on_extract(nv, eid, f))
            return delta, scratch

        return [SubStep((A.Extract, 0), extract, "features")]

    def _on_extract(self, nv, eid, f) -> dict:
        return {}

    def _decide_steps(self, eid):
        # routing is chosen by the scheduler; the action itself only marks the example
        return [SubStep((A.Decide, 0), lambda nv, scratch: ({_slot(eid, "gate"): None}, scratch), "route")]

    def _selection_space(self, nv, f) -> np.ndarray:
        return f

    def _centroids(self, nv) -> list:
        raise NotImplementedError

    def _select_steps(self, eid):
        def select(nv, scratch):
            f = _arr(nv, _slot(eid, "feat"))
            x = self._selection_space(nv, f)
            win = SelectionWindow.from_bytes(nv["select.window"])
            delta = {}
            if self.heuristic == "none":
                ok = True
            elif self.heuristic == "random":
                draws = _int(nv, "select.draws")
                rng = np.random.default_rng([self.seed, draws])
                ok = select_random(x, self.select_p, rng)
                delta["select.draws"] = _pack_int(draws + 1)
            elif self.heuristic == "k_last":
                ok, win = select_k_last(x, win)
            else:
                ok, win = self._round_robin(nv, x, win)
            delta["select.window"] = win.to_bytes()
            delta[_slot(eid, "gate")] = b"1" if ok else b"0"
            return delta, scratch

        return [SubStep((A.Select, 0), select, self.heuristic)]

    def _round_robin(self, nv, x, win):
        return select_round_robin(x, self._centroids(nv), win)

    def _learnable_steps(self, eid):
        def learnable(nv, scratch):
            ok = self._learnable(nv, _arr(nv, _slot(eid, "feat")))
            return {_slot(eid, "gate"): b"1" if ok else b"0"}, scratch

        return [SubStep((A.Learnable, 0), learnable, "prerequisites")]

    def _learnable(self, nv, f) -> bool:
        return bool(np.all(np.isfinite(f)))

    def _evaluate_steps(self, eid):
        def evaluate(nv, scratch):
            return {"eval.learned": _pack_int(_int(nv, "eval.learned") + 1)}, scratch

        return [SubStep((A.Evaluate, 0), evaluate, "bookkeeping")]

    def _infer_steps(self, eid):
        def infer(nv, scratch):
            y = self._infer(nv, _arr(nv, _slot(eid, "feat")))
            return {_slot(eid, "out"): _pack_int(y)}, scratch

        return [SubStep((A.Infer, 0), infer, "classify")]


class KnnApp(LearnerApp):
    """kNN anomaly detection; learn is split into insert, score and commit."""

    def __init__(self, features: FeatureSet, k: int = 5, capacity: int = 30, percentile: float = 90.0, **kw):
        super().__init__(features, **kw)
        self.k = k
        self.capacity = capacity
        self.percentile = percentile

    def _initial_slots(self):
        return {"model": KnnModel.empty(self.dim, self.k, self.capacity, self.percentile).to_bytes()}

    def model(self, store) -> KnnModel:
        return KnnModel.from_bytes(store["model"])

    def ready(self, store) -> bool:
        return self.model(store).ready

    def _infer(self, nv, f) -> int:
        m = KnnModel.from_bytes(nv["model"])
        return knn_infer(m, f) if m.ready else ABSTAIN

    def predict_features(self, store, F) -> np.ndarray:
        m = self.model(store)
        if not m.ready:
            return np.full(len(F), ABSTAIN)
        return np.array([knn_infer(m, f) for f in F])

    def _round_robin(self, nv, x, win):
        # centroids are running means of selected examples per inferred class;
        # only classes that already have a mean take part in the rotation
        m = KnnModel.from_bytes(nv["model"])
        cls = knn_infer(m, x) if m.ready else NORMAL
        means = list(win.cluster_means) or [None] * self.n_clusters
        present = [i for i, mu in enumerate(means) if mu is not None]
        if not present:
            ok = True
        else:
            centroids = [means[i] for i in present]
            view = SelectionWindow(win.k, win.selected, win.rejected,
                                   tuple(win.per_cluster_counts[i] for i in present), win.rr_counter)
            ok, _ = select_round_robin(x, centroids, view)
        if not ok:
            return False, win
        counts = list(win.per_cluster_counts)
        counts[cls] += 1
        win = replace(win, rr_counter=win.rr_counter + 1, per_cluster_counts=tuple(counts))
        return True, update_cluster_mean(win, cls + 1, x)

    def _learn_steps(self, eid):
        def insert(nv, scratch):
            m, dist = learn_insert(KnnModel.from_bytes(nv["model"]), _arr(nv, _slot(eid, "feat")))
            return {"tmp/knn.model": m.to_bytes(), "tmp/knn.dist": codec.pack(dist)}, scratch

        def scores(nv, scratch):
            m = KnnModel.from_bytes(nv["tmp/knn.model"])
            s = learn_scores(m, _arr(nv, "tmp/knn.dist"))
            return {"tmp/knn.scores": codec.pack(s), "tmp/knn.dist": None}, scratch

        def commit(nv, scratch):
            m = learn_commit(KnnModel.from_bytes(nv["tmp/knn.model"]), _arr(nv, "tmp/knn.scores"))
            return {"model": m.to_bytes(), "tmp/knn.model": None, "tmp/knn.scores": None}, scratch

        return [
            SubStep((A.Learn, 0), insert, "insert + pairwise distances"),
            SubStep((A.Learn, 1), scores, "member scores"),
            SubStep((A.Learn, 2), commit, "percentile threshold"),
        ]


class KmeansApp(LearnerApp):
    """Competitive k-means with cluster-then-label; learn is feed-forward then update."""

    def __init__(self, features: FeatureSet, n_clusters: int = 2, eta: float = 0.05, harmonic: bool = False,
                 labeled_buffer: int = LABELED_BUFFER, **kw):
        self.n_clusters = n_clusters
        super().__init__(features, **kw)
        self.eta = eta
        self.harmonic = harmonic
        self.labeled_buffer = labeled_buffer

    def _initial_slots(self):
        return {
            "model": KmModel.zeros(self.n_clusters, self.dim, eta=self.eta, harmonic=self.harmonic).to_bytes(),
            "bounds": MinMaxBounds.empty(self.dim).to_bytes(),
            "labeled": codec.pack(np.zeros((0, self.dim)), np.zeros(0, dtype=np.int64)),
        }

    def model(self, store) -> KmModel:
        return KmModel.from_bytes(store["model"])

    def bounds(self, store) -> MinMaxBounds:
        return MinMaxBounds.from_bytes(store["bounds"])

    def ready(self, store) -> bool:
        return any(lab is not None for lab in self.model(store).labels)

    def _on_extract(self, nv, eid, f) -> dict:
        old = MinMaxBounds.from_bytes(nv["bounds"])
        new = old.update(f)
        delta = {"bounds": new.to_bytes(),
                 "model": remap_rows(KmModel.from_bytes(nv["model"]), old, new).to_bytes()}
        lab = _int(nv, _slot(eid, "label"), ABSTAIN)
        if lab >= 0:
            X, y = codec.unpack(nv["labeled"])
            X = np.vstack([X, f])[-self.labeled_buffer:]
            y = np.append(y, lab)[-self.labeled_buffer:]
            delta["labeled"] = codec.pack(X, y)
        return delta

    def _selection_space(self, nv, f):
        return MinMaxBounds.from_bytes(nv["bounds"]).normalize(f)

    def _centroids(self, nv):
        return list(KmModel.from_bytes(nv["model"]).weights)

    def _round_robin(self, nv, x, win):
        # untrained rows all sit at the origin; rotate only over rows that have won
        m = KmModel.from_bytes(nv["model"])
        present = [j for j, n in enumerate(m.counts) if n > 0]
        if not present:
            return True, win
        counts = list(win.per_cluster_counts) or [0] * self.n_clusters
        view = SelectionWindow(win.k, win.selected, win.rejected, tuple(counts[j] for j in present),
                               win.rr_counter)
        ok, _ = select_round_robin(x, [m.weights[j] for j in present], view)
        if not ok:
            return False, win
        j = present[nearest_centroid(x, [m.weights[j] for j in present]) - 1]
        counts[j] += 1
        return True, replace(win, rr_counter=win.rr_counter + 1, per_cluster_counts=tuple(counts))

    def _learnable(self, nv, f) -> bool:
        return super()._learnable(nv, f) and MinMaxBounds.from_bytes(nv["bounds"]).informative

    def _infer(self, nv, f) -> int:
        m = KmModel.from_bytes(nv["model"])
        _, lab = km_infer(m, MinMaxBounds.from_bytes(nv["bounds"]).normalize(f))
        return ABSTAIN if lab is None else lab

    def predict_features(self, store, F) -> np.ndarray:
        m, b = self.model(store), self.bounds(store)
        if not any(lab is not None for lab in m.labels):
            return np.full(len(F), ABSTAIN)
        Z = b.normalize(np.asarray(F, dtype=float))
        winners = np.argmax(Z @ m.weights.T, axis=1)
        return np.array([ABSTAIN if m.labels[j] is None else m.labels[j] for j in winners])

    def _learn_steps(self, eid):
        def feed_forward(nv, scratch):
            x = MinMaxBounds.from_bytes(nv["bounds"]).normalize(_arr(nv, _slot(eid, "feat")))
            act = km_activation(KmModel.from_bytes(nv["model"]), x)
            return {"tmp/km.act": codec.pack(act)}, scratch

        def update(nv, scratch):
            b = MinMaxBounds.from_bytes(nv["bounds"])
            x = b.normalize(_arr(nv, _slot(eid, "feat")))
            m = km_update(KmModel.from_bytes(nv["model"]), x, _arr(nv, "tmp/km.act"))
            X, y = codec.unpack(nv["labeled"])
            if len(y):
                m = label_clusters(m, list(zip(b.normalize(X), y)))
            return {"model": m.to_bytes(), "tmp/km.act": None}, scratch

        return [
            SubStep((A.Learn, 0), feed_forward, "feed-forward activations"),
            SubStep((A.Learn, 1), update, "winner update + relabel"),
        ]


def make_app(learner: str, features: FeatureSet, **kw) -> LearnerApp:
    if learner == "knn":
        return KnnApp(features, **kw)
    if learner == "kmeans":
        return KmeansApp(features, **kw)
    raise ContractViolation(f"unknown learner {learner!r}")
