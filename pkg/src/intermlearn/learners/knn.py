"""k-nearest-neighbour anomaly detection over a bounded example store."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Optional

import numpy as np

from ..core import ContractViolation
from . import codec

NORMAL = 0
ABNORMAL = 1


@dataclass(frozen=True)
class KnnModel:
    """Learned example set and its anomaly threshold.

    ``threshold`` stays ``None`` until the store holds more than ``k`` examples.
    """

    examples: np.ndarray
    k: int = 5
    capacity: int = 30
    threshold: Optional[float] = None
    percentile: float = 90.0

    @classmethod
    def empty(cls, dim: int, k: int = 5, capacity: int = 30, percentile: float = 90.0) -> "KnnModel":
        if k < 1 or capacity <= k:
            raise ContractViolation("need 1 <= k < capacity")
        return cls(np.zeros((0, dim)), k=k, capacity=capacity, percentile=percentile)

    @property
    def ready(self) -> bool:
        return self.threshold is not None

    def __len__(self):
        return len(self.examples)

    def to_bytes(self) -> bytes:
        thr = math.nan if self.threshold is None else self.threshold
        return codec.pack(
            np.array([self.k, self.capacity]), np.array([self.percentile, thr]), self.examples
        )

    @classmethod
    def from_bytes(cls, blob: bytes) -> "KnnModel":
        ints, reals, examples = codec.unpack(blob)
        thr = None if math.isnan(reals[1]) else float(reals[1])
        return cls(examples, k=int(ints[0]), capacity=int(ints[1]), threshold=thr, percentile=float(reals[0]))

    def __eq__(self, other):
        if not isinstance(other, KnnModel):
            return NotImplemented
        return self.to_bytes() == other.to_bytes()

    __hash__ = None


def feature_distance(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ContractViolation(f"dimension mismatch {a.shape} vs {b.shape}")
    return float(np.sqrt(np.sum((a - b) ** 2)))


def _distances(e, examples) -> np.ndarray:
    e = np.asarray(e, dtype=float).ravel()
    if examples.shape[1] != e.shape[0]:
        raise ContractViolation("dimension mismatch between query and learned examples")
    return np.sqrt(((examples - e) ** 2).sum(axis=1))


def knn_anomaly_score(e, model: KnnModel, member_index: Optional[int] = None) -> float:
    """Sum of distances from ``e`` to its ``k`` nearest learned examples.

    Pass ``member_index`` when ``e`` is itself stored at that index so its own
    zero distance is left out.
    """
    d = _distances(e, model.examples)
    if member_index is not None:
        d = np.delete(d, member_index)
    if len(d) < model.k:
        raise ContractViolation(f"need at least k={model.k} neighbours, have {len(d)}")
    return float(np.sort(d)[: model.k].sum())


def pairwise_distances(examples: np.ndarray) -> np.ndarray:
    diff = examples[:, None, :] - examples[None, :, :]
    return np.sqrt((diff * diff).sum(axis=-1))


def member_scores(dist: np.ndarray, k: int) -> np.ndarray:
    """Anomaly score of every member from the pairwise distance matrix."""
    n = len(dist)
    if n - 1 < k:
        raise ContractViolation(f"need more than k={k} members, have {n}")
    # drop the diagonal (one self-distance per row), keep duplicates
    off = dist[~np.eye(n, dtype=bool)].reshape(n, n - 1)
    return np.sort(off, axis=1)[:, :k].sum(axis=1)


def nearest_rank(values, percentile: float) -> float:
    """Nearest-rank percentile: the ceil(p/100 * n)-th smallest value."""
    v = np.sort(np.asarray(values, dtype=float))
    if len(v) == 0:
        raise ContractViolation("percentile of an empty set")
    rank = math.ceil(Fraction(percentile) * len(v) / 100)
    return float(v[min(max(rank, 1), len(v)) - 1])


# The learn action runs as three sub-steps; each is a pure function so the
# runtime can persist intermediate results between wakes.

def learn_insert(model: KnnModel, e) -> tuple[KnnModel, np.ndarray]:
    e = np.asarray(e, dtype=float).reshape(1, -1)
    if len(model.examples) and e.shape[1] != model.examples.shape[1]:
        raise ContractViolation("dimension mismatch")
    examples = np.vstack([model.examples.reshape(-1, e.shape[1]), e])[-model.capacity:]
    return replace(model, examples=examples), pairwise_distances(examples)


def learn_scores(model: KnnModel, dist: np.ndarray) -> np.ndarray:
    if len(model.examples) <= model.k:
        return np.zeros(0)
    return member_scores(dist, model.k)


def learn_commit(model: KnnModel, scores: np.ndarray) -> KnnModel:
    if len(scores) == 0:
        return model
    return replace(model, threshold=nearest_rank(scores, model.percentile))


def knn_learn(model: KnnModel, e) -> KnnModel:
    """Insert ``e`` (oldest evicted at capacity) and recompute the threshold."""
    model, dist = learn_insert(model, e)
    return learn_commit(model, learn_scores(model, dist))


def knn_infer(model: KnnModel, e) -> int:
    """``ABNORMAL`` iff the score strictly exceeds the threshold."""
    if not model.ready:
        raise ContractViolation("kNN model has no threshold yet")
    return ABNORMAL if knn_anomaly_score(e, model) > model.threshold else NORMAL
