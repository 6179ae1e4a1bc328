"""Two-layer competitive network approximating online k-means, plus cluster-then-label."""

from __future__ import annotations

import warnings
from collections import Counter
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from ..core import ContractViolation
from . import codec


@dataclass(frozen=True)
class KmModel:
    """Winner-take-all layer: one weight row per cluster.

    With ``harmonic`` set, a row's step size is ``max(eta, 1/n)`` where ``n``
    counts that row's wins, so each row tracks the running mean of the inputs
    it won; otherwise the step is the constant ``eta``.
    """

    weights: np.ndarray
    eta: float = 0.05
    counts: tuple = ()
    labels: tuple = ()
    harmonic: bool = False

    def __post_init__(self):
        if not 0.0 <= self.eta <= 1.0:
            raise ContractViolation("eta must lie in [0, 1]")
        c = len(self.weights)
        if not self.counts:
            object.__setattr__(self, "counts", (0,) * c)
        if not self.labels:
            object.__setattr__(self, "labels", (None,) * c)

    @classmethod
    def zeros(cls, n_clusters: int, dim: int, **kw) -> "KmModel":
        return cls(np.zeros((n_clusters, dim)), **kw)

    @property
    def n_clusters(self) -> int:
        return len(self.weights)

    def to_bytes(self) -> bytes:
        labels = np.array([-1 if lab is None else lab for lab in self.labels])
        return codec.pack(
            self.weights, np.array([self.eta]), np.array(self.counts), labels, np.array([int(self.harmonic)])
        )

    @classmethod
    def from_bytes(cls, blob: bytes) -> "KmModel":
        w, eta, counts, labels, harm = codec.unpack(blob)
        return cls(
            w, eta=float(eta[0]), counts=tuple(int(c) for c in counts),
            labels=tuple(None if lab < 0 else int(lab) for lab in labels), harmonic=bool(harm[0]),
        )

    def __eq__(self, other):
        if not isinstance(other, KmModel):
            return NotImplemented
        return self.to_bytes() == other.to_bytes()

    __hash__ = None


def _check(model: KmModel, x) -> np.ndarray:
    x = np.asarray(x, dtype=float).ravel()
    if x.shape[0] != model.weights.shape[1]:
        raise ContractViolation(f"input has {x.shape[0]} features, model expects {model.weights.shape[1]}")
    return x


def km_activation(model: KmModel, x) -> np.ndarray:
    return model.weights @ _check(model, x)


def winner(activations) -> int:
    """0-based index of the largest activation, ties to the lowest index."""
    return int(np.argmax(activations))


def km_update(model: KmModel, x, activations) -> KmModel:
    """Move only the winning row toward ``x``."""
    x = _check(model, x)
    j = winner(activations)
    n = model.counts[j] + 1
    rate = max(model.eta, 1.0 / n) if model.harmonic else model.eta
    w = model.weights.copy()
    w[j] = w[j] + rate * (x - w[j])
    counts = model.counts[:j] + (n,) + model.counts[j + 1:]
    return replace(model, weights=w, counts=counts)


def km_learn_step(model: KmModel, x) -> KmModel:
    return km_update(model, x, km_activation(model, x))


def km_infer(model: KmModel, x) -> tuple[int, Optional[int]]:
    """(1-based winning cluster, that cluster's label or ``None``)."""
    j = winner(km_activation(model, x))
    return j + 1, model.labels[j]


def label_clusters(model: KmModel, labeled_examples: Sequence) -> KmModel:
    """Give each cluster the majority label of the labeled examples it wins.

    Majority ties go to the smallest label; clusters that win no labeled example
    keep no label.
    """
    if len(labeled_examples) == 0:
        warnings.warn("label_clusters called with no labeled examples; model unchanged", stacklevel=2)
        return model
    votes = [Counter() for _ in range(model.n_clusters)]
    for x, y in labeled_examples:
        j, _ = km_infer(model, x)
        votes[j - 1][int(y)] += 1
    labels = []
    for v in votes:
        if not v:
            labels.append(None)
            continue
        top = max(v.values())
        labels.append(min(lab for lab, c in v.items() if c == top))
    return replace(model, labels=tuple(labels))


@dataclass(frozen=True)
class MinMaxBounds:
    """Running per-dimension bounds mapping features onto [-1, 1]."""

    lo: np.ndarray
    hi: np.ndarray
    count: int = 0

    @classmethod
    def empty(cls, dim: int) -> "MinMaxBounds":
        return cls(np.full(dim, np.inf), np.full(dim, -np.inf), 0)

    def update(self, x) -> "MinMaxBounds":
        x = np.asarray(x, dtype=float).ravel()
        return MinMaxBounds(np.minimum(self.lo, x), np.maximum(self.hi, x), self.count + 1)

    @property
    def span(self) -> np.ndarray:
        return np.where(self.count > 0, self.hi - self.lo, 0.0)

    @property
    def informative(self) -> bool:
        return self.count > 1 and bool(np.any(self.span > 0))

    def normalize(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.count == 0:
            return np.zeros_like(x)
        span = self.span
        safe = np.where(span > 0, span, 1.0)
        return np.where(span > 0, 2.0 * (x - self.lo) / safe - 1.0, 0.0)

    def denormalize(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        return self.lo + (z + 1.0) / 2.0 * self.span

    def to_bytes(self) -> bytes:
        return codec.pack(self.lo, self.hi, np.array([self.count]))

    @classmethod
    def from_bytes(cls, blob: bytes) -> "MinMaxBounds":
        lo, hi, c = codec.unpack(blob)
        return cls(lo, hi, int(c[0]))


def remap_rows(model: KmModel, old: MinMaxBounds, new: MinMaxBounds) -> KmModel:
    """Re-express trained rows in new bounds so they stay fixed in raw feature space.

    Rows that never won stay at zero.
    """
    if old.count == 0:
        return model
    w = model.weights.copy()
    for j, n in enumerate(model.counts):
        if n > 0:
            w[j] = new.normalize(old.denormalize(w[j]))
    return replace(model, weights=w)
