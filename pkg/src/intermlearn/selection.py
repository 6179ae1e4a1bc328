"""Example-selection criteria and the three online selection heuristics.

All distances are Euclidean over feature vectors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .core import ContractViolation
from .learners import codec

HEURISTICS = ("none", "round_robin", "k_last", "random")


def euclidean(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ContractViolation(f"dimension mismatch {a.shape} vs {b.shape}")
    return float(np.sqrt(np.sum((a - b) ** 2)))


def uncertainty(posteriors) -> float:
    """Shannon entropy in nats, with 0 log 0 taken as 0."""
    p = np.asarray(posteriors, dtype=float)
    if p.ndim != 1 or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
        raise ContractViolation("posteriors must be a non-negative vector summing to 1")
    nz = p[p > 0]
    return float(-np.sum(nz * np.log(nz)))


def _pairwise(X, Y) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    if X.shape[1] != Y.shape[1]:
        raise ContractViolation("dimension mismatch")
    return np.sqrt(((X[:, None, :] - Y[None, :, :]) ** 2).sum(axis=-1))


def _as_rows(B):
    B = np.asarray(B, dtype=float)
    return B.reshape(len(B), -1)


def diversity(B, d: Optional[Callable] = None) -> float:
    """Mean distance over all ordered pairs of ``B``, self-pairs included."""
    if len(B) == 0:
        raise ContractViolation("diversity of an empty set")
    if d is not None:
        return sum(d(x, y) for x in B for y in B) / len(B) ** 2
    B = _as_rows(B)
    return float(_pairwise(B, B).sum() / len(B) ** 2)


def representation(B, B_prime, d: Optional[Callable] = None) -> float:
    """Mean distance between selected ``B`` and non-selected ``B_prime`` (lower is better)."""
    if len(B) == 0 or len(B_prime) == 0:
        raise ContractViolation("representation needs two non-empty sets")
    if d is not None:
        return sum(d(x, y) for x in B for y in B_prime) / (len(B) * len(B_prime))
    B, Bp = _as_rows(B), _as_rows(B_prime)
    return float(_pairwise(B, Bp).sum() / (len(B) * len(Bp)))


@dataclass(frozen=True)
class SelectionWindow:
    """State of the online heuristics.

    ``selected`` / ``rejected`` are the k-last lists (oldest first).
    ``per_cluster_counts`` and ``rr_counter`` track round-robin balance.
    ``cluster_means`` holds online means of selected examples per cluster for
    learners that have no centroids of their own.
    """

    k: int = 3
    selected: tuple = ()
    rejected: tuple = ()
    per_cluster_counts: tuple = ()
    rr_counter: int = 0
    cluster_means: tuple = ()

    @classmethod
    def empty(cls, k: int = 3, n_clusters: int = 2) -> "SelectionWindow":
        return cls(k=k, per_cluster_counts=(0,) * n_clusters)

    def push_selected(self, x) -> "SelectionWindow":
        return replace(self, selected=(self.selected + (_vec(x),))[-self.k:])

    def push_rejected(self, x) -> "SelectionWindow":
        return replace(self, rejected=(self.rejected + (_vec(x),))[-self.k:])

    def to_bytes(self) -> bytes:
        means = self.cluster_means or (None,) * len(self.per_cluster_counts)
        present = np.array([m is not None for m in means], dtype=np.int64)
        return codec.pack(
            np.array([self.k, self.rr_counter]), np.array(self.per_cluster_counts, dtype=np.int64),
            _rows(self.selected), _rows(self.rejected), present, _rows([m for m in means if m is not None]),
        )

    @classmethod
    def from_bytes(cls, blob: bytes) -> "SelectionWindow":
        head, counts, sel, rej, present, means = codec.unpack(blob)
        it = iter(means)
        cm = tuple(_vec(next(it)) if p else None for p in present)
        return cls(
            k=int(head[0]), rr_counter=int(head[1]), per_cluster_counts=tuple(int(c) for c in counts),
            selected=tuple(_vec(r) for r in sel), rejected=tuple(_vec(r) for r in rej),
            cluster_means=cm if any(present) else (),
        )


def _rows(vectors) -> np.ndarray:
    if len(vectors) == 0:
        return np.zeros((0, 0))
    return np.array(vectors, dtype=float)


def _vec(x) -> tuple:
    return tuple(float(v) for v in np.ravel(x))


def nearest_centroid(x, centroids, d=euclidean) -> int:
    """1-based index of the nearest centroid, ties to the lowest index."""
    if len(centroids) == 0:
        raise ContractViolation("need at least one centroid")
    dists = [d(x, mu) for mu in centroids]
    return int(np.argmin(dists)) + 1


def select_round_robin(x, centroids: Sequence, window: SelectionWindow, d=euclidean):
    """Accept ``x`` iff it falls in the cluster whose turn it is."""
    k = len(centroids)
    if k < 1:
        raise ContractViolation("round-robin needs k >= 1 centroids")
    counts = list(window.per_cluster_counts) or [0] * k
    if len(counts) != k:
        counts = (counts + [0] * k)[:k]
    required = 1 + window.rr_counter % k
    j = nearest_centroid(x, centroids, d)
    if j != required:
        return False, window
    counts[j - 1] += 1
    return True, replace(window, rr_counter=window.rr_counter + 1, per_cluster_counts=tuple(counts))


def select_k_last(x, window: SelectionWindow, d: Optional[Callable] = None):
    """Accept ``x`` iff it raises diversity of B and lowers its distance to B'.

    Until B holds two examples and B' one, examples are routed unconditionally:
    first into B (accepted), then into B' (rejected).
    """
    B, Bp = list(window.selected), list(window.rejected)
    if len(B) < 2:
        return True, window.push_selected(x)
    if len(Bp) < 1:
        return False, window.push_rejected(x)
    Bx = B + [_vec(x)]
    accept = diversity(Bx, d) > diversity(B, d) and representation(Bx, Bp, d) < representation(B, Bp, d)
    if accept:
        return True, window.push_selected(x)
    return False, window.push_rejected(x)


def select_random(x, p: float, rng: np.random.Generator) -> bool:
    if not 0.0 <= p <= 1.0:
        raise ContractViolation("selection probability must lie in [0, 1]")
    return bool(rng.random() < p)


def update_cluster_mean(window: SelectionWindow, cluster: int, x) -> SelectionWindow:
    """Fold a selected ``x`` into the running mean of ``cluster`` (1-based)."""
    x = np.asarray(x, dtype=float).ravel()
    k = len(window.per_cluster_counts)
    means = list(window.cluster_means) or [None] * k
    counts = list(window.per_cluster_counts)
    n = counts[cluster - 1]
    old = means[cluster - 1]
    new = x if old is None else np.asarray(old) + (x - np.asarray(old)) / max(n, 1)
    means[cluster - 1] = _vec(new)
    return replace(window, cluster_means=tuple(means))
