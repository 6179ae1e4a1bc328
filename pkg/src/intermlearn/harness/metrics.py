"""Per-episode time series of energy, counters and accuracy."""

from __future__ import annotations

import csv
import io
import math
from collections import deque
from typing import Optional

import numpy as np

from .._io import atomic_write_text, fmt_float
from ..core import ActionKind

ACCURACY_WINDOW = 30
COUNTER_COLUMNS = tuple(f"n_{k.value}" for k in ActionKind)
COLUMNS = ("t_s", "energy_mj", "learned", "inferred", "accuracy", "holdout_accuracy") + COUNTER_COLUMNS
_INT_COLUMNS = frozenset(("learned", "inferred") + COUNTER_COLUMNS)


def _same(a, b) -> bool:
    if isinstance(a, float) and isinstance(b, float) and math.isnan(a) and math.isnan(b):
        return True
    return a == b


class MetricsFrame:
    """Rows of :data:`COLUMNS`, one appended after every completed action.

    ``accuracy`` is the fraction of correct inferences over the last
    :data:`ACCURACY_WINDOW` inferences; ``holdout_accuracy`` is the model's
    score on the held-out set after the latest learn. Both are NaN until
    defined.
    """

    columns = COLUMNS

    def __init__(self, rows=None):
        self.rows: list[tuple] = [tuple(r) for r in (rows or [])]

    def __len__(self):
        return len(self.rows)

    def __eq__(self, other):
        if not isinstance(other, MetricsFrame) or len(self.rows) != len(other.rows):
            return False
        return all(all(_same(a, b) for a, b in zip(r, s)) for r, s in zip(self.rows, other.rows))

    __hash__ = None

    def append(self, row) -> None:
        if len(row) != len(COLUMNS):
            raise ValueError(f"expected {len(COLUMNS)} values, got {len(row)}")
        self.rows.append(tuple(row))

    def column(self, name: str) -> np.ndarray:
        i = COLUMNS.index(name)
        return np.array([r[i] for r in self.rows], dtype=float)

    def last(self) -> dict:
        if not self.rows:
            return {c: (0 if c in _INT_COLUMNS else math.nan) for c in COLUMNS}
        return dict(zip(COLUMNS, self.rows[-1]))

    def to_csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in self.rows:
            w.writerow([str(v) if c in _INT_COLUMNS else fmt_float(v) for c, v in zip(COLUMNS, r)])
        return buf.getvalue()

    def to_csv(self, path) -> None:
        atomic_write_text(path, self.to_csv_text())

    @classmethod
    def from_csv_text(cls, text: str) -> "MetricsFrame":
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or tuple(rows[0]) != COLUMNS:
            raise ValueError("not a metrics CSV (header mismatch)")
        out = []
        for r in rows[1:]:
            out.append(tuple(int(v) if c in _INT_COLUMNS else float(v) for c, v in zip(COLUMNS, r)))
        return cls(out)

    @classmethod
    def from_csv(cls, path) -> "MetricsFrame":
        with open(path, encoding="utf-8") as fh:
            return cls.from_csv_text(fh.read())


class MetricsRecorder:
    """Accumulates counters during an episode and snapshots them into a frame."""

    def __init__(self):
        self.frame = MetricsFrame()
        self.counts = {k: 0 for k in ActionKind}
        self.learned = 0
        self.inferred = 0
        self.energy = 0.0
        self.holdout = math.nan
        self._recent: deque = deque(maxlen=ACCURACY_WINDOW)

    def inference(self, correct: bool) -> None:
        self._recent.append(bool(correct))

    @property
    def accuracy(self) -> float:
        return sum(self._recent) / len(self._recent) if self._recent else math.nan

    def record(self, t: float, energy: float, learned: int, inferred: int, holdout: Optional[float] = None):
        self.energy, self.learned, self.inferred = energy, learned, inferred
        if holdout is not None:
            self.holdout = holdout
        row = (float(t), float(energy), learned, inferred, self.accuracy, self.holdout)
        self.frame.append(row + tuple(self.counts[k] for k in ActionKind))


def accuracy(pred, truth) -> float:
    pred, truth = np.asarray(pred), np.asarray(truth)
    if len(truth) == 0:
        return math.nan
    return float(np.mean(pred == truth))
