"""Synthetic labeled sensor streams.

A stream is indexed by sense count: sample ``i`` depends only on the stream
seed and ``i``, so schedulers that sense at different times still see the same
examples in the same order.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from ..core import ContractViolation

NORMAL, ABNORMAL = 0, 1
STREAM_KINDS = ("air", "rf", "vibration")
LABEL_MODES = ("iid", "blocks")


@dataclass(frozen=True)
class StreamSpec:
    """Stream shape.

    ``label_mode="iid"`` draws an anomaly with probability ``anomaly_rate``;
    ``"blocks"`` alternates normal and abnormal runs of ``block_len`` samples,
    starting with normal. ``labeled_fraction`` of samples expose their label to
    the learner. ``relocate_every`` (rf only) shifts the signal baseline every
    that many samples.
    """

    kind: str = "air"
    anomaly_rate: float = 0.1
    anomaly_magnitude: float = 4.0
    labeled_fraction: float = 0.0
    label_mode: str = "iid"
    block_len: int = 50
    window: int = 0
    noise: float = 1.0
    relocate_every: int = 0

    def __post_init__(self):
        if self.kind not in STREAM_KINDS:
            raise ContractViolation(f"unknown stream kind {self.kind!r} (expected one of {STREAM_KINDS})")
        if not 0.0 <= self.anomaly_rate < 1.0:
            raise ContractViolation("anomaly_rate must lie in [0, 1)")
        if not 0.0 <= self.labeled_fraction <= 1.0:
            raise ContractViolation("labeled_fraction must lie in [0, 1]")
        if self.label_mode not in LABEL_MODES:
            raise ContractViolation(f"label_mode must be one of {LABEL_MODES}")
        if self.block_len < 1 or self.window < 0 or self.relocate_every < 0:
            raise ContractViolation("block_len must be >= 1 and window, relocate_every >= 0")
        if self.noise < 0 or self.anomaly_magnitude < 0:
            raise ContractViolation("noise and anomaly_magnitude must be non-negative")

    @property
    def window_len(self) -> int:
        return self.window or {"air": 60, "rf": 30, "vibration": 250}[self.kind]


class Sample(NamedTuple):
    window: np.ndarray
    label: int
    exposed: bool


def _air(rng, n, label, spec):
    # one reading every 32 s; slow drift plus sensor noise around a fixed level
    t = np.arange(n)
    sigma = 5.0 * spec.noise
    x = 400.0 + rng.uniform(-0.05, 0.05) * t + rng.normal(0.0, sigma, n)
    if label == ABNORMAL:
        start = int(rng.integers(0, n // 2))
        seg = slice(start, start + n // 2)
        x[seg] += spec.anomaly_magnitude * sigma * rng.uniform(0.75, 1.5)
        x[seg] += rng.normal(0.0, sigma, n // 2)
    return x


def _rf(rng, n, label, spec, baseline):
    x = baseline + rng.normal(0.0, 1.0 * spec.noise, n)
    if label == ABNORMAL:
        # a person in the link path: deeper mean attenuation and faster fading
        x += -spec.anomaly_magnitude * rng.uniform(0.75, 1.5) + rng.normal(0.0, 2.0 * spec.noise, n)
    return x


def _vibration(rng, n, label, spec):
    t = np.arange(n) / 50.0
    if label == ABNORMAL:
        f, amp = rng.uniform(2.1, 3.0), max(spec.anomaly_magnitude, 1e-9) * rng.uniform(0.8, 1.2)
    else:
        f, amp = rng.uniform(0.4, 0.9), rng.uniform(0.8, 1.2)
    x = amp * np.sin(2 * np.pi * f * t + rng.uniform(0, 2 * np.pi))
    return x + rng.normal(0.0, 0.05 * spec.noise, n)


class Stream:
    """Deterministic, random-access labeled sample stream."""

    def __init__(self, spec: StreamSpec, seed: int = 0):
        self.spec = spec
        self.seed = int(seed)

    def _label(self, rng, i) -> int:
        if self.spec.label_mode == "blocks":
            rng.random()
            return (i // self.spec.block_len) % 2
        return int(rng.random() < self.spec.anomaly_rate)

    def _baseline(self, i) -> float:
        if not self.spec.relocate_every:
            return -60.0
        r = np.random.default_rng([self.seed, 1, i // self.spec.relocate_every])
        return -60.0 + float(r.uniform(-8.0, 8.0))

    def _window(self, rng, label, i) -> np.ndarray:
        n, kind = self.spec.window_len, self.spec.kind
        if kind == "air":
            return _air(rng, n, label, self.spec)
        if kind == "rf":
            return _rf(rng, n, label, self.spec, self._baseline(i))
        return _vibration(rng, n, label, self.spec)

    def sample(self, i: int) -> Sample:
        if i < 0:
            raise ContractViolation("stream index must be non-negative")
        rng = np.random.default_rng([self.seed, 0, i])
        label = self._label(rng, i)
        exposed = bool(rng.random() < self.spec.labeled_fraction)
        return Sample(self._window(rng, label, i), label, exposed)

    __getitem__ = sample

    def take(self, n: int, start: int = 0) -> list[Sample]:
        return [self.sample(i) for i in range(start, start + n)]

    def labels(self, n: int) -> np.ndarray:
        return np.array([self.sample(i).label for i in range(n)])

    def holdout(self, n: int, seed: int) -> list[Sample]:
        """Balanced held-out set (alternating labels) drawn independently of the stream."""
        out = []
        for j in range(n):
            rng = np.random.default_rng([int(seed), 2, j])
            label = j % 2
            rng.random()
            out.append(Sample(self._window(rng, label, 0), label, True))
        return out


def gen_stream(spec: StreamSpec, seed: int = 0) -> Stream:
    return Stream(spec, seed)
