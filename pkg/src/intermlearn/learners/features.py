from __future__ import annotations

import enum

import numpy as np

from ..core import ContractViolation


class FeatureSet(enum.Flag):
    Mean = enum.auto()
    Std = enum.auto()
    Median = enum.auto()
    RMS = enum.auto()
    P2P = enum.auto()
    ZCR = enum.auto()
    AAV = enum.auto()

    @classmethod
    def parse(cls, text: str) -> "FeatureSet":
        """Parse ``"mean,std,p2p"`` or a preset name (``air``, ``rf``, ``vibration``)."""
        text = text.strip().lower()
        if text in PRESETS:
            return PRESETS[text]
        out = cls(0)
        names = {m.name.lower(): m for m in cls}
        for part in text.split(","):
            part = part.strip()
            if part not in names:
                raise ValueError(f"unknown feature {part!r}")
            out |= names[part]
        if not out:
            raise ValueError("empty feature set")
        return out

    def names(self) -> list[str]:
        return [m.name for m in FEATURE_ORDER if m in self]


FEATURE_ORDER = (
    FeatureSet.Mean, FeatureSet.Std, FeatureSet.Median, FeatureSet.RMS,
    FeatureSet.P2P, FeatureSet.ZCR, FeatureSet.AAV,
)

PRESETS = {
    "air": FeatureSet.Mean | FeatureSet.Std | FeatureSet.Median | FeatureSet.RMS | FeatureSet.P2P,
    "rf": FeatureSet.Mean | FeatureSet.Std | FeatureSet.Median | FeatureSet.RMS,
    "vibration": FeatureSet.Mean | FeatureSet.Std | FeatureSet.Median | FeatureSet.RMS
    | FeatureSet.P2P | FeatureSet.ZCR | FeatureSet.AAV,
}


def _zcr(x: np.ndarray) -> float:
    # crossings of the mean-removed signal; a sample exactly at the mean is not a crossing
    s = np.sign(x - x.mean())
    return float(np.count_nonzero(s[1:] * s[:-1] < 0) / (len(x) - 1))


_FUNCS = {
    FeatureSet.Mean: lambda x: float(x.mean()),
    FeatureSet.Std: lambda x: float(x.std()),
    FeatureSet.Median: lambda x: float(np.sort(x)[(len(x) - 1) // 2]),
    FeatureSet.RMS: lambda x: float(np.sqrt(np.mean(x * x))),
    FeatureSet.P2P: lambda x: float(x.max() - x.min()),
    FeatureSet.ZCR: _zcr,
    FeatureSet.AAV: lambda x: float(np.mean(np.abs(np.diff(x)))),
}


def extract_features(window, features: FeatureSet) -> np.ndarray:
    """Feature vector of a 1-D sample window, in fixed flag order.

    Std is the population standard deviation and the median of an even-length
    window is its lower middle value.
    """
    x = np.asarray(window, dtype=float).ravel()
    if len(x) < 2:
        raise ContractViolation("feature extraction needs a window of at least 2 samples")
    if not features:
        raise ContractViolation("at least one feature must be selected")
    return np.array([_FUNCS[f](x) for f in FEATURE_ORDER if f in features])
