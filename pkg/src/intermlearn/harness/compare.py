"""Paired episode comparisons (e.g. planner against a duty-cycled baseline)."""

from __future__ import annotations

import csv
import io
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .._io import atomic_write_text, fmt_float
from ..core import ContractViolation
from ..runtime.episode import EpisodeResult, run_episode
from .metrics import MetricsFrame
from .scenario import ScenarioConfig

SUMMARY_COLUMNS = ("name", "seed", "scheduler", "heuristic", "learn_actions", "infer_actions", "energy_mj",
                   "final_holdout_accuracy", "mean_inference_accuracy")


@dataclass
class ComparisonResult:
    """Metrics per scenario name plus one summary row each.

    ``partial`` is set when an episode failed; ``frames`` and ``summary`` then
    hold only the scenarios that finished before it, and ``error`` says why.
    """

    frames: dict = field(default_factory=dict)
    summary: list = field(default_factory=list)
    results: dict = field(default_factory=dict)
    partial: bool = False
    error: str = ""

    def row(self, name: str) -> dict:
        for r in self.summary:
            if r["name"] == name:
                return r
        raise KeyError(name)

    def summary_csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        for r in self.summary:
            w.writerow([fmt_float(r[c]) if isinstance(r[c], float) else r[c] for c in SUMMARY_COLUMNS])
        return buf.getvalue()

    def write(self, out_dir) -> list[Path]:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        paths = []
        for name, frame in self.frames.items():
            p = out_dir / f"{name}.metrics.csv"
            frame.to_csv(p)
            paths.append(p)
        p = out_dir / "summary.csv"
        atomic_write_text(p, self.summary_csv_text())
        return paths + [p]


def _unique_names(scenarios) -> list[str]:
    seen: dict[str, int] = {}
    names = []
    for cfg in scenarios:
        n = seen.get(cfg.name, 0)
        seen[cfg.name] = n + 1
        names.append(cfg.name if n == 0 else f"{cfg.name}-{n + 1}")
    return names


def run_comparison(scenarios: list, workers: int = 1, keep_results: bool = False) -> ComparisonResult:
    """Run every scenario and tabulate the outcome, in input order.

    Scenarios must share a seed and a stream spec so they see the same
    samples. With ``workers > 1`` episodes run in separate processes.
    """
    scenarios = list(scenarios)
    if not scenarios:
        raise ContractViolation("nothing to compare")
    if any(not isinstance(c, ScenarioConfig) for c in scenarios):
        raise ContractViolation("run_comparison needs ScenarioConfig items")
    if len({c.seed for c in scenarios}) > 1 or len({c.stream for c in scenarios}) > 1:
        raise ContractViolation("paired scenarios must share the seed and stream spec")
    names = _unique_names(scenarios)
    out = ComparisonResult()

    def take(name, res: EpisodeResult):
        out.frames[name] = res.metrics
        row = res.summary()
        row["name"] = name
        out.summary.append(row)
        if keep_results:
            out.results[name] = res

    try:
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                for name, res in zip(names, pool.map(run_episode, scenarios)):
                    take(name, res)
        else:
            for name, cfg in zip(names, scenarios):
                take(name, run_episode(cfg))
    except Exception as exc:  # flagged, with everything finished so far
        out.partial = True
        out.error = f"{type(exc).__name__}: {exc}"
    return out


def aligned(frames: dict, column: str) -> dict:
    """One column of every frame, keyed by scenario name."""
    return {name: f.column(column) for name, f in frames.items() if isinstance(f, MetricsFrame)}
