import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from intermlearn.core import ActionKind, ContractViolation, SystemState
from intermlearn.harness.compare import run_comparison
from intermlearn.harness.metrics import COLUMNS, MetricsFrame, MetricsRecorder, accuracy
from intermlearn.harness.scenario import (
    FORMAT,
    PRESETS,
    ScenarioConfig,
    ScenarioError,
    TraceSpec,
    dump_scenario,
    load_scenario,
    parse_scenario,
)
from intermlearn.harness.schedulers import SchedulerSpec, duty_cycle_schedule
from intermlearn.harness.streams import StreamSpec, gen_stream

A = ActionKind


def test_stream_no_anomalies():
    s = gen_stream(StreamSpec(anomaly_rate=0.0), seed=1)
    assert not s.labels(500).any()


def test_stream_anomaly_rate_binomial():
    labels = gen_stream(StreamSpec(kind="rf", anomaly_rate=0.1), seed=2).labels(10_000)
    sigma = math.sqrt(10_000 * 0.1 * 0.9)
    assert abs(labels.sum() - 1000) <= 3 * sigma


def test_stream_deterministic_and_random_access():
    a, b = gen_stream(StreamSpec(), 5), gen_stream(StreamSpec(), 5)
    for i in (0, 7, 99):
        assert np.array_equal(a.sample(i).window, b.sample(i).window)
    assert a.sample(3).label == a.take(5)[3].label


def test_stream_blocks_and_exposure():
    s = gen_stream(StreamSpec(kind="vibration", label_mode="blocks", block_len=10, labeled_fraction=0.3), 1)
    assert s.labels(40).tolist() == [0] * 10 + [1] * 10 + [0] * 10 + [1] * 10
    exposed = np.mean([s.sample(i).exposed for i in range(2000)])
    assert abs(exposed - 0.3) < 0.05
    assert len(s.sample(0).window) == 250


def test_holdout_is_balanced():
    h = gen_stream(StreamSpec(kind="air"), 1).holdout(20, seed=3)
    assert sum(x.label for x in h) == 10


def test_stream_rejects_bad_rate():
    with pytest.raises(ContractViolation):
        StreamSpec(anomaly_rate=1.0)


def _cycle(config, rng, n_cycles):
    """Drive the duty cycle the way the episode loop does; returns decided actions."""
    s, out = SystemState(), []
    while s.learned_count + s.inferred_count < n_cycles:
        d = duty_cycle_schedule(s, config, rng)
        tr = d.transition
        out.append(tr.actions[0] if tr.actions else None)
        if tr.kind == "admit":
            s = s.admitted()
        elif tr.kind == "advance":
            s = s.with_action(tr.example_id, tr.actions[0])
            if tr.actions[0] in (A.Learn, A.Infer):
                if tr.actions[0] is A.Learn:
                    s = SystemState(s.tuples, s.learned_count + 1, s.inferred_count, s.next_id)
                s = s.without(tr.example_id)
        else:
            s = s.without(tr.example_id)
    return out


def test_duty_all_learn_every_third():
    out = _cycle(SchedulerSpec(kind="duty_cycle", learn_pct=100, infer_pct=0), np.random.default_rng(0), 20)
    assert out[2::3] == [A.Learn] * 20
    assert out[0::3] == [A.Sense] * 20 and out[1::3] == [A.Extract] * 20


def test_duty_learn_fraction():
    out = _cycle(SchedulerSpec(kind="duty_cycle"), np.random.default_rng(1), 10_000)
    frac = out.count(A.Learn) / 10_000
    assert abs(frac - 0.9) <= 0.01


def test_duty_interleave_is_exact():
    out = _cycle(SchedulerSpec(kind="duty_cycle", interleave=True), None, 100)
    assert out.count(A.Learn) == 90
    assert out[2::3][:10].count(A.Infer) == 1


def test_duty_mayfly_discards_stale():
    cfg = SchedulerSpec(kind="duty_cycle", mayfly=True, staleness_s=60)
    s = SystemState.of([(1, A.Extract)])
    d = duty_cycle_schedule(s, cfg, np.random.default_rng(0), now=100.0, created_at={1: 10.0})
    assert d.transition.kind == "leave"
    d = duty_cycle_schedule(s, cfg, np.random.default_rng(0), now=50.0, created_at={1: 10.0})
    assert d.transition.kind == "advance"


def test_scheduler_spec_validation():
    with pytest.raises(ContractViolation):
        SchedulerSpec(kind="duty_cycle", learn_pct=80, infer_pct=10)
    SchedulerSpec(kind="planner", learn_pct=80, infer_pct=10)


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_presets_round_trip(name):
    cfg = PRESETS[name](seed=4)
    assert parse_scenario(dump_scenario(cfg)) == cfg


def test_scenario_overrides():
    cfg = PRESETS["vibration"](seed=1).with_(**{"selection.heuristic": "k_last", "scheduler__kind": "duty_cycle"})
    assert cfg.selection.heuristic == "k_last" and cfg.scheduler.kind == "duty_cycle"


def test_sub_seeds_isolated():
    cfg = PRESETS["air_quality"](seed=1)
    seeds = cfg.sub_seeds()
    assert len(set(seeds.values())) == len(seeds)
    assert cfg.with_(**{"scheduler.kind": "duty_cycle"}).sub_seeds() == seeds


GOOD = f"""format = {FORMAT}
[scenario]
name = x
seed = 3
[trace]
kind = constant
power_mw = 20
duration_s = 60
"""


def test_parse_minimal():
    cfg = parse_scenario(GOOD)
    assert cfg.name == "x" and cfg.seed == 3 and cfg.trace == TraceSpec.of("constant", power_mw=20.0, duration_s=60.0)


@pytest.mark.parametrize("text,line", [
    ("format = nope\n", 1),
    (GOOD + "[bogus]\n", 9),
    (GOOD + "[energy]\ncapacitance = lots\n", 10),
    (GOOD + "[energy]\nwattage = 3\n", 10),
    (GOOD + "[energy]\ncapacitance = 0.1\ncapacitance = 0.2\n", 11),
    (GOOD + "[scheduler]\nkind = duty_cycle\nlearn_pct = 50\n", 10),
    (GOOD + "no equals sign\n", 9),
])
def test_parse_errors_carry_line_numbers(text, line):
    with pytest.raises(ScenarioError) as exc:
        parse_scenario(text, source="s.scenario")
    assert exc.value.lineno == line
    assert f"s.scenario:{line}:" in str(exc.value)


def test_load_scenario_file_trace(tmp_path):
    from intermlearn.energy import constant_trace

    constant_trace(5.0, 100.0).to_csv(tmp_path / "trace.csv")
    (tmp_path / "a.scenario").write_text(GOOD.replace("kind = constant\npower_mw = 20\nduration_s = 60\n",
                                                      "kind = file\npath = trace.csv\n"))
    cfg = load_scenario(tmp_path / "a.scenario")
    assert cfg.build_trace().end == 100.0


def test_metrics_csv_round_trip(tmp_path):
    rec = MetricsRecorder()
    rec.record(0.0, 0.0, 0, 0)
    rec.counts[A.Sense] += 1
    rec.inference(True)
    rec.record(1.5, 3.8, 1, 2, holdout=0.75)
    p = tmp_path / "m.csv"
    rec.frame.to_csv(p)
    back = MetricsFrame.from_csv(p)
    assert back == rec.frame
    assert p.read_text().splitlines()[0] == ",".join(COLUMNS)
    assert math.isnan(back.rows[0][COLUMNS.index("accuracy")])


def test_sliding_accuracy_window():
    rec = MetricsRecorder()
    for i in range(40):
        rec.inference(i >= 10)
    assert rec.accuracy == 1.0
    rec.inference(False)
    assert rec.accuracy == pytest.approx(29 / 30)
    assert accuracy([1, 0], [1, 1]) == 0.5 and math.isnan(accuracy([], []))


def _paired(**kw):
    base = PRESETS["air_quality"](seed=2, days=0.5).with_(**{"duration_s": 43200.0, "holdout": 20})
    return base.with_(**kw)


@pytest.fixture(scope="module")
def comparison():
    scen = [
        _paired(name="planner"),
        _paired(name="duty90", scheduler=SchedulerSpec(kind="duty_cycle")),
        _paired(name="duty10", scheduler=SchedulerSpec(kind="duty_cycle", learn_pct=10.0, infer_pct=90.0)),
    ]
    return run_comparison(scen, keep_results=True)


def test_comparison_directions(comparison):
    assert not comparison.partial
    p, d90, d10 = (comparison.row(n)["learn_actions"] for n in ("planner", "duty90", "duty10"))
    assert p <= d90
    assert d10 < d90


def test_comparison_counters_non_decreasing(comparison):
    for frame in comparison.frames.values():
        for col in ("learned", "inferred", "n_sense", "n_learn", "n_infer", "energy_mj"):
            assert np.all(np.diff(frame.column(col)) >= 0)


def test_single_scenario_summary_equals_episode():
    from intermlearn.runtime.episode import run_episode

    cfg = _paired(name="solo", duration_s=7200.0)
    res = run_comparison([cfg])
    ep = run_episode(cfg)
    row = dict(res.summary[0])
    assert row == ep.summary()
    assert res.frames["solo"] == ep.metrics


def test_comparison_rejects_unpaired():
    with pytest.raises(ContractViolation):
        run_comparison([_paired(), _paired().with_(seed=9)])


def test_comparison_flags_partial_results():
    bad = _paired(name="bad", **{"trace": TraceSpec.of("file", path="/nonexistent/trace.csv")})
    res = run_comparison([_paired(name="ok", duration_s=600.0), bad])
    assert res.partial and "ok" in res.frames and "bad" not in res.frames and res.error


def test_comparison_write(tmp_path, comparison):
    paths = comparison.write(tmp_path)
    assert (tmp_path / "summary.csv").exists() and len(paths) == 4
    assert MetricsFrame.from_csv(tmp_path / "planner.metrics.csv") == comparison.frames["planner"]
