"""Command-line entry point.

Exit codes: 0 success, 1 inspection found a sub-step over budget (only with
``--fail-on-violation``), 2 malformed scenario or invalid input, 3 I/O
failure, 4 an episode failed during ``compare``.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .core import ContractViolation
from .harness.scenario import PRESETS, TRACE_KEYS, ScenarioError, TraceSpec, dump_scenario, load_scenario

EXIT_OK, EXIT_VIOLATION, EXIT_INPUT, EXIT_IO, EXIT_EPISODE = 0, 1, 2, 3, 4
SCENARIO_GLOB = "*.scenario"


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_run(args) -> int:
    from .runtime.episode import run_episode

    cfg = load_scenario(args.scenario)
    res = run_episode(cfg)
    out = _out_dir(args)
    log_path, metrics_path = out / f"{cfg.name}.log.csv", out / f"{cfg.name}.metrics.csv"
    res.log.to_csv(log_path)
    res.metrics.to_csv(metrics_path)
    s = res.summary()
    print(f"{cfg.name}: {s['learn_actions']} learns, {s['infer_actions']} infers, "
          f"{s['energy_mj']:.3f} mJ, holdout accuracy {s['final_holdout_accuracy']:.3f}")
    print(f"wrote {log_path} and {metrics_path}")
    return EXIT_OK


def cmd_compare(args) -> int:
    from .harness.compare import run_comparison

    if not Path(args.dir).is_dir():
        raise FileNotFoundError(f"no such directory: {args.dir}")
    files = sorted(Path(args.dir).glob(SCENARIO_GLOB))
    if not files:
        print(f"no {SCENARIO_GLOB} files in {args.dir}", file=sys.stderr)
        return EXIT_INPUT
    res = run_comparison([load_scenario(f) for f in files], workers=args.jobs)
    res.write(args.out or args.dir)
    sys.stdout.write(res.summary_csv_text())
    if res.partial:
        print(f"comparison incomplete: {res.error}", file=sys.stderr)
        return EXIT_EPISODE
    return EXIT_OK


def cmd_inspect(args) -> int:
    from .harness.streams import gen_stream
    from .inspection import inspect_app
    from .runtime.episode import build_app, build_costs

    cfg = load_scenario(args.scenario)
    seeds = cfg.sub_seeds()
    samples = gen_stream(cfg.stream, seeds["stream"]).take(args.corpus)
    app = build_app(cfg, seeds["scheduler"])
    report = inspect_app(app, [s.window for s in samples], build_costs(cfg), args.budget,
                         labels=[s.label if s.exposed else None for s in samples])
    text = report.to_csv_text()
    if args.out:
        report.to_csv(args.out)
    else:
        sys.stdout.write(text)
    for key, err in report.errors:
        print(f"error in {key[0].value}[{key[1]}]: {err}", file=sys.stderr)
    fails = report.failures()
    if fails:
        names = ", ".join(f"{k.value}[{i}]" for k, i in fails)
        print(f"{len(fails)} sub-step(s) over {args.budget} mJ: {names}", file=sys.stderr)
        if args.fail_on_violation:
            return EXIT_VIOLATION
    return EXIT_OK


def cmd_gen_trace(args) -> int:
    params = {}
    for key, cast in TRACE_KEYS[args.kind].items():
        v = getattr(args, key, None)
        if v is not None:
            params[key] = cast(v)
    trace = TraceSpec.of(args.kind, **params).build(seed=args.seed)
    if args.out:
        trace.to_csv(args.out)
    else:
        sys.stdout.write(trace.to_csv_text())
    return EXIT_OK


def cmd_preset(args) -> int:
    text = dump_scenario(PRESETS[args.name](seed=args.seed))
    if args.out:
        from ._io import atomic_write_text

        atomic_write_text(args.out, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="intermlearn", description="Simulator for on-device learning on energy-harvesting nodes.")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one episode and write its log and metrics CSVs")
    r.add_argument("scenario")
    r.add_argument("--out", default=".", help="output directory (default: current)")
    r.set_defaults(fn=cmd_run)

    c = sub.add_parser("compare", help=f"run every {SCENARIO_GLOB} in a directory as a paired comparison")
    c.add_argument("dir")
    c.add_argument("--out", default=None, help="output directory (default: the input directory)")
    c.add_argument("--jobs", type=int, default=1)
    c.set_defaults(fn=cmd_compare)

    i = sub.add_parser("inspect", help="check every sub-step against a per-wake energy budget")
    i.add_argument("scenario")
    i.add_argument("--budget", type=float, required=True, help="per-wake budget in mJ")
    i.add_argument("--corpus", type=int, default=50, help="number of stream samples to run")
    i.add_argument("--out", default=None, help="report CSV path (default: stdout)")
    i.add_argument("--fail-on-violation", action="store_true")
    i.set_defaults(fn=cmd_inspect)

    g = sub.add_parser("gen-trace", help="emit a harvester trace CSV")
    g.add_argument("kind", choices=[k for k in TRACE_KEYS if k != "file"])
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", default=None, help="CSV path (default: stdout)")
    seen = set()
    for kind, keys in TRACE_KEYS.items():
        for key in keys:
            if key not in seen and kind != "file":
                seen.add(key)
                g.add_argument("--" + key.replace("_", "-"), dest=key, default=None)
    g.set_defaults(fn=cmd_gen_trace)

    s = sub.add_parser("preset", help="print a packaged reference scenario file")
    s.add_argument("name", choices=sorted(PRESETS))
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", default=None)
    s.set_defaults(fn=cmd_preset)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ScenarioError, ContractViolation, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
