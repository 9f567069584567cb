"""Command-line front end.

    actlab run --model schelling --regime uniform --mode by_agent --horizon 1000 \\
        --sample-at 1000 --config tolerance=8
    actlab sweep schelling_fig2 --parallelism 4 --out results/
    actlab summarize results/records.csv
    actlab compare results/records.csv --a regime=uniform --b regime=random --metric moves
    actlab plot results/summary.csv --kind line --metric moves --out moves.svg

Data goes to stdout (CSV) or files; progress and diagnostics go to stderr.
Exit codes: 0 success, 2 usage or configuration error, 3 runtime failure.
"""
from __future__ import annotations

import argparse
import io
import logging
import sys
from importlib import resources
from pathlib import Path

import yaml

from .engine import ConfigurationError, ModeSpec, RegimeSpec
from .experiments import (
    ExperimentPlan,
    compare,
    execute_plan,
    parse_plan,
    read_records_csv,
    read_summary_csv,
    summarize,
    write_failures_csv,
    write_records_csv,
    write_summary_csv,
)
from .experiments.io import CsvFormatError, records_csv_text, summary_csv_text
from .experiments.plan import PlanError, expand_plan
from .experiments.runner import run_one
from .experiments.stats import SummaryError
from .plotting import FigureError, FigureSpec, write_figure

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 2, 3
PRESETS = ("schelling_fig2", "dpd_fig3", "nowakmay_sync_vs_async")

log = logging.getLogger("actlab")


class UsageError(ConfigurationError):
    pass


def _key_values(items, flag) -> dict:
    out = {}
    for item in items or ():
        for part in item.split(","):
            key, sep, value = part.partition("=")
            if not sep or not key:
                raise UsageError(f"{flag} expects key=value, got {part!r}")
            out[key.strip()] = value.strip()
    return out


def _typed(values: dict) -> dict:
    return {k: yaml.safe_load(v) if v != "" else "" for k, v in values.items()}


def _times(items) -> tuple[int, ...]:
    out = []
    for item in items or ():
        for part in str(item).split(","):
            try:
                out.append(int(part))
            except ValueError:
                raise UsageError(f"--sample-at expects integers, got {part!r}") from None
    return tuple(out)


def load_plan_source(source: str) -> ExperimentPlan:
    path = Path(source)
    if path.exists():
        return parse_plan(path.read_text(encoding="utf-8"))
    if source in PRESETS:
        text = resources.files("actlab.presets").joinpath(f"{source}.yaml").read_text("utf-8")
        return parse_plan(text)
    raise UsageError(f"plan {source!r} is neither a file nor a preset ({', '.join(PRESETS)})")


def cmd_run(args) -> int:
    regime = RegimeSpec.parse(args.regime)
    mode = ModeSpec.parse(args.mode)
    sample_at = _times(args.sample_at) or (args.horizon,)
    config = _typed(_key_values(args.config, "--config"))
    # a single run is a one-cell plan; the first config key labels the cell
    if config:
        name = next(iter(config))
        value = config[name]
    else:
        from .models import make_config

        name, value = "width", make_config(args.model, {}).width
    plan = ExperimentPlan(model=args.model, regimes=(regime,), modes=(mode,), sweep_name=name,
                          sweep_values=(value,), seeds=1, master_seed=args.seed,
                          horizon=args.horizon, sample_at=sample_at, config=config)
    rec = run_one(expand_plan(plan)[0], plan.digest())
    if rec.failed:
        print(f"error: run failed: {rec.error}", file=sys.stderr)
        return EXIT_RUNTIME
    sys.stdout.write(records_csv_text([rec]))
    if args.out:
        write_records_csv([rec], args.out)
    return EXIT_OK


def cmd_sweep(args) -> int:
    plan = load_plan_source(args.plan)
    if args.seed is not None:
        plan = ExperimentPlan(**{**plan.__dict__, "master_seed": args.seed})
    if args.seeds is not None:
        plan = ExperimentPlan(**{**plan.__dict__, "seeds": args.seeds})
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    total = plan.run_count
    print(f"sweep: {total} runs, parallelism {args.parallelism}", file=sys.stderr)

    def progress(done, total):
        if done == total or done % max(1, total // 20) == 0:
            print(f"  {done}/{total} runs", file=sys.stderr)

    records = execute_plan(plan, args.parallelism, progress)
    write_records_csv(records, out / "records.csv")
    ok = [r for r in records if not r.failed]
    if ok:
        write_summary_csv(summarize(ok), out / "summary.csv")
    failed = write_failures_csv(records, out / "failures.csv") if len(ok) < len(records) else 0
    print(f"wrote {out / 'records.csv'} and {out / 'summary.csv'}"
          + (f"; {failed} failed runs in {out / 'failures.csv'}" if failed else ""), file=sys.stderr)
    return EXIT_OK if ok else EXIT_RUNTIME


def cmd_summarize(args) -> int:
    records = read_records_csv(args.records)
    table = summarize(records, metrics=args.metric or None, sample_time=args.sample_t)
    if args.out:
        write_summary_csv(table, args.out)
    else:
        sys.stdout.write(summary_csv_text(table))
    return EXIT_OK


def cmd_compare(args) -> int:
    records = read_records_csv(args.records)
    a = _key_values(args.a, "--a")
    b = _key_values(args.b, "--b")
    res = compare(records, a, b, args.metric, args.sample_t)
    buf = io.StringIO()
    buf.write("field,value\n")
    for name, value in (
        ("cell_a", ";".join(f"{k}={v}" for k, v in res.cell_a)),
        ("cell_b", ";".join(f"{k}={v}" for k, v in res.cell_b)),
        ("metric", res.metric), ("n_a", res.n_a), ("n_b", res.n_b),
        ("statistic", repr(res.statistic)), ("df", repr(res.df)),
        ("p_value", repr(res.p_value)), ("mean_difference", repr(res.mean_difference)),
    ):
        buf.write(f"{name},{value}\n")
    sys.stdout.write(buf.getvalue())
    return EXIT_OK


def cmd_plot(args) -> int:
    if not args.out:
        raise UsageError("plot needs --out PATH")
    table = read_summary_csv(args.summary)
    spec = FigureSpec(args.kind, tuple(args.metric), args.title or "")
    write_figure(table, spec, args.out)
    print(f"wrote {args.out}", file=sys.stderr)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="master seed")
    common.add_argument("--out", default=None, help="output file or directory")
    common.add_argument("--parallelism", type=int, default=1, help="worker processes")
    common.add_argument("--format", choices=("csv",), default="csv")

    parser = argparse.ArgumentParser(prog="actlab", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", parents=[common], help="single run, metrics to stdout")
    p.add_argument("--model", required=True, choices=("schelling", "dpd", "spatialpd"))
    p.add_argument("--regime", required=True,
                   help="synchronous[:policy], ordered_sweep, fixed_random_order, uniform, "
                        "random, exponential[:rate], incentive")
    p.add_argument("--mode", default="by_agent", help="by_agent | by_rule [+shuffled][+shared]")
    p.add_argument("--horizon", type=int, required=True)
    p.add_argument("--sample-at", action="append", help="sample steps (repeat or comma list)")
    p.add_argument("--config", action="append", help="model config key=value")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", parents=[common], help="execute a plan file or preset")
    p.add_argument("plan", help=f"plan path or preset: {', '.join(PRESETS)}")
    p.add_argument("--seeds", type=int, default=None, help="override the plan's replicate count")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("summarize", parents=[common], help="group records into a summary CSV")
    p.add_argument("records")
    p.add_argument("--metric", action="append")
    p.add_argument("--sample-t", type=int, default=None)
    p.set_defaults(func=cmd_summarize)

    p = sub.add_parser("compare", parents=[common], help="Welch test between two cells")
    p.add_argument("records")
    p.add_argument("--a", action="append", required=True, help="cell A selector key=value")
    p.add_argument("--b", action="append", required=True, help="cell B selector key=value")
    p.add_argument("--metric", required=True)
    p.add_argument("--sample-t", type=int, default=None)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("plot", parents=[common], help="SVG figure from a summary CSV")
    p.add_argument("summary")
    p.add_argument("--kind", choices=("line", "grouped-bar"), default="line")
    p.add_argument("--metric", action="append", required=True)
    p.add_argument("--title", default=None)
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, stream=sys.stderr, format="%(levelname)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "run" and args.seed is None:
        args.seed = 0
    try:
        return args.func(args)
    except (ConfigurationError, PlanError, FigureError, SummaryError, CsvFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
