"""Command-line front end.

Three subcommands:

    vhosim validate SCENARIO...           check scenario files, report offences
    vhosim run SCENARIO --mode M --seed N simulate once, optionally dump trace/report
    vhosim compare SCENARIO --seeds N     run both modes per seed, print deltas

A scenario argument is a JSON file path or `builtin:<name>` for one of the
shipped scenarios (`builtin:list` prints the names).  Relative output paths
land in $VHOSIM_OUTPUT_DIR when that is set.

Exit codes: 0 success, 1 usage error, 2 scenario validation error, 3 runtime
failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from importlib import resources
from pathlib import Path

from .engine import MODES, MetricsReport, dump_trace, run_scenario
from .errors import SimulationError, ValidationError
from .scenario import Scenario, load_scenario

REPORT_COLUMNS = (
    "seed",
    "mode",
    "packets_generated",
    "packets_lost",
    "loss_ratio",
    "mean_latency_s",
    "max_latency_s",
    "sessions_total",
    "sessions_rejected",
    "rejection_probability",
    "mean_wait_imperative_s",
    "mean_wait_alternative_s",
)

_INT_COLUMNS = {"seed", "packets_generated", "packets_lost", "sessions_total", "sessions_rejected"}


def builtin_scenario_names() -> list[str]:
    root = resources.files("vhosim").joinpath("scenarios")
    return sorted(p.name[: -len(".json")] for p in root.iterdir() if p.name.endswith(".json"))


def load_scenario_arg(arg: str) -> Scenario:
    """Resolve a CLI scenario argument: a path or builtin:<name>."""
    if arg.startswith("builtin:"):
        name = arg[len("builtin:"):]
        names = builtin_scenario_names()
        if name not in names:
            raise ValidationError(arg, f"unknown builtin scenario, expected one of: {', '.join(names)}")
        res = resources.files("vhosim").joinpath(f"scenarios/{name}.json")
        with resources.as_file(res) as path:
            return load_scenario(str(path))
    return load_scenario(arg)


def _resolve_output(path: str) -> Path:
    base = os.environ.get("VHOSIM_OUTPUT_DIR", "")
    out = Path(path)
    if base and not out.is_absolute():
        out = Path(base) / out
    out.parent.mkdir(parents=True, exist_ok=True)
    return out


def report_row(metrics: MetricsReport) -> dict:
    return {
        "seed": metrics.seed,
        "mode": metrics.mode,
        "packets_generated": metrics.packets_generated,
        "packets_lost": metrics.packets_dropped,
        "loss_ratio": metrics.loss_ratio,
        "mean_latency_s": metrics.mean_latency_s,
        "max_latency_s": metrics.max_latency_s,
        "sessions_total": metrics.sessions_total,
        "sessions_rejected": metrics.sessions_rejected,
        "rejection_probability": metrics.rejection_probability,
        "mean_wait_imperative_s": metrics.mean_wait_imperative_s,
        "mean_wait_alternative_s": metrics.mean_wait_alternative_s,
    }


def emit_report(rows: list[dict], fmt: str, path: Path) -> None:
    if fmt == "json":
        path.write_text(json.dumps(rows, indent=2) + "\n", encoding="utf-8")
        return
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=REPORT_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: ("" if row[k] is None else row[k]) for k in REPORT_COLUMNS})


def parse_report(path: Path, fmt: str) -> list[dict]:
    """Read a report back; empty CSV cells become None, numbers regain their type."""
    if fmt == "json":
        return json.loads(path.read_text(encoding="utf-8"))
    out: list[dict] = []
    with open(path, newline="", encoding="utf-8") as fh:
        for raw in csv.DictReader(fh):
            row: dict = {}
            for key, value in raw.items():
                if key == "mode":
                    row[key] = value
                elif value == "":
                    row[key] = None
                elif key in _INT_COLUMNS:
                    row[key] = int(value)
                else:
                    row[key] = float(value)
            out.append(row)
    return out


def _fmt(value, width: int = 10) -> str:
    if value is None:
        return "-".rjust(width)
    if isinstance(value, float):
        return f"{value:.4f}".rjust(width)
    return str(value).rjust(width)


def _cmd_validate(args: argparse.Namespace) -> int:
    status = 0
    for arg in args.scenarios:
        try:
            load_scenario_arg(arg)
        except ValidationError as exc:
            print(f"error: {exc}", file=sys.stderr)
            status = 2
        else:
            print(f"ok: {arg}")
    return status


def _cmd_run(args: argparse.Namespace) -> int:
    scenario = load_scenario_arg(args.scenario)
    trace, metrics = run_scenario(scenario, args.mode, args.seed, list_limit=args.list_limit)
    if args.trace:
        trace_path = _resolve_output(args.trace)
        trace_path.write_text(dump_trace(trace), encoding="utf-8")
        print(f"trace: {trace_path}")
    if args.report:
        report_path = _resolve_output(args.report)
        emit_report([report_row(metrics)], args.format, report_path)
        print(f"report: {report_path}")
    lat = "-" if metrics.mean_latency_s is None else f"{metrics.mean_latency_s:.4f}"
    print(
        f"mode={metrics.mode} seed={metrics.seed} "
        f"generated={metrics.packets_generated} lost={metrics.packets_dropped} "
        f"loss_ratio={metrics.loss_ratio:.4f} handovers={len(metrics.handover_latencies_s)} "
        f"mean_latency_s={lat} "
        f"rejected={metrics.sessions_rejected}/{metrics.sessions_total}"
    )
    return 0


def _cmd_compare(args: argparse.Namespace) -> int:
    scenario = load_scenario_arg(args.scenario)
    rows: list[dict] = []
    per_mode: dict[str, list[MetricsReport]] = {m: [] for m in MODES}
    print(f"{'seed':>6} {'mode':>9} {'lost':>6} {'loss_ratio':>10} {'mean_lat_s':>10} {'max_lat_s':>10} {'rejected':>8}")
    for i in range(args.seeds):
        seed = args.seed_base + i
        for mode in MODES:
            _, metrics = run_scenario(scenario, mode, seed)
            rows.append(report_row(metrics))
            per_mode[mode].append(metrics)
            print(
                f"{seed:>6} {mode:>9} {metrics.packets_dropped:>6} "
                f"{_fmt(metrics.loss_ratio)} {_fmt(metrics.mean_latency_s)} "
                f"{_fmt(metrics.max_latency_s)} "
                f"{metrics.sessions_rejected:>3}/{metrics.sessions_total:<3}"
            )

    def agg(values: list[float | None]) -> float | None:
        known = [v for v in values if v is not None]
        return sum(known) / len(known) if known else None

    print("aggregate over seeds:")
    for mode in MODES:
        ms = per_mode[mode]
        print(
            f"{'':>6} {mode:>9} "
            f"{sum(m.packets_dropped for m in ms):>6} "
            f"{_fmt(agg([m.loss_ratio for m in ms]))} "
            f"{_fmt(agg([m.mean_latency_s for m in ms]))} "
            f"{_fmt(agg([m.max_latency_s for m in ms]))} "
            f"{sum(m.sessions_rejected for m in ms):>3}/{sum(m.sessions_total for m in ms):<3}"
        )
    if args.report:
        report_path = _resolve_output(args.report)
        emit_report(rows, args.format, report_path)
        print(f"report: {report_path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vhosim",
        description="Discrete-event simulator for MIH-driven vertical handover",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_val = sub.add_parser("validate", help="check scenario files without running them")
    p_val.add_argument("scenarios", nargs="+", metavar="SCENARIO")
    p_val.set_defaults(func=_cmd_validate)

    p_run = sub.add_parser("run", help="simulate one scenario")
    p_run.add_argument("scenario", metavar="SCENARIO")
    p_run.add_argument("--mode", choices=MODES, default="iam4vho")
    p_run.add_argument("--seed", type=int, default=0)
    p_run.add_argument("--list-limit", type=int, default=None,
                       help="truncate every priority list to its first N entries")
    p_run.add_argument("--trace", metavar="PATH", help="write the event trace as JSON lines")
    p_run.add_argument("--report", metavar="PATH", help="write the metrics report")
    p_run.add_argument("--format", choices=("csv", "json"), default="csv")
    p_run.set_defaults(func=_cmd_run)

    p_cmp = sub.add_parser("compare", help="run both modes over a seed range")
    p_cmp.add_argument("scenario", metavar="SCENARIO")
    p_cmp.add_argument("--seeds", type=int, default=10, help="number of seeds")
    p_cmp.add_argument("--seed-base", type=int, default=0)
    p_cmp.add_argument("--report", metavar="PATH")
    p_cmp.add_argument("--format", choices=("csv", "json"), default="csv")
    p_cmp.set_defaults(func=_cmd_compare)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (SimulationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
