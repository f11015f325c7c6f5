"""Command-line front end.

Exit codes: 0 success, 1 usage error, 2 data error, 3 network error. Failures
also print one JSON object on standard error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from collections import Counter
from dataclasses import asdict
from datetime import date, timedelta
from pathlib import Path
from typing import Any, Callable, Sequence

from .errors import DataError, NetworkError, WaybackError
from .ingest import IngestConfig, feasibility_filter, fetch, normalize, read_raw, write_raw
from .model import BugRecord, EventLog, day_of, load_log, parse_day, parse_ts, save_log
from .prioritize import (
    STRATEGY_NAMES,
    TEXT_STRATEGIES,
    build_text_context,
    evaluate_prioritization,
    make_strategy,
    write_details,
)
from .prioritize import write_reports as write_prioritization
from .replay import WaybackMachine, conservation_check, end_of_day, run, state_at, write_snapshots
from .stats import complete_pairs, fixed_vs_open_series, month_key, months_between, paired_t_one_tailed, write_series
from .synthetic import DEFAULT_DELTAS, DensifyStats, count_arcs, densify
from .triage import (
    ALGORITHMS,
    DEFAULT_RELEASE_DAYS,
    RANDOM_REPEATS,
    average_reports,
    build_triage_context,
    report_metrics,
    run_triage,
    write_assignments,
)
from .triage import write_reports as write_triage

logger = logging.getLogger("wayback")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NETWORK = 0, 1, 2, 3
ATTRIBUTES = ("degree", "depth", "severity", "priority")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # argparse would exit with 2
        self.print_usage(sys.stderr)
        raise UsageError(message)


def read_config(path: str | Path) -> dict[str, str]:
    """``key = value`` lines; ``#`` starts a comment. Relative paths stay relative to the file."""
    path = Path(path)
    cfg: dict[str, str] = {}
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read config {path}: {exc.strerror}") from exc
    for line_no, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DataError(f"{path}:{line_no}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        cfg[key] = value
    for key in ("offline_dir", "data_dir", "out"):
        if key in cfg and not Path(cfg[key]).is_absolute():
            cfg[key] = str((path.parent / cfg[key]).resolve())
    return cfg


# --- shared plumbing --------------------------------------------------------

class Session:
    """Merged config + flags for one invocation."""

    def __init__(self, args: argparse.Namespace) -> None:
        self.args = args
        self.cfg: dict[str, Any] = read_config(args.config) if args.config else {}
        self.out = Path(args.out or self.cfg.get("out") or ".")

    def get(self, key: str, default: Any = None) -> Any:
        value = self.cfg.get(key)
        return default if value in (None, "") else value

    def data_dir(self) -> Path:
        if self.args.data:
            return Path(self.args.data)
        if self.get("data_dir"):
            return Path(self.get("data_dir"))
        return self.out / "normalized"

    def log(self) -> EventLog:
        directory = self.data_dir()
        if not (directory / "events.jsonl").exists():
            raise DataError(f"no normalized log in {directory}; run ingest first")
        return load_log(directory)

    def window(self, log: EventLog) -> tuple[date, date]:
        if not log.events:
            raise DataError("the event log is empty")
        start = self.args.from_ or self.get("from") or day_of(log.start).isoformat()
        end = self.args.to or self.get("to") or day_of(log.end).isoformat()
        return parse_day(start), parse_day(end)

    def seed(self) -> int:
        value = self.args.seed if getattr(self.args, "seed", None) is not None else self.get("seed", 0)
        return int(value)

    def model_params(self) -> dict[str, int]:
        return {"n_topics": int(self.get("lda_topics", 20)), "lda_iters": int(self.get("lda_iters", 500))}

    def output(self, name: str) -> Path:
        self.out.mkdir(parents=True, exist_ok=True)
        return self.out / name


def training_bugs(log: EventLog, start: date) -> list[BugRecord]:
    """Bugs resolved before the evaluation window opens."""
    return [
        b for b in log.bugs.values()
        if b.is_resolved and b.resolved_at is not None and day_of(b.resolved_at) < start
    ]


def _emit(obj: dict) -> None:
    print(json.dumps(obj, sort_keys=True, default=str))


# --- subcommands ------------------------------------------------------------

def cmd_ingest(s: Session) -> None:
    merged = dict(s.cfg)
    if s.args.from_:
        merged["window_start"] = s.args.from_
    if s.args.to:
        merged["window_end"] = s.args.to
    offline = s.args.offline or str(s.get("offline", "")).lower() in ("1", "true", "yes")
    if not offline:
        merged.pop("offline_dir", None)
    elif not merged.get("offline_dir"):
        raise DataError("offline mode needs offline_dir in the config")
    config = IngestConfig.from_mapping(merged)
    result = fetch(config)
    raw_dir = s.output("raw")
    write_raw(result, raw_dir)
    stats: Counter = Counter(result.skipped)
    raw = read_raw(raw_dir)
    log = normalize(raw.bugs, raw.histories, config.window_start, config.window_end, stats)
    save_log(s.data_dir(), log)
    _emit({"command": "ingest", "raw_bugs": len(result.bugs), "bugs": len(log.bugs), "events": len(log.events),
           "retries": result.retries, **{k: v for k, v in sorted(stats.items())}})


def cmd_replay(s: Session) -> None:
    log = s.log()
    start, end = s.window(log)
    granularity = int(s.args.granularity or s.get("granularity", 1))
    machine = WaybackMachine(log)
    path = s.output("snapshots.csv")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        write_snapshots(fh, run(log, start, end, granularity, machine=machine))
    report = conservation_check(machine)
    if not report:
        raise DataError(f"conservation check failed: {report.diagnostic()}")
    _emit({"command": "replay", "snapshots": str(path), "warnings": dict(machine.warnings)})


def cmd_stateat(s: Session) -> None:
    log = s.log()
    try:
        t = parse_ts(s.args.time) if "T" in s.args.time else end_of_day(parse_day(s.args.time))
    except ValueError as exc:
        raise UsageError(f"invalid --time {s.args.time!r}") from exc
    machine = state_at(log, t)
    machine.graph.write_csv(sys.stdout)


def _strategy_names(requested: list[str] | None) -> list[str]:
    if not requested or "all" in requested:
        return list(STRATEGY_NAMES)
    return list(dict.fromkeys(requested))


def cmd_prioritize(s: Session) -> None:
    log = s.log()
    start, end = s.window(log)
    seed = s.seed()
    alpha = float(s.args.alpha if s.args.alpha is not None else s.get("alpha", 0.5))
    repeats = int(s.args.repeats if s.args.repeats is not None else s.get("repeats", 3))
    names = _strategy_names(s.args.strategy)
    feas = feasibility_filter(log, end)
    context = None
    if any(n in TEXT_STRATEGIES for n in names):
        context = build_text_context(training_bugs(log, start), seed=seed, **s.model_params())
    reports = []
    for name in names:
        strategy = make_strategy(name, context, alpha)
        rep = evaluate_prioritization(log, strategy, start, end, feas.feasible, seed=seed, repeats=repeats)
        reports.append(rep)
        if s.args.details:
            with open(s.output(f"prioritization_{name}.csv"), "w", encoding="utf-8", newline="") as fh:
                write_details(fh, rep)
    with open(s.output("prioritization.csv"), "w", encoding="utf-8", newline="") as fh:
        write_prioritization(fh, reports)
    for rep in reports:
        _emit({"command": "prioritize", **{k: v for k, v in asdict(rep).items() if k != "details"}})


def cmd_triage(s: Session) -> None:
    log = s.log()
    start, end = s.window(log)
    seed = s.seed()
    alpha = float(s.args.alpha if s.args.alpha is not None else s.get("alpha", 0.5))
    release = int(s.args.release_days or s.get("release_days", DEFAULT_RELEASE_DAYS))
    repeats = int(s.args.repeats if s.args.repeats is not None else s.get("triage_repeats", RANDOM_REPEATS))
    substitute = s.args.substitute_parent or str(s.get("substitute_parent", "")).lower() in ("1", "true", "yes")
    algorithms = list(ALGORITHMS) if not s.args.algorithm or "all" in s.args.algorithm else list(dict.fromkeys(s.args.algorithm))
    feas = feasibility_filter(log, end)
    ctx = build_triage_context(training_bugs(log, start), feas.active, seed=seed, **s.model_params())
    reports = []
    for alg in algorithms:
        runs = []
        for r in range(repeats if alg == "random" else 1):
            runs.append(run_triage(
                log, alg, start, end, feas.active, feas.feasible, ctx,
                alpha=alpha, release_interval=release, substitute=substitute, seed=seed + r,
            ))
        with open(s.output(f"assignments_{alg}.csv"), "w", encoding="utf-8", newline="") as fh:
            write_assignments(fh, runs[0])
        reports.append(average_reports([report_metrics(x, ctx.profiles, log) for x in runs]))
    with open(s.output("triage.csv"), "w", encoding="utf-8", newline="") as fh:
        write_triage(fh, reports)
    for rep in reports:
        _emit({"command": "triage", **asdict(rep)})


def cmd_synth(s: Session) -> None:
    log = s.log()
    gamma = float(s.args.gamma if s.args.gamma is not None else s.get("gamma", 3.0))
    try:
        deltas = tuple(int(x) for x in (s.args.deltas or s.get("deltas", ",".join(map(str, DEFAULT_DELTAS)))).split(","))
    except ValueError as exc:
        raise UsageError("--deltas takes comma-separated integers") from exc
    stats = DensifyStats()
    dense = densify(log, gamma, deltas, s.seed(), stats)
    target = s.output("synthetic")
    save_log(target, dense)
    _emit({"command": "synth", "arcs_before": count_arcs(log), "arcs_after": count_arcs(dense),
           "added": stats.added, "skipped": stats.skipped, "redraws": stats.redraws, "out": str(target)})


def cmd_rq1(s: Session) -> None:
    log = s.log()
    start, end = s.window(log)
    attribute = s.args.attribute
    machine = WaybackMachine(log)
    open_means: dict[str, float | None] = {}
    for snap in run(log, start, end, 1, machine=machine):
        day = snap.date
        if (day + timedelta(days=1)).month != day.month or day == end:
            open_means[month_key(day)] = machine.open_attribute_mean(attribute)
    months = months_between(start, end)
    fixes = [f for f in machine.fixes if start <= f.day <= end]
    points = fixed_vs_open_series(fixes, open_means, attribute, months)
    with open(s.output(f"rq1_{attribute}.csv"), "w", encoding="utf-8", newline="") as fh:
        write_series(fh, points)
    xs, ys = complete_pairs(points)
    result = paired_t_one_tailed(xs, ys)
    _emit({"command": "rq1", "attribute": attribute, "months": len(xs), "t_stat": result.t_stat, "p_value": result.p_value})


# --- parser -----------------------------------------------------------------

def _common_flags(suppress: bool) -> argparse.ArgumentParser:
    # subcommands repeat the global flags; SUPPRESS keeps them from clobbering earlier values
    d = {"default": argparse.SUPPRESS} if suppress else {}
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value configuration file", **d)
    common.add_argument("--from", dest="from_", metavar="DATE", help="first day of the window", **d)
    common.add_argument("--to", metavar="DATE", help="last day of the window", **d)
    common.add_argument("--out", help="output directory", **d)
    common.add_argument("--data", help="normalized log directory (default OUT/normalized)", **d)
    common.add_argument("--offline", action="store_true", help="read raw payloads from offline_dir", **d)
    common.add_argument("-v", "--verbose", action="count", **({"default": 0} if not suppress else d))
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common_flags(suppress=True)
    parser = _Parser(prog="wayback", description="Replay issue-tracker history and evaluate triage strategies.", parents=[_common_flags(suppress=False)])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sub.add_parser("ingest", parents=[common], help="fetch and normalize bug data")

    p = sub.add_parser("replay", parents=[common], help="daily snapshots CSV")
    p.add_argument("--granularity", type=int, help="days per snapshot (default 1)")

    p = sub.add_parser("stateat", parents=[common], help="dependency graph at a timestamp, as CSV")
    p.add_argument("--time", required=True, help="RFC 3339 timestamp or a day (end of that day)")

    p = sub.add_parser("prioritize", parents=[common], help="evaluate prioritization strategies")
    p.add_argument("--strategy", action="append", choices=(*STRATEGY_NAMES, "all"), help="repeatable; default all")
    p.add_argument("--seed", type=int)
    p.add_argument("--repeats", type=int, help="runs averaged for the random strategy (default 3)")
    p.add_argument("--alpha", type=float, help="priority weight of cost_priority (default 0.5)")
    p.add_argument("--details", action="store_true", help="also write per-bug detail CSVs")

    p = sub.add_parser("triage", parents=[common], help="simulate triage algorithms")
    p.add_argument("--algorithm", action="append", choices=(*ALGORITHMS, "all"), help="repeatable; default all")
    p.add_argument("--alpha", type=float, help="suitability weight of costriage (default 0.5)")
    p.add_argument("--release-days", type=int, help=f"release cadence in days (default {DEFAULT_RELEASE_DAYS})")
    p.add_argument("--substitute-parent", action="store_true", help="assign a blocked bug's root ancestor instead")
    p.add_argument("--seed", type=int)
    p.add_argument("--repeats", type=int, help=f"runs averaged for random (default {RANDOM_REPEATS})")

    p = sub.add_parser("synth", parents=[common], help="write a densified copy of the log")
    p.add_argument("--gamma", type=float, help="expansion factor (default 3)")
    p.add_argument("--deltas", help="comma-separated intercepts (default -2,-1,0,1,2)")
    p.add_argument("--seed", type=int)

    p = sub.add_parser("rq1", parents=[common], help="fixed-vs-open monthly series and paired t-test")
    p.add_argument("--attribute", choices=ATTRIBUTES, required=True)
    return parser


COMMANDS: dict[str, Callable[[Session], None]] = {
    "ingest": cmd_ingest,
    "replay": cmd_replay,
    "stateat": cmd_stateat,
    "prioritize": cmd_prioritize,
    "triage": cmd_triage,
    "synth": cmd_synth,
    "rq1": cmd_rq1,
}


def _fail(code: int, exc: BaseException) -> int:
    print(json.dumps({"error": type(exc).__name__, "message": str(exc), "exit_code": code}), file=sys.stderr)
    return code


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
        COMMANDS[args.command](Session(args))
    except UsageError as exc:
        return _fail(EXIT_USAGE, exc)
    except NetworkError as exc:
        return _fail(EXIT_NETWORK, exc)
    except (WaybackError, OSError) as exc:
        return _fail(EXIT_DATA, exc)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
