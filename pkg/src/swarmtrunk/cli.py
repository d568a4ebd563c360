"""Command-line entry point.

    swarmtrunk run       drive a full simulated run and print its report
    swarmtrunk resume    continue a run from a checkpoint file
    swarmtrunk report    rebuild a report from one or more log segments
    swarmtrunk cost      price a run, from aggregates or from a log
    swarmtrunk corpus    generate a proof corpus on disk
    swarmtrunk validate  structurally check a corpus directory
    swarmtrunk serve     expose a live run or a recorded log over HTTP
"""

from __future__ import annotations

import argparse
import json
import sys
from fractions import Fraction
from pathlib import Path
from typing import Optional, Sequence

from . import accounting
from .api import ApiServer, LogSource, RunDriver
from .control import (
    EventLog,
    RunReport,
    read_events,
    read_json,
    stitch_records,
    usage_records,
    write_json,
)
from .corpus import generate_scenario, load_scenario, save_scenario, validate_scenario
from .orchestrator import Run, RunConfig

CONFIG_FLAGS = (
    ("seed", str),
    ("corpus_seed", int),
    ("chapters", int),
    ("decls_per_chapter", int),
    ("thm_ratio", float),
    ("excluded", int),
    ("hidden_helpers", int),
    ("duplicate_pairs", int),
    ("concurrency", int),
    ("worktree_capacity", int),
    ("batch_size", int),
    ("max_agents", int),
    ("max_time", float),
    ("sketch_skip_rate", float),
    ("rabbit_rate", float),
    ("bad_tick_rate", float),
    ("review_request_rate", float),
    ("checkpoint_interval", float),
)


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", metavar="FILE", help="JSON run configuration")
    for name, kind in CONFIG_FLAGS:
        flag = "--" + name.replace("_", "-")
        parser.add_argument(flag, type=kind, default=None, dest=name)


def _build_config(args: argparse.Namespace) -> RunConfig:
    payload = dict(read_json(args.config)) if args.config else {}
    for name, _ in CONFIG_FLAGS:
        value = getattr(args, name, None)
        if value is not None:
            payload[name] = value
    return RunConfig.from_payload(payload)


def _load_corpus(args: argparse.Namespace):
    if getattr(args, "corpus", None):
        return load_scenario(args.corpus)
    return None


def _print_report(records, out) -> None:
    out.write(RunReport.from_events(records).render())


def cmd_run(args: argparse.Namespace, out) -> int:
    config = _build_config(args)
    sink = None
    if args.checkpoint:
        target = Path(args.checkpoint)
        sink = lambda payload: write_json(target, payload)  # noqa: E731
    log = EventLog(args.log) if args.log else EventLog()
    run = Run(config, scenario=_load_corpus(args), log=log, checkpoint_sink=sink)
    run.run()
    if args.checkpoint and sink is not None:
        sink(run.checkpoint_payload())
    log.close()
    _print_report(log.records(), out)
    return 0


def cmd_resume(args: argparse.Namespace, out) -> int:
    payload = read_json(args.checkpoint)
    sink = None
    if args.save_checkpoint:
        target = Path(args.save_checkpoint)
        sink = lambda p: write_json(target, p)  # noqa: E731
    start_seq = int(payload["event_seq"])
    log = EventLog(args.log, start_seq=start_seq) if args.log else EventLog(start_seq=start_seq)
    run = Run.from_checkpoint(
        payload, log=log, checkpoint_sink=sink, resume_sessions=not args.fresh_sessions
    )
    run.run()
    log.close()
    if log.records() and log.records()[0]["seq"] == 0:
        _print_report(log.records(), out)
    else:
        out.write(json.dumps(run.state_summary(), indent=2, sort_keys=True) + "\n")
    return 0


def cmd_report(args: argparse.Namespace, out) -> int:
    segments = [read_events(path) for path in args.logs]
    _print_report(stitch_records(segments), out)
    return 0


def _fmt_dollars(micro: int) -> str:
    return f"${micro / accounting.MICRO:,.2f}"


def cmd_cost(args: argparse.Namespace, out) -> int:
    if args.log:
        records = usage_records(read_events(args.log))
        if not records:
            out.write("no finished sessions in log\n")
            return 1
        n = len(records)
        turns = Fraction(sum(r.turns for r in records), n)
        tokens_in = sum(r.tokens_in for r in records)
        tokens_out = sum(r.tokens_out for r in records)
    else:
        if args.agents is None or args.avg_turns is None or args.tokens_in is None:
            out.write("either --log or --agents/--avg-turns/--tokens-in are required\n")
            return 2
        n = args.agents
        turns = Fraction(args.avg_turns)
        tokens_in = args.tokens_in
        tokens_out = args.tokens_out or 0
    estimate = accounting.estimate_run_cost(n, turns, tokens_in, tokens_out)
    rows = [
        ("sessions", f"{estimate.n_agents}"),
        ("avg turns", f"{estimate.avg_turns:g}"),
        ("tokens", f"{estimate.tokens_in:,} in / {estimate.tokens_out:,} out"),
        ("tokens per turn", f"{estimate.tokens_per_turn:,.1f}"),
        ("final context", f"{estimate.final_context:,.0f}"),
        ("input, no cache", _fmt_dollars(estimate.input_nocache_micro)),
        ("input, cached", _fmt_dollars(estimate.input_cache_micro)),
        ("output", _fmt_dollars(estimate.output_micro)),
        ("total, no cache", _fmt_dollars(estimate.total_nocache_micro)),
        ("total, cached", _fmt_dollars(estimate.total_cache_micro)),
        ("savings factor", f"{estimate.savings_factor:.2f}x"),
    ]
    for label, value in rows:
        out.write(f"{label:<18}{value}\n")
    return 0


def cmd_corpus(args: argparse.Namespace, out) -> int:
    scenario = generate_scenario(
        args.corpus_seed,
        chapters=args.chapters,
        decls_per_chapter=args.decls_per_chapter,
        thm_ratio=args.thm_ratio,
        excluded=args.excluded,
        hidden_helpers=args.hidden_helpers,
        duplicate_pairs=args.duplicate_pairs,
    )
    problems = validate_scenario(scenario)
    if problems:
        for problem in problems:
            out.write(f"invalid: {problem}\n")
        return 1
    save_scenario(scenario, args.out)
    out.write(f"{len(scenario.targets)} targets in {len(scenario.chunks)} chapters\n")
    out.write(f"corpus {scenario.content_hash()} written to {args.out}\n")
    return 0


def cmd_validate(args: argparse.Namespace, out) -> int:
    try:
        scenario = load_scenario(args.corpus)
    except (OSError, ValueError, KeyError) as exc:
        out.write(f"invalid: {exc}\n")
        return 1
    problems = validate_scenario(scenario)
    for problem in problems:
        out.write(f"invalid: {problem}\n")
    if problems:
        return 1
    out.write(f"ok: corpus {scenario.content_hash()}\n")
    return 0


def build_server(args: argparse.Namespace) -> tuple[ApiServer, Optional[RunDriver]]:
    """Construct (but do not start) the HTTP stack the serve command uses."""
    if args.log_file:
        source = LogSource.from_path(args.log_file)
        return ApiServer(source, host=args.host, port=args.port), None
    config = _build_config(args)
    log = EventLog(args.log) if args.log else EventLog()
    run = Run(config, scenario=_load_corpus(args), log=log)
    driver = RunDriver(run, pace=args.pace)
    return ApiServer(driver, host=args.host, port=args.port), driver


def cmd_serve(args: argparse.Namespace, out) -> int:
    server, driver = build_server(args)
    if driver is not None:
        driver.start()
    host, port = server.address
    mode = "replay of " + args.log_file if args.log_file else "live run"
    out.write(f"serving {mode} on http://{host}:{port}\n")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        if driver is not None:
            driver.stop()
        server.stop()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="swarmtrunk", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="drive a full run")
    _add_config_flags(p_run)
    p_run.add_argument("--corpus", metavar="DIR", help="use a corpus saved on disk")
    p_run.add_argument("--log", metavar="FILE", help="write the event log here")
    p_run.add_argument("--checkpoint", metavar="FILE", help="write checkpoints here")
    p_run.set_defaults(func=cmd_run)

    p_resume = sub.add_parser("resume", help="continue from a checkpoint")
    p_resume.add_argument("checkpoint", help="checkpoint JSON written by run/serve")
    p_resume.add_argument("--log", metavar="FILE", help="append the new segment here")
    p_resume.add_argument(
        "--save-checkpoint", metavar="FILE", help="keep writing checkpoints here"
    )
    p_resume.add_argument(
        "--fresh-sessions",
        action="store_true",
        help="abort saved sessions and requeue their tasks instead of resuming them",
    )
    p_resume.set_defaults(func=cmd_resume)

    p_report = sub.add_parser("report", help="summarise one or more log segments")
    p_report.add_argument("logs", nargs="+", help="log files, oldest first")
    p_report.set_defaults(func=cmd_report)

    p_cost = sub.add_parser("cost", help="price a run")
    p_cost.add_argument("--log", metavar="FILE", help="derive aggregates from this log")
    p_cost.add_argument("--agents", type=int, default=None)
    p_cost.add_argument("--avg-turns", default=None, help="mean dialog length in turns")
    p_cost.add_argument("--tokens-in", type=int, default=None)
    p_cost.add_argument("--tokens-out", type=int, default=None)
    p_cost.set_defaults(func=cmd_cost)

    p_corpus = sub.add_parser("corpus", help="generate a corpus directory")
    p_corpus.add_argument("--corpus-seed", type=int, default=1)
    p_corpus.add_argument("--chapters", type=int, default=8)
    p_corpus.add_argument("--decls-per-chapter", type=int, default=10)
    p_corpus.add_argument("--thm-ratio", type=float, default=0.7)
    p_corpus.add_argument("--excluded", type=int, default=2)
    p_corpus.add_argument("--hidden-helpers", type=int, default=2)
    p_corpus.add_argument("--duplicate-pairs", type=int, default=1)
    p_corpus.add_argument("--out", required=True, metavar="DIR")
    p_corpus.set_defaults(func=cmd_corpus)

    p_validate = sub.add_parser("validate", help="check a corpus directory")
    p_validate.add_argument("corpus", metavar="DIR")
    p_validate.set_defaults(func=cmd_validate)

    p_serve = sub.add_parser("serve", help="HTTP API over a live run or a log")
    _add_config_flags(p_serve)
    p_serve.add_argument("--corpus", metavar="DIR", help="use a corpus saved on disk")
    p_serve.add_argument("--log", metavar="FILE", help="write the live event log here")
    p_serve.add_argument(
        "--log-file", metavar="FILE", help="serve this recorded log instead of a live run"
    )
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8642)
    p_serve.add_argument(
        "--pace",
        type=float,
        default=10.0,
        help="simulated seconds advanced per wall second (0 = as fast as possible)",
    )
    p_serve.set_defaults(func=cmd_serve)
    return parser


def main(argv: Optional[Sequence[str]] = None, out=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args, out or sys.stdout)


if __name__ == "__main__":  # pragma: no cover
    raise SystemExit(main())
