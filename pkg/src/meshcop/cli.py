"""Command-line entry point."""
from __future__ import annotations

import argparse
import sys
from typing import Optional

from .harness import SCENARIOS, ExplorationConfig, replay_dump
from .queries import (
    REGISTRY,
    UnknownQueryId,
    render_query_list,
    render_report,
    run_suite,
)
from .roles import MUTATIONS


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _csv(text: str) -> list:
    return [t for t in (p.strip() for p in text.split(",")) if t]


def _nonneg(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}")
    if v < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0: {text!r}")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="meshcop", description="Bounded symbolic analysis of MeshCoP.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="explore a scenario and evaluate queries")
    run.add_argument("--scenario", choices=sorted(SCENARIOS), default="full")
    run.add_argument("--mode", choices=("honest", "adversarial"), default="adversarial")
    run.add_argument("--mutations", type=_csv, default=[],
                     help="comma-separated: " + ", ".join(sorted(MUTATIONS)))
    run.add_argument("--sessions", type=_nonneg, default=2)
    run.add_argument("--depth", type=_nonneg, default=2, help="forge depth bound")
    run.add_argument("--schedule-bound", type=_nonneg, default=3)
    run.add_argument("--seeds", type=lambda s: [int(x) for x in _csv(s)], default=[])
    run.add_argument("--systematic", dest="systematic", action="store_true", default=None)
    run.add_argument("--no-systematic", dest="systematic", action="store_false")
    run.add_argument("--candidate-cap", type=_nonneg, default=64)
    run.add_argument("--queries", type=_csv, default=None,
                     help="comma-separated query ids (default: all for the scenario)")
    run.add_argument("--format", choices=("text", "structured"), default="text")
    run.add_argument("--dump-traces", metavar="DIR", default=None)

    sub.add_parser("list-queries", help="print every registered query")

    rep = sub.add_parser("replay", help="re-run a trace dump and print it")
    rep.add_argument("dump")
    rep.add_argument("--check", action="store_true",
                     help="exit 1 unless the replay reproduces the dump byte for byte")
    return p


def _config(args) -> ExplorationConfig:
    unknown = sorted(set(args.mutations) - MUTATIONS)
    if unknown:
        raise UsageError(f"--mutations: unknown mutation(s) {', '.join(unknown)}")
    if args.sessions < 1:
        raise UsageError("--sessions: must be >= 1")
    systematic = args.systematic
    if systematic is None:
        systematic = not args.seeds
    if not systematic and not args.seeds:
        raise UsageError("--no-systematic needs --seeds")
    return ExplorationConfig(
        scenario=args.scenario,
        mode=args.mode,
        sessions=args.sessions,
        depth_bound=args.depth,
        schedule_bound=args.schedule_bound,
        seeds=tuple(args.seeds),
        systematic=systematic,
        mutations=frozenset(args.mutations),
        candidate_cap=args.candidate_cap,
    )


def _run(args) -> int:
    cfg = _config(args)
    if args.queries is not None:
        unknown = [q for q in args.queries if q not in REGISTRY]
        if unknown:
            raise UsageError(f"--queries: unknown query id(s) {', '.join(unknown)}")
    report = run_suite(cfg, args.queries, dump_dir=args.dump_traces)
    sys.stdout.write(render_report(report, args.format))
    return report.exit_code


def _replay(args) -> int:
    try:
        with open(args.dump) as fh:
            text = fh.read()
    except OSError as exc:
        raise UsageError(f"replay: cannot read {args.dump}: {exc.strerror}")
    try:
        trace = replay_dump(text)
    except ValueError as exc:
        raise UsageError(f"replay: {exc}")
    out = trace.dump()
    sys.stdout.write(out)
    if args.check and out != text:
        sys.stderr.write("replay differs from dump\n")
        return 1
    return 0


def main(argv: Optional[list] = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        args = build_parser().parse_args(argv)
        if args.command == "list-queries":
            sys.stdout.write(render_query_list())
            return 0
        if args.command == "replay":
            return _replay(args)
        return _run(args)
    except (UsageError, UnknownQueryId) as exc:
        sys.stderr.write(f"meshcop: usage error: {exc}\n")
        return 2

