"""Command-line entry point: ``rcusim run | replay | audit``.

Exit codes: 0 expected outcome, 1 unexpected outcome or error,
2 budget exhausted.
"""

from __future__ import annotations

import argparse
import json
import sys
from collections.abc import Sequence

from rcusim.harness import (
    SCENARIO_NAMES,
    HarnessError,
    Mode,
    Outcome,
    ReplayMismatch,
    RunReport,
    Scenario,
    audit_trace,
    load_schedule,
    read_trace,
    replay_schedule,
    run_scenario,
    save_schedule,
    write_trace,
)
from rcusim.sim.explore import ReplayError
from rcusim.sim.memory import MemoryModel
from rcusim.sim.world import TickModel

EXIT_OK, EXIT_UNEXPECTED, EXIT_BUDGET = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # keep exit status 2 for budget exhaustion
        self.print_usage(sys.stderr)
        self.exit(EXIT_UNEXPECTED, f"{self.prog}: error: {message}\n")


def _parser() -> argparse.ArgumentParser:
    p = _Parser(prog="rcusim", description="Tree RCU model checker and stress harness")
    sub = p.add_subparsers(dest="cmd", required=True, parser_class=_Parser)

    r = sub.add_parser("run", help="run one scenario")
    r.add_argument("--scenario", choices=SCENARIO_NAMES, default="prove")
    r.add_argument("--readers", type=int, choices=(1, 2), default=1)
    r.add_argument("--mode", choices=[m.value for m in Mode], default="exhaustive")
    r.add_argument("--memory-model", choices=[m.value for m in MemoryModel], default="sc")
    r.add_argument("--tick-model", choices=[t.value for t in TickModel], default="general")
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--max-steps", type=int, default=400)
    r.add_argument("--max-schedules", type=int, default=None)
    r.add_argument("--runs", type=int, default=200)
    r.add_argument("--timeout-ms", type=int, default=2000)
    r.add_argument("--ticks-per-cpu", type=int, default=None, help="default 3 exhaustive, 30 random")
    r.add_argument("--ctx-per-cpu", type=int, default=None, help="default 2 exhaustive, 10 random")
    r.add_argument("--no-cache", action="store_true", help="disable state caching in exhaustive mode")
    r.add_argument("--shared-reader-cpu", action="store_true", help="with --readers 2, run both readers on CPU 0")
    r.add_argument("--leaf-fanout", type=int, default=16)
    r.add_argument("--interior-fanout", type=int, default=64)
    r.add_argument("--trace", help="write the representative run's trace as JSON lines")
    r.add_argument("--save-schedule", help="write the counterexample or witness schedule here")
    r.add_argument("--format", choices=("table", "jsonl"), default="table")

    rp = sub.add_parser("replay", help="replay a saved schedule")
    rp.add_argument("--schedule", required=True)
    rp.add_argument("--trace")
    rp.add_argument("--format", choices=("table", "jsonl"), default="table")

    a = sub.add_parser("audit", help="lock-order and counter checks over a trace")
    a.add_argument("--trace", required=True)
    return p


_COLUMNS = ("scenario", "readers", "mode", "successful", "failing", "timeouts", "schedules", "outcome", "match")


def format_table(rep: RunReport) -> str:
    row = (
        rep.scenario,
        f"{rep.readers}R",
        rep.mode,
        str(rep.successful),
        str(rep.failing),
        str(rep.timeouts),
        str(rep.schedules_explored),
        rep.outcome.value,
        "yes" if rep.matched else "NO",
    )
    widths = [max(len(c), len(v)) for c, v in zip(_COLUMNS, row)]
    lines = [
        "  ".join(c.ljust(w) for c, w in zip(_COLUMNS, widths)),
        "  ".join(v.ljust(w) for v, w in zip(row, widths)),
    ]
    if rep.counterexample is not None:
        lines.append(f"counterexample ({len(rep.counterexample)} steps): {rep.detail}")
    if rep.detail and rep.counterexample is None:
        lines.append(rep.detail)
    if rep.caveat:
        lines.append(f"caveat: {rep.caveat}")
    lines.append(f"states={rep.states_explored} breaches={rep.breaches} wall={rep.wall_time}s digest={rep.digest}")
    return "\n".join(lines)


def _emit(rep: RunReport, fmt: str) -> None:
    if fmt == "jsonl":
        print(json.dumps(rep.to_dict(), sort_keys=True))
    else:
        print(format_table(rep))


def _run(args: argparse.Namespace) -> int:
    sc = Scenario(
        name=args.scenario,
        readers=args.readers,
        memory_model=MemoryModel(args.memory_model),
        mode=Mode(args.mode),
        tick_model=TickModel(args.tick_model),
        max_steps=args.max_steps,
        max_schedules=args.max_schedules,
        runs=args.runs,
        timeout_ms=args.timeout_ms,
        seed=args.seed,
        ticks_per_cpu=args.ticks_per_cpu,
        ctx_per_cpu=args.ctx_per_cpu,
        cache=not args.no_cache,
        shared_reader_cpu=args.shared_reader_cpu,
        leaf_fanout=args.leaf_fanout,
        interior_fanout=args.interior_fanout,
    )
    rep = run_scenario(sc)
    if args.trace:
        write_trace(args.trace, rep.trace)
    sched = rep.counterexample if rep.counterexample is not None else rep.witness
    if args.save_schedule and sched is not None:
        save_schedule(args.save_schedule, sc, sched, rep.outcome)
    _emit(rep, args.format)
    return rep.exit_code()


def _replay(args: argparse.Namespace) -> int:
    doc = load_schedule(args.schedule)
    rep = replay_schedule(doc)
    if args.trace:
        write_trace(args.trace, rep.trace)
    _emit(rep, args.format)
    recorded = doc.get("outcome")
    if recorded is not None and recorded != rep.outcome.value:
        print(f"replay outcome {rep.outcome.value} differs from recorded {recorded}", file=sys.stderr)
        return EXIT_UNEXPECTED
    return EXIT_BUDGET if rep.outcome is Outcome.BUDGET_EXHAUSTED and recorded is None else EXIT_OK


def _audit(args: argparse.Namespace) -> int:
    problems = audit_trace(read_trace(args.trace))
    for msg in problems:
        print(msg)
    print(f"audit: {len(problems)} problem(s)")
    return EXIT_UNEXPECTED if problems else EXIT_OK


def main(argv: Sequence[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.cmd == "run":
            return _run(args)
        if args.cmd == "replay":
            return _replay(args)
        return _audit(args)
    except (ValueError, HarnessError, ReplayError, ReplayMismatch, OSError) as e:
        print(f"rcusim: {e}", file=sys.stderr)
        return EXIT_UNEXPECTED


if __name__ == "__main__":
    sys.exit(main())
