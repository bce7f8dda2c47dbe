"""Scenarios, outcome classification, counterexample files and trace audit.

Every scenario runs the litmus program

    updater (CPU 1):  x = 1; synchronize(); y = 1
    reader  (CPU 0):  read_lock(); r1 = x; r2 = y; read_unlock()

and checks either ``r2 == 0 or r1 == 1`` on every finished run, or that
some run completes a grace period and fires the updater's wakeme callback.
"""

from __future__ import annotations

import enum
import hashlib
import json
import resource
import time
from collections.abc import Iterable
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any

from rcusim import api
from rcusim.faults import ExpectedClass, FaultPlan, Variant
from rcusim.sim.explore import End, Terminal, explore, replay, run_random
from rcusim.sim.memory import MemoryModel
from rcusim.sim.world import TickModel, World, WorldConfig

SCENARIO_NAMES = ("prove", "prove-gp", *(f"bug{i}" for i in range(1, 8)))
SCHEDULE_FORMAT = 1


class Outcome(enum.Enum):
    SAFE = "SAFE"
    ASSERTION_VIOLATED = "ASSERTION_VIOLATED"
    GP_HUNG = "GP_HUNG"
    GP_COMPLETED = "GP_COMPLETED"
    BUDGET_EXHAUSTED = "BUDGET_EXHAUSTED"
    BUG_MISSED = "BUG_MISSED"


class Property(enum.Enum):
    ASSERT_ORDER = "assert-order"
    ASSERT_GP_COMPLETES = "assert-gp-completes"


class Mode(enum.Enum):
    EXHAUSTIVE = "exhaustive"
    RANDOM = "random"
    NATIVE = "native"


class HarnessError(RuntimeError):
    """The model itself faulted; carries the schedule that reached the fault."""

    def __init__(self, msg: str, schedule: list[int] | None = None) -> None:
        super().__init__(msg)
        self.schedule = schedule


class ReplayMismatch(ValueError):
    pass


# (ticks, context switches) per CPU: exhaustive search pays for every extra
# event, random walks need slack or they spend it before the GP can finish
EVENT_BUDGETS = {Mode.EXHAUSTIVE: (3, 2), Mode.RANDOM: (30, 10), Mode.NATIVE: (0, 0)}

_GP_PROPERTY = {"prove-gp", "bug2", "bug3", "bug4", "bug5", "bug6"}


@dataclass(frozen=True)
class Scenario:
    name: str = "prove"
    readers: int = 1
    memory_model: MemoryModel = MemoryModel.SC
    mode: Mode = Mode.EXHAUSTIVE
    tick_model: TickModel = TickModel.GENERAL
    max_steps: int = 400
    max_schedules: int | None = None
    runs: int = 200
    timeout_ms: int = 2000
    seed: int = 0
    ticks_per_cpu: int | None = None  # None: mode default
    ctx_per_cpu: int | None = None
    cache: bool = True
    shared_reader_cpu: bool = False
    leaf_fanout: int = 16
    interior_fanout: int = 64

    def __post_init__(self) -> None:
        if self.name not in SCENARIO_NAMES:
            raise ValueError(f"unknown scenario {self.name!r}; expected one of {', '.join(SCENARIO_NAMES)}")
        if self.readers not in (1, 2):
            raise ValueError("readers must be 1 or 2")
        if self.max_steps < 1 or self.runs < 1 or self.timeout_ms < 1:
            raise ValueError("budgets must be positive")
        if self.ticks < 0 or self.ctx < 0:
            raise ValueError("event budgets must be non-negative")
        if self.mode is Mode.NATIVE and self.memory_model is not MemoryModel.SC:
            raise ValueError("native mode runs on the host memory model; use --memory-model sc")
        if self.mode is Mode.NATIVE and self.tick_model is TickModel.PINNED:
            raise ValueError("native mode uses real timer ticks; the pinned tick model is virtual-only")

    @property
    def ticks(self) -> int:
        if self.ticks_per_cpu is not None:
            return self.ticks_per_cpu
        return EVENT_BUDGETS[self.mode][0]

    @property
    def ctx(self) -> int:
        if self.ctx_per_cpu is not None:
            return self.ctx_per_cpu
        return EVENT_BUDGETS[self.mode][1]

    @property
    def fault(self) -> FaultPlan:
        if self.name.startswith("bug"):
            return FaultPlan(Variant(self.name))
        return FaultPlan()

    @property
    def prop(self) -> Property:
        return Property.ASSERT_GP_COMPLETES if self.name in _GP_PROPERTY else Property.ASSERT_ORDER

    @property
    def expected(self) -> frozenset[Outcome]:
        if self.name == "prove":
            return frozenset({Outcome.SAFE})
        if self.name == "prove-gp":
            return frozenset({Outcome.GP_COMPLETED})
        if self.fault.expected_class is ExpectedClass.LIVENESS_HANG:
            return frozenset({Outcome.GP_HUNG})
        if self.name == "bug7" and self.readers == 1:
            if self.tick_model is TickModel.PINNED:
                return frozenset({Outcome.BUG_MISSED})
            return frozenset({Outcome.ASSERTION_VIOLATED, Outcome.BUG_MISSED})
        return frozenset({Outcome.ASSERTION_VIOLATED})

    @property
    def cpus(self) -> int:
        return 2 if self.readers == 1 or self.shared_reader_cpu else 3

    def reader_cpus(self) -> list[int]:
        if self.readers == 1:
            return [0]
        return [0, 0] if self.shared_reader_cpu else [0, 2]

    def world_config(self) -> WorldConfig:
        return WorldConfig(
            cpus=self.cpus,
            leaf_fanout=self.leaf_fanout,
            interior_fanout=self.interior_fanout,
            memory_model=self.memory_model,
            fault=self.fault,
            tick_model=self.tick_model,
            ticks_per_cpu=self.ticks,
            ctx_per_cpu=self.ctx,
        )

    def config_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["memory_model"] = self.memory_model.value
        d["mode"] = self.mode.value
        d["tick_model"] = self.tick_model.value
        d["world"] = self.world_config().as_dict()
        return d

    @classmethod
    def from_config(cls, d: dict[str, Any]) -> Scenario:
        d = {k: v for k, v in d.items() if k != "world"}
        d["memory_model"] = MemoryModel(d["memory_model"])
        d["mode"] = Mode(d["mode"])
        d["tick_model"] = TickModel(d["tick_model"])
        return cls(**d)

    def digest(self) -> str:
        """Hash of everything that shapes the explored world."""
        d = self.config_dict()
        # budgets enter through the resolved world config
        for k in ("mode", "runs", "timeout_ms", "max_schedules", "cache", "ticks_per_cpu", "ctx_per_cpu"):
            d.pop(k)
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]


def build_world(sc: Scenario, tracing: bool = False) -> World:
    w = World(sc.world_config())
    w.tracing = tracing
    for i, cpu in enumerate(sc.reader_cpus()):
        w.add_thread(f"reader{i}", cpu, api.reader_instrs())
    w.add_thread("updater", 1, api.updater_instrs())
    w.boot()
    return w


def order_violations(world: World) -> list[str]:
    """Readers whose finished registers break ``r2 == 0 or r1 == 1``."""
    bad = []
    for t in world.threads:
        if t.name.startswith("reader") and t.done:
            if not (t.regs["r2"] == 0 or t.regs["r1"] == 1):
                bad.append(f"{t.name}: r1={t.regs['r1']} r2={t.regs['r2']}")
    return bad


def wakeme_fired(world: World) -> bool:
    return any(func == "wakeme_after_rcu" for _, _, func in world.invoked)


@dataclass
class RunReport:
    scenario: str
    readers: int
    mode: str
    memory_model: str
    tick_model: str
    outcome: Outcome
    expected: list[str]
    schedules_explored: int = 0
    states_explored: int = 0
    successful: int = 0
    failing: int = 0
    timeouts: int = 0
    breaches: int = 0
    counterexample: list[int] | None = None
    witness: list[int] | None = None
    detail: str = ""
    caveat: str | None = None
    trace_hash: str | None = None
    digest: str = ""
    wall_time: float = 0.0
    peak_memory_kb: int = 0
    trace: list[dict] = field(default_factory=list, repr=False)

    @property
    def matched(self) -> bool:
        return self.outcome.value in self.expected

    def exit_code(self) -> int:
        if self.matched:
            return 0
        return 2 if self.outcome is Outcome.BUDGET_EXHAUSTED else 1

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d.pop("trace")
        d["outcome"] = self.outcome.value
        d["matched"] = self.matched
        return d


def trace_hash(trace: Iterable[dict]) -> str:
    h = hashlib.sha256()
    for rec in trace:
        h.update(json.dumps(rec, sort_keys=True, default=str).encode())
        h.update(b"\n")
    return h.hexdigest()


def _traced(sc: Scenario, schedule: list[int]) -> Terminal:
    return replay(build_world(sc, tracing=True), schedule)


def _finish(rep: RunReport, sc: Scenario, rep_schedule: list[int] | None, t0: float) -> RunReport:
    if rep_schedule is not None:
        term = _traced(sc, rep_schedule)
        rep.trace = term.world.trace
        rep.trace_hash = trace_hash(rep.trace)
    rep.caveat = sc.fault.caveat
    rep.wall_time = round(time.perf_counter() - t0, 3)
    rep.peak_memory_kb = resource.getrusage(resource.RUSAGE_SELF).ru_maxrss
    return rep


def _new_report(sc: Scenario, outcome: Outcome) -> RunReport:
    return RunReport(
        scenario=sc.name,
        readers=sc.readers,
        mode=sc.mode.value,
        memory_model=sc.memory_model.value,
        tick_model=sc.tick_model.value,
        outcome=outcome,
        expected=sorted(o.value for o in sc.expected),
        digest=sc.digest(),
    )


def classify_terminal(sc: Scenario, term: Terminal) -> Outcome:
    """Outcome of a single run."""
    if term.end is End.ERROR:
        raise HarnessError(f"model fault: {term.error}", term.schedule)
    w = term.world
    if sc.prop is Property.ASSERT_ORDER:
        if order_violations(w):
            return Outcome.ASSERTION_VIOLATED
        if term.end is End.BUDGET:
            return Outcome.BUDGET_EXHAUSTED
        if term.end is End.STUCK:
            return Outcome.GP_HUNG
        if sc.fault.expected_class is ExpectedClass.SAFETY_VIOLATION:
            return Outcome.BUG_MISSED
        return Outcome.SAFE
    if w.gp_completed and wakeme_fired(w):
        return Outcome.GP_COMPLETED
    return Outcome.BUDGET_EXHAUSTED if term.end is End.BUDGET else Outcome.GP_HUNG


def _run_exhaustive(sc: Scenario) -> RunReport:
    t0 = time.perf_counter()
    found: list[Terminal] = []
    first: list[list[int]] = []
    breaches = 0
    truncated = 0

    def visit(term: Terminal) -> bool:
        nonlocal breaches, truncated
        if not first:
            first.append(term.schedule)
        oc = classify_terminal(sc, term)
        if term.world.breaches:
            breaches += 1
        if oc is Outcome.BUDGET_EXHAUSTED:
            truncated += 1
        if oc in (Outcome.ASSERTION_VIOLATED, Outcome.GP_COMPLETED):
            found.append(term)
            return True
        return False

    stats = explore(
        build_world(sc), visit, max_steps=sc.max_steps, max_schedules=sc.max_schedules, cache=sc.cache
    )
    if found:
        term = found[0]
        oc = classify_terminal(sc, term)
    elif truncated or stats.hit_schedule_cap:
        oc = Outcome.BUDGET_EXHAUSTED
    elif sc.prop is Property.ASSERT_GP_COMPLETES:
        oc = Outcome.GP_HUNG
    elif sc.fault.expected_class is ExpectedClass.SAFETY_VIOLATION:
        oc = Outcome.BUG_MISSED
    else:
        oc = Outcome.SAFE
    rep = _new_report(sc, oc)
    rep.schedules_explored = stats.schedules
    rep.states_explored = stats.states
    rep.breaches = breaches
    representative: list[int] | None = first[0] if first else None
    if found:
        if oc is Outcome.ASSERTION_VIOLATED:
            rep.counterexample = list(found[0].schedule)
            rep.detail = "; ".join(order_violations(found[0].world))
        else:
            rep.witness = list(found[0].schedule)
        representative = found[0].schedule
    elif oc is Outcome.GP_HUNG:
        rep.detail = f"no grace period completed in {stats.states} states; bounded evidence only"
    elif oc is Outcome.BUDGET_EXHAUSTED:
        rep.detail = f"{truncated} schedules hit max_steps={sc.max_steps}" + (
            "; schedule cap reached" if stats.hit_schedule_cap else ""
        )
    return _finish(rep, sc, representative, t0)


def _run_random(sc: Scenario) -> RunReport:
    t0 = time.perf_counter()
    counts = {o: 0 for o in Outcome}
    first_hit: Terminal | None = None
    first: list[int] | None = None
    breaches = 0
    for i in range(sc.runs):
        term = run_random(build_world(sc), sc.seed * 1_000_003 + i, max_steps=sc.max_steps)
        if first is None:
            first = term.schedule
        oc = classify_terminal(sc, term)
        counts[oc] += 1
        breaches += bool(term.world.breaches)
        if first_hit is None and oc in (Outcome.ASSERTION_VIOLATED, Outcome.GP_COMPLETED):
            first_hit = term
    if counts[Outcome.ASSERTION_VIOLATED]:
        oc = Outcome.ASSERTION_VIOLATED
    elif sc.prop is Property.ASSERT_GP_COMPLETES:
        oc = Outcome.GP_COMPLETED if counts[Outcome.GP_COMPLETED] else (
            Outcome.BUDGET_EXHAUSTED if counts[Outcome.BUDGET_EXHAUSTED] else Outcome.GP_HUNG
        )
    elif counts[Outcome.BUDGET_EXHAUSTED]:
        oc = Outcome.BUDGET_EXHAUSTED
    elif sc.fault.expected_class is ExpectedClass.SAFETY_VIOLATION:
        oc = Outcome.BUG_MISSED
    else:
        oc = Outcome.SAFE
    rep = _new_report(sc, oc)
    rep.schedules_explored = sc.runs
    rep.failing = counts[Outcome.ASSERTION_VIOLATED]
    rep.timeouts = counts[Outcome.GP_HUNG] + counts[Outcome.BUDGET_EXHAUSTED]
    rep.successful = sc.runs - rep.failing - rep.timeouts
    rep.breaches = breaches
    if first_hit is not None:
        if oc is Outcome.ASSERTION_VIOLATED:
            rep.counterexample = list(first_hit.schedule)
            rep.detail = "; ".join(order_violations(first_hit.world))
        else:
            rep.witness = list(first_hit.schedule)
    return _finish(rep, sc, first, t0)


def _run_native(sc: Scenario) -> RunReport:
    from rcusim.sim.native import run_native

    t0 = time.perf_counter()
    st = run_native(sc)
    if st.errors:
        raise HarnessError(f"native run faulted: {st.detail}")
    if st.failing:
        oc = Outcome.ASSERTION_VIOLATED
    elif sc.prop is Property.ASSERT_GP_COMPLETES:
        oc = Outcome.GP_COMPLETED if st.successful else Outcome.GP_HUNG
    elif st.timeouts:
        oc = Outcome.GP_HUNG
    elif sc.fault.expected_class is ExpectedClass.SAFETY_VIOLATION:
        oc = Outcome.BUG_MISSED
    else:
        oc = Outcome.SAFE
    rep = _new_report(sc, oc)
    rep.schedules_explored = sc.runs
    rep.successful, rep.failing, rep.timeouts = st.successful, st.failing, st.timeouts
    rep.breaches = st.breaches
    rep.detail = st.detail
    return _finish(rep, sc, None, t0)


def run_scenario(sc: Scenario) -> RunReport:
    if sc.mode is Mode.EXHAUSTIVE:
        return _run_exhaustive(sc)
    if sc.mode is Mode.RANDOM:
        return _run_random(sc)
    return _run_native(sc)


# -- counterexample files -----------------------------------------------------


def schedule_doc(sc: Scenario, schedule: list[int], outcome: Outcome | None = None) -> dict[str, Any]:
    return {
        "format": SCHEDULE_FORMAT,
        "config": sc.config_dict(),
        "digest": sc.digest(),
        "schedule": list(schedule),
        "outcome": None if outcome is None else outcome.value,
    }


def save_schedule(path: str | Path, sc: Scenario, schedule: list[int], outcome: Outcome | None = None) -> None:
    Path(path).write_text(json.dumps(schedule_doc(sc, schedule, outcome), indent=1) + "\n")


def load_schedule(path: str | Path) -> dict[str, Any]:
    return json.loads(Path(path).read_text())


def replay_schedule(doc: dict[str, Any], sc: Scenario | None = None) -> RunReport:
    """Re-execute a stored schedule; the embedded digest must match the scenario."""
    if doc.get("format") != SCHEDULE_FORMAT:
        raise ReplayMismatch(f"unsupported schedule format {doc.get('format')!r}")
    if sc is None:
        sc = Scenario.from_config(doc["config"])
    if doc["digest"] != sc.digest():
        raise ReplayMismatch(f"config digest {doc['digest']} does not match scenario digest {sc.digest()}")
    t0 = time.perf_counter()
    term = _traced(sc, list(doc["schedule"]))
    oc = classify_terminal(sc, term)
    rep = _new_report(replace(sc, mode=Mode.EXHAUSTIVE), oc)
    rep.mode = "replay"
    rep.schedules_explored = 1
    rep.breaches = int(bool(term.world.breaches))
    if oc is Outcome.ASSERTION_VIOLATED:
        rep.counterexample = list(doc["schedule"])
        rep.detail = "; ".join(order_violations(term.world))
    elif oc is Outcome.GP_COMPLETED:
        rep.witness = list(doc["schedule"])
    rep.trace = term.world.trace
    rep.trace_hash = trace_hash(rep.trace)
    rep.caveat = sc.fault.caveat
    rep.wall_time = round(time.perf_counter() - t0, 3)
    rep.peak_memory_kb = resource.getrusage(resource.RUSAGE_SELF).ru_maxrss
    return rep


# -- traces and audit -----------------------------------------------------------


def write_trace(path: str | Path, trace: Iterable[dict]) -> None:
    with open(path, "w") as f:
        for rec in trace:
            f.write(json.dumps(rec, sort_keys=True, default=str) + "\n")


def read_trace(path: str | Path) -> list[dict]:
    with open(path) as f:
        return [json.loads(line) for line in f if line.strip()]


def audit_trace(trace: Iterable[dict]) -> list[str]:
    """Lock-order and counter post-checks over a recorded trace."""
    problems: list[str] = []
    held: dict[Any, list[str]] = {}
    last_gp = last_done = 0
    for rec in trace:
        n, cpu, op, args = rec["step"], rec["cpu"], rec["op"], rec.get("args", {})
        g, c = rec["gpnum"], rec["completed"]
        if not c <= g <= c + 1:
            problems.append(f"step {n}: gpnum={g} completed={c} out of lockstep")
        if g < last_gp or c < last_done:
            problems.append(f"step {n}: counters went backwards")
        last_gp, last_done = g, c
        mine = held.setdefault(cpu, [])
        if op == "spin_acquire":
            if args["lock"] in mine:
                problems.append(f"step {n}: cpu{cpu} re-acquired {args['lock']}")
            mine.append(args["lock"])
            nodes = [lk for lk in mine if lk.startswith("rnp")]
            if len(nodes) > 1:
                problems.append(f"step {n}: cpu{cpu} holds {len(nodes)} node locks {nodes}")
        elif op == "spin_release":
            if args["lock"] not in mine:
                problems.append(f"step {n}: cpu{cpu} released {args['lock']} it did not hold")
            else:
                mine.remove(args["lock"])
        elif op == "safety_breach":
            problems.append(f"step {n}: GP {args['gp']} ended while a pre-existing reader on cpu{cpu} ran")
        elif op == "diagnostic":
            problems.append(f"step {n}: {args['msg']}")
    for cpu, locks in held.items():
        if locks:
            problems.append(f"end of trace: cpu{cpu} still holds {locks}")
    return problems
