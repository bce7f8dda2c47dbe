"""The modeled kernel environment.

A :class:`World` owns one RCU universe plus everything the kernel around
it would provide: per-CPU run tokens (``cpu_lock``), interrupt-disable
state, spinlocks, instrumented shared cells with an optional store-buffer
layer, virtual threads with program counters, and the ghost monitors that
watch reader sections and grace periods.

Virtual mode drives a world from a single controller.  One scheduler step
is one thread instruction, one injected event, or one store-buffer flush;
RCU handlers run atomically inside the step that triggered them.
"""

from __future__ import annotations

import enum
from collections.abc import Callable, Hashable
from dataclasses import dataclass, field
from typing import Any

from rcusim import qs
from rcusim.qs import ModelViolation
from rcusim.faults import FaultPlan
from rcusim.geometry import compute_geometry
from rcusim.sim.memory import _MISSING, MemoryModel, StoreBuffers
from rcusim.state import RcuUniverse, check_universe, init_universe

Cell = Hashable
Choice = tuple

DEFAULT_INSTRUMENTED = frozenset({"x", "y", "r1", "r2", "wait_rcu_gp_flag", "passed_quiesce", "qs_pending"})


class TickModel(enum.Enum):
    GENERAL = "general"  # ticks/context switches are explorer-chosen events
    PINNED = "pinned"    # fixed direct-call points, GP 1 started at boot


@dataclass(frozen=True)
class WorldConfig:
    cpus: int = 2
    leaf_fanout: int = 16
    interior_fanout: int = 64
    memory_model: MemoryModel = MemoryModel.SC
    instrumented: frozenset[str] = DEFAULT_INSTRUMENTED
    fault: FaultPlan = FaultPlan()
    blimit: int = 10
    tick_model: TickModel = TickModel.GENERAL
    ticks_per_cpu: int = 3
    ctx_per_cpu: int = 2
    check_each_step: bool = False

    def as_dict(self) -> dict:
        return {
            "cpus": self.cpus,
            "leaf_fanout": self.leaf_fanout,
            "interior_fanout": self.interior_fanout,
            "memory_model": self.memory_model.value,
            "instrumented": sorted(self.instrumented),
            "fault": self.fault.variant.value,
            "blimit": self.blimit,
            "tick_model": self.tick_model.value,
            "ticks_per_cpu": self.ticks_per_cpu,
            "ctx_per_cpu": self.ctx_per_cpu,
        }


@dataclass(frozen=True)
class Instr:
    """One atomic thread instruction.

    ``run`` returns the next pc, or None for pc + 1.  ``ready`` (if given)
    must be side-effect free; a thread whose instruction is not ready is
    blocked.
    """

    op: str
    run: Callable[[World, VThread], int | None]
    ready: Callable[[World, VThread], bool] | None = None


@dataclass(slots=True)
class VThread:
    tid: int
    name: str
    cpu: int
    program: tuple[Instr, ...]
    pc: int = 0
    regs: dict[str, Any] = field(default_factory=dict)

    @property
    def done(self) -> bool:
        return self.pc >= len(self.program)

    def clone(self) -> VThread:
        return VThread(self.tid, self.name, self.cpu, self.program, self.pc, dict(self.regs))

    def key(self) -> tuple:
        return (self.pc, tuple(sorted(self.regs.items())))


@dataclass(slots=True)
class ReaderSection:
    cpu: int
    enter_tick: int
    active: bool = True


class World:
    def __init__(self, config: WorldConfig = WorldConfig()) -> None:
        self.config = config
        self.fault = config.fault
        self.universe: RcuUniverse = init_universe(
            compute_geometry(config.cpus, config.leaf_fanout, config.interior_fanout), config.blimit
        )
        n = config.cpus
        self.clock = 0
        self.cpu_lock: list[int | None] = [None] * n
        self.irq_lock: list[bool] = [False] * n
        self.local_irq_depth: list[int] = [0] * n
        self.pending_events: list[list[str]] = [[] for _ in range(n)]
        self.spinlocks: dict[str, int | None] = {nd.lock: None for nd in self.universe.nodes}
        self.held: list[list[str]] = [[] for _ in range(n)]
        self.memory: dict[Cell, int] = {}
        self.buffers = StoreBuffers(config.memory_model, n)
        self.threads: list[VThread] = []
        pinned = config.tick_model is TickModel.PINNED
        self.ticks_left = [0 if pinned else config.ticks_per_cpu] * n
        self.ctx_left = [0 if pinned else config.ctx_per_cpu] * n
        self.next_cb_id = 1
        self.wake_cells: dict[int, Cell] = {}
        # ghost state
        self.section_depth = [0] * n
        self.sections: list[ReaderSection | None] = [None] * n
        self.gp_pre_existing: frozenset[int] = frozenset()
        self.gp_start_tick: dict[int, int] = {}
        self.breaches: list[tuple[int, int]] = []
        self.qs_clears: dict[tuple[int, int, int], int] = {}
        self.clear_once_violations: list[tuple[int, int, int]] = []
        self.gp_completed = 0
        self.invoked: list[tuple[int, int, str]] = []
        self.diagnostics: list[str] = []
        self.invariant_violations: list[str] = []
        self.tracing = False
        self.trace: list[dict] = []

    # -- setup -----------------------------------------------------------

    def add_thread(self, name: str, cpu: int, program: list[Instr] | tuple[Instr, ...]) -> VThread:
        t = VThread(len(self.threads), name, cpu, tuple(program))
        self.threads.append(t)
        return t

    def boot(self) -> None:
        """Pinned tick model: the grace-period driver starts GP 1 at spawn time."""
        from rcusim import gp

        if self.config.tick_model is TickModel.PINNED:
            gp.request_gp(self)
            gp.gp_init(self, 0, note_all=True)

    # -- cloning / hashing -------------------------------------------------

    def clone(self) -> World:
        new = World.__new__(World)
        new.config = self.config
        new.fault = self.fault
        new.universe = self.universe.clone()
        new.clock = self.clock
        new.cpu_lock = list(self.cpu_lock)
        new.irq_lock = list(self.irq_lock)
        new.local_irq_depth = list(self.local_irq_depth)
        new.pending_events = [list(p) for p in self.pending_events]
        new.spinlocks = dict(self.spinlocks)
        new.held = [list(h) for h in self.held]
        new.memory = dict(self.memory)
        new.buffers = self.buffers.clone()
        new.threads = [t.clone() for t in self.threads]
        new.ticks_left = list(self.ticks_left)
        new.ctx_left = list(self.ctx_left)
        new.next_cb_id = self.next_cb_id
        new.wake_cells = dict(self.wake_cells)
        new.section_depth = list(self.section_depth)
        new.sections = [None if s is None else ReaderSection(s.cpu, s.enter_tick, s.active) for s in self.sections]
        new.gp_pre_existing = self.gp_pre_existing
        new.gp_start_tick = dict(self.gp_start_tick)
        new.breaches = list(self.breaches)
        new.qs_clears = dict(self.qs_clears)
        new.clear_once_violations = list(self.clear_once_violations)
        new.gp_completed = self.gp_completed
        new.invoked = list(self.invoked)
        new.diagnostics = list(self.diagnostics)
        new.invariant_violations = list(self.invariant_violations)
        new.tracing = self.tracing
        new.trace = list(self.trace) if self.tracing else []
        return new

    def key(self) -> tuple:
        """Everything that can influence the future of this world.

        Logical time and trace contents are deliberately excluded.
        """
        return (self.core_key(), self.budget())

    def budget(self) -> tuple[int, ...]:
        """Remaining event allowances; more budget only adds behaviors."""
        return (*self.ticks_left, *self.ctx_left)

    def core_key(self) -> tuple:
        return (
            self.universe.key(),
            tuple(self.cpu_lock),
            tuple(self.local_irq_depth),
            tuple(tuple(p) for p in self.pending_events),
            tuple(sorted(self.memory.items(), key=repr)),
            self.buffers.key(),
            tuple(t.key() for t in self.threads),
            self.next_cb_id,
            tuple(sorted(self.wake_cells.items())),
            tuple(self.section_depth),
            self.gp_pre_existing,
            len(self.breaches),
            tuple(sorted(k for k in self.qs_clears if k[2] == self.universe.state.gpnum)),
            len(self.clear_once_violations),
            self.gp_completed,
            tuple(self.invoked),
            len(self.diagnostics),
        )

    # -- tracing -----------------------------------------------------------

    def emit(self, op: str, cpu: int | None = None, **args: Any) -> None:
        if not self.tracing:
            return
        s = self.universe.state
        self.trace.append(
            {"step": self.clock, "cpu": cpu, "op": op, "args": args, "gpnum": s.gpnum, "completed": s.completed}
        )

    def diagnostic(self, msg: str) -> None:
        self.diagnostics.append(msg)
        self.emit("diagnostic", None, msg=msg)

    # -- scheduler interface -----------------------------------------------

    def runnable(self) -> list[VThread]:
        return [t for t in self.threads if not t.done and self._ready(t)]

    def _ready(self, t: VThread) -> bool:
        ins = t.program[t.pc]
        return ins.ready is None or ins.ready(self, t)

    def choices(self) -> list[Choice]:
        out: list[Choice] = [("run", t.tid) for t in self.runnable()]
        for c in range(self.config.cpus):
            if self.ticks_left[c] > 0:
                out.append(("tick", c))
        for c in range(self.config.cpus):
            # only a CPU no modeled thread occupies runs other tasks that switch
            if self.ctx_left[c] > 0 and self.cpu_lock[c] is None and self.section_depth[c] == 0:
                out.append(("ctx", c))
        for cpu, cell in self.buffers.flush_choices():
            out.append(("flush", cpu) if cell is None else ("flush", cpu, cell))
        return out

    def step(self, choice: Choice) -> None:
        self.clock += 1
        kind = choice[0]
        if kind == "run":
            t = self.threads[choice[1]]
            ins = t.program[t.pc]
            self.emit("exec", t.cpu, thread=t.name, pc=t.pc, instr=ins.op)
            nxt = ins.run(self, t)
            t.pc = t.pc + 1 if nxt is None else nxt
        elif kind == "tick":
            self.ticks_left[choice[1]] -= 1
            self.inject_tick(choice[1])
        elif kind == "ctx":
            self.ctx_left[choice[1]] -= 1
            self.emit("ctx_switch", choice[1])
            qs.note_context_switch(self, choice[1])
        elif kind == "flush":
            cpu = choice[1]
            cell, v = self.buffers.pop_oldest(cpu, choice[2] if len(choice) > 2 else None)
            self._commit(cell, v)
            self.emit("flush", cpu, cell=repr(cell), value=v)
        else:
            raise ValueError(f"unknown choice {choice!r}")
        if self.config.check_each_step:
            self.audit()

    # -- events --------------------------------------------------------------

    def inject_tick(self, cpu: int) -> None:
        """Scheduling-clock interrupt on ``cpu``; deferred while irqs are off."""
        if self.irq_lock[cpu]:
            self.pending_events[cpu].append("TICK")
            self.emit("tick_deferred", cpu)
            return
        self.emit("tick", cpu)
        self.local_irq_save(cpu)
        try:
            qs.process_callbacks(self, cpu)
        finally:
            self.local_irq_restore(cpu)

    def local_irq_save(self, cpu: int) -> None:
        self.local_irq_depth[cpu] += 1
        self.irq_lock[cpu] = True

    def local_irq_restore(self, cpu: int) -> None:
        if self.local_irq_depth[cpu] <= 0:
            raise ModelViolation(f"cpu{cpu}: unbalanced local_irq_restore")
        self.local_irq_depth[cpu] -= 1
        if self.local_irq_depth[cpu] == 0:
            self.irq_lock[cpu] = False
            while self.pending_events[cpu] and not self.irq_lock[cpu]:
                self.pending_events[cpu].pop(0)
                self.inject_tick(cpu)

    # -- locks ---------------------------------------------------------------

    def spin_acquire(self, cpu: int, lock: str) -> None:
        holder = self.spinlocks.get(lock)
        if lock in self.held[cpu]:
            raise ModelViolation(f"cpu{cpu}: recursive acquire of {lock}")
        if holder is not None:
            # handlers run atomically, so a held lock here is a model bug
            raise ModelViolation(f"cpu{cpu}: {lock} held by cpu{holder} inside an atomic step")
        self.barrier(cpu)
        self.spinlocks[lock] = cpu
        self.held[cpu].append(lock)
        self.emit("spin_acquire", cpu, lock=lock, held=list(self.held[cpu]))

    def spin_try_acquire(self, cpu: int, lock: str) -> bool:
        if self.spinlocks.get(lock) is not None:
            return False
        self.spin_acquire(cpu, lock)
        return True

    def spin_is_free(self, lock: str) -> bool:
        return self.spinlocks.get(lock) is None

    def spin_release(self, cpu: int, lock: str) -> None:
        if self.spinlocks.get(lock) != cpu:
            raise ModelViolation(f"cpu{cpu}: release of {lock} it does not hold")
        self.barrier(cpu)
        self.spinlocks[lock] = None
        self.held[cpu].remove(lock)
        self.emit("spin_release", cpu, lock=lock, held=list(self.held[cpu]))

    # -- shared cells ----------------------------------------------------------

    def _instrumented(self, cell: Cell) -> bool:
        if self.config.memory_model is MemoryModel.SC:
            return False
        name = cell[0] if isinstance(cell, tuple) else cell
        return name in self.config.instrumented

    def _committed(self, cell: Cell) -> int:
        if isinstance(cell, tuple):
            return getattr(self.universe.data[cell[1]], cell[0])
        return self.memory.get(cell, 0)

    def _commit(self, cell: Cell, value: int) -> None:
        if isinstance(cell, tuple):
            setattr(self.universe.data[cell[1]], cell[0], value)
        else:
            self.memory[cell] = value

    def load(self, cpu: int, cell: Cell) -> int:
        if self._instrumented(cell):
            v = self.buffers.forward(cpu, cell)
            if v is not _MISSING:
                return v
        return self._committed(cell)

    def store(self, cpu: int, cell: Cell, value: int) -> None:
        if self._instrumented(cell):
            self.buffers.push(cpu, cell, value)
        else:
            self._commit(cell, value)

    def barrier(self, cpu: int) -> None:
        """Full fence: make every buffered store of ``cpu`` globally visible."""
        for cell, v in self.buffers.drain(cpu):
            self._commit(cell, v)

    def rdp_load(self, cpu: int, target: int, fieldname: str) -> int:
        return self.load(cpu, (fieldname, target))

    def rdp_store(self, cpu: int, target: int, fieldname: str, value: int) -> None:
        self.store(cpu, (fieldname, target), value)

    # -- ghost monitors --------------------------------------------------------

    def section_enter(self, cpu: int) -> None:
        self.section_depth[cpu] += 1
        if self.section_depth[cpu] == 1:
            self.sections[cpu] = ReaderSection(cpu, self.clock)
        self.emit("read_lock", cpu, depth=self.section_depth[cpu])

    def section_exit(self, cpu: int) -> None:
        if self.section_depth[cpu] <= 0:
            raise ModelViolation(f"cpu{cpu}: rcu_read_unlock without rcu_read_lock")
        self.section_depth[cpu] -= 1
        if self.section_depth[cpu] == 0:
            sec = self.sections[cpu]
            if sec is not None:
                sec.active = False
            self.sections[cpu] = None
            self.gp_pre_existing = self.gp_pre_existing - {cpu}
        self.emit("read_unlock", cpu, depth=self.section_depth[cpu])

    def on_gp_start(self, gpnum: int) -> None:
        self.gp_start_tick[gpnum] = self.clock
        self.gp_pre_existing = frozenset(c for c, d in enumerate(self.section_depth) if d > 0)

    def on_gp_end(self, gpnum: int) -> None:
        for cpu in sorted(self.gp_pre_existing):
            self.breaches.append((gpnum, cpu))
            self.emit("safety_breach", cpu, gp=gpnum)
        self.gp_pre_existing = frozenset()
        self.gp_completed += 1
        self.qs_clears = {k: v for k, v in self.qs_clears.items() if k[2] > gpnum}

    def on_qs_clear(self, node: int, bits: frozenset[int], gpnum: int) -> None:
        for b in bits:
            k = (node, b, gpnum)
            n = self.qs_clears.get(k, 0) + 1
            self.qs_clears[k] = n
            if n > 1:
                self.clear_once_violations.append(k)

    def invoke_callback(self, cpu: int, cb: Any) -> None:
        s = self.universe.state
        if cb.assigned_gp is None or cb.assigned_gp > s.completed:
            self.diagnostic(f"callback {cb.id} invoked before its GP {cb.assigned_gp} completed")
        self.invoked.append((cb.id, cpu, cb.func))
        self.emit("invoke", cpu, cb=cb.id, func=cb.func, assigned_gp=cb.assigned_gp)
        if cb.func == "wakeme_after_rcu":
            cell = self.wake_cells.get(cb.id)
            if cell is not None:
                self.store(cpu, cell, 0)

    def new_callback_id(self) -> int:
        i = self.next_cb_id
        self.next_cb_id += 1
        return i

    # -- audits ----------------------------------------------------------------

    def audit(self) -> list[str]:
        errs = check_universe(self.universe)
        prev = getattr(self, "_audit_prev", None)
        if prev is not None:
            errs += [e for e in check_universe(self.universe, prev) if "backwards" in e]
        self._audit_prev = self.universe.clone()
        for c in range(self.config.cpus):
            if self.irq_lock[c] != (self.local_irq_depth[c] > 0):
                errs.append(f"cpu{c}: irq_lock disagrees with local_irq_depth")
        holders = [t for t in self.cpu_lock if t is not None]
        if len(holders) != len(set(holders)):
            errs.append("a thread holds two CPUs")
        if self.clear_once_violations:
            errs.append(f"qsmask bits cleared twice: {self.clear_once_violations}")
        s = self.universe.state
        from rcusim.state import GpState

        if (s.gpnum != s.completed) != (s.gp_state is GpState.WAIT_QS):
            errs.append(f"gp_state {s.gp_state.name} inconsistent with gpnum={s.gpnum} completed={s.completed}")
        if errs:
            self.invariant_violations.extend(f"step {self.clock}: {e}" for e in errs)
        return errs

    # -- derived facts -----------------------------------------------------------

    def all_done(self) -> bool:
        return all(t.done for t in self.threads)

    def thread(self, name: str) -> VThread:
        for t in self.threads:
            if t.name == name:
                return t
        raise KeyError(name)
