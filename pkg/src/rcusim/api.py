"""User-facing RCU primitives and the instruction builders that use them.

The direct functions (``read_lock`` .. ``dereference``) act on a world
immediately.  The ``*_instrs`` builders return thread-program fragments
whose instructions are the scheduler's atomic steps.
"""

from __future__ import annotations

from rcusim import gp, qs
from rcusim.cbs import Callback
from rcusim.faults import Hook
from rcusim.qs import ModelViolation
from rcusim.sim.world import Cell, Instr, TickModel, VThread, World

WAIT_FLAG = "wait_rcu_gp_flag"


def read_lock(world: World, cpu: int) -> None:
    world.section_enter(cpu)


def read_unlock(world: World, cpu: int) -> None:
    world.section_exit(cpu)


def assign_pointer(world: World, cpu: int, cell: Cell, value: int) -> None:
    """Publish with release ordering: earlier stores become visible first."""
    world.barrier(cpu)
    world.store(cpu, cell, value)


def dereference(world: World, cpu: int, cell: Cell) -> int:
    return world.load(cpu, cell)


def call_rcu_wakeme(world: World, cpu: int, wake_cell: Cell) -> int:
    """Queue a wakeme callback that stores 0 to ``wake_cell`` when invoked."""
    world.local_irq_save(cpu)
    try:
        cb_id = world.new_callback_id()
        world.wake_cells[cb_id] = wake_cell
        world.universe.data[cpu].callbacks.enqueue(Callback(cb_id))
        world.emit("call_rcu", cpu, cb=cb_id)
    finally:
        world.local_irq_restore(cpu)
    return cb_id


# -- instruction builders ----------------------------------------------------


def _pinned(world: World) -> bool:
    return world.config.tick_model is TickModel.PINNED


def _cpu_free(world: World, t: VThread) -> bool:
    return world.cpu_lock[t.cpu] is None


def sched_in() -> Instr:
    def run(world: World, t: VThread) -> None:
        world.cpu_lock[t.cpu] = t.tid
        world.emit("sched_in", t.cpu, thread=t.name)

    return Instr("sched_in", run, _cpu_free)


def sched_out() -> Instr:
    """Give up the CPU; the context switch is a quiescent state."""

    def run(world: World, t: VThread) -> None:
        if world.cpu_lock[t.cpu] != t.tid:
            raise ModelViolation(f"{t.name}: sched_out without holding cpu{t.cpu}")
        world.cpu_lock[t.cpu] = None
        world.emit("sched_out", t.cpu, thread=t.name)
        qs.note_context_switch(world, t.cpu)
        if _pinned(world):
            qs.process_callbacks(world, t.cpu)

    return Instr("sched_out", run)


def read_lock_instr() -> Instr:
    return Instr("rcu_read_lock", lambda w, t: read_lock(w, t.cpu))


def read_unlock_instr() -> Instr:
    return Instr("rcu_read_unlock", lambda w, t: read_unlock(w, t.cpu))


def load_instr(reg: str, cell: Cell) -> Instr:
    def run(world: World, t: VThread) -> None:
        t.regs[reg] = dereference(world, t.cpu, cell)

    return Instr(f"{reg}={cell}", run)


def store_instr(cell: Cell, value: int, release: bool = False) -> Instr:
    def run(world: World, t: VThread) -> None:
        if release:
            assign_pointer(world, t.cpu, cell, value)
        else:
            world.store(t.cpu, cell, value)

    return Instr(f"{cell}:={value}", run)


def synchronize_instrs(wait_cell: Cell = WAIT_FLAG) -> list[Instr]:
    """synchronize_rcu as seven steps; the caller must hold its CPU."""
    n = 7

    def enter(world: World, t: VThread) -> int | None:
        if world.section_depth[t.cpu] > 0:
            raise ModelViolation(f"{t.name}: synchronize inside a read-side critical section deadlocks")
        if world.fault.active(Hook.SYNC_RETURN_EARLY):
            world.emit("synchronize", t.cpu, skipped=True)
            return t.pc + n
        world.emit("synchronize", t.cpu)
        return None

    def set_flag(world: World, t: VThread) -> None:
        world.store(t.cpu, wait_cell, 1)

    def enqueue(world: World, t: VThread) -> None:
        call_rcu_wakeme(world, t.cpu, wait_cell)

    def request(world: World, t: VThread) -> None:
        if gp.needs_gp(world, t.cpu):
            gp.request_gp(world, t.cpu)
        if not _pinned(world):
            gp.gp_init(world, t.cpu, if_idle=True)

    def block(world: World, t: VThread) -> None:
        world.cpu_lock[t.cpu] = None
        world.emit("sched_out", t.cpu, thread=t.name, blocked=True)
        qs.note_context_switch(world, t.cpu)
        if _pinned(world):
            qs.process_callbacks(world, t.cpu)

    def woken(world: World, t: VThread) -> bool:
        return world.load(t.cpu, wait_cell) == 0

    def wake(world: World, t: VThread) -> None:
        world.emit("synchronize_done", t.cpu)

    return [
        Instr("synchronize", enter),
        Instr(f"{wait_cell}:=1", set_flag),
        Instr("call_rcu(wakeme)", enqueue),
        Instr("request_gp", request),
        Instr("schedule", block),
        Instr("wait", wake, woken),
        sched_in(),
    ]


def reader_instrs(r1: str = "r1", r2: str = "r2", x: Cell = "x", y: Cell = "y") -> list[Instr]:
    return [
        sched_in(),
        read_lock_instr(),
        load_instr(r1, x),
        load_instr(r2, y),
        read_unlock_instr(),
        sched_out(),
    ]


def updater_instrs(x: Cell = "x", y: Cell = "y", wait_cell: Cell = WAIT_FLAG) -> list[Instr]:
    return [
        sched_in(),
        store_instr(x, 1),
        *synchronize_instrs(wait_cell),
        store_instr(y, 1),
        sched_out(),
    ]
