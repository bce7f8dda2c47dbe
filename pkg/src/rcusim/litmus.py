"""Two-thread litmus tests over instrumented cells.

``mp`` (message passing):  P0: x = 1; y = 1     P1: r1 = y; r2 = x
    stale outcome r1 == 1 and r2 == 0
``sb`` (store buffering):  P0: x = 1; r1 = y    P1: y = 1; r2 = x
    stale outcome r1 == 0 and r2 == 0
``mp-release`` is ``mp`` with y published through assign_pointer.
"""

from __future__ import annotations

from rcusim import api
from rcusim.sim.explore import End, Terminal, explore
from rcusim.sim.memory import MemoryModel
from rcusim.sim.world import World, WorldConfig

STALE = {"mp": (1, 0), "mp-release": (1, 0), "sb": (0, 0)}


def build(kind: str, model: MemoryModel) -> World:
    w = World(WorldConfig(cpus=2, memory_model=model, ticks_per_cpu=0, ctx_per_cpu=0))
    if kind in ("mp", "mp-release"):
        p0 = [api.store_instr("x", 1), api.store_instr("y", 1, release=kind == "mp-release")]
        p1 = [api.load_instr("r1", "y"), api.load_instr("r2", "x")]
    elif kind == "sb":
        p0 = [api.store_instr("x", 1), api.load_instr("r1", "y")]
        p1 = [api.store_instr("y", 1), api.load_instr("r2", "x")]
    else:
        raise ValueError(f"unknown litmus test {kind!r}")
    w.add_thread("P0", 0, p0)
    w.add_thread("P1", 1, p1)
    return w


def outcomes(kind: str, model: MemoryModel) -> set[tuple[int, int]]:
    """Every final (r1, r2) reachable under ``model``."""
    seen: set[tuple[int, int]] = set()

    def visit(term: Terminal) -> None:
        if term.end is not End.DONE:
            raise RuntimeError(f"litmus run ended {term.end.value}: {term.error}")
        regs = {k: v for t in term.world.threads for k, v in t.regs.items()}
        seen.add((regs["r1"], regs["r2"]))

    explore(build(kind, model), visit, max_steps=64)
    return seen


def stale_reachable(kind: str, model: MemoryModel) -> bool:
    return STALE[kind] in outcomes(kind, model)
