"""Grace-period lifecycle: request, initialize, clean up.

There is no separate kthread.  ``gp_init`` runs on whichever CPU finds a
pending request while RCU is idle, and ``gp_cleanup`` runs directly from
``report_qs_rsp`` on the CPU that cleared the root's last bit.
"""

from __future__ import annotations

from typing import TYPE_CHECKING

from rcusim import qs
from rcusim.faults import Hook
from rcusim.state import GP_STATE_ARCS, GpFlags, GpState, is_idle

if TYPE_CHECKING:
    from rcusim.sim.world import World


class DriverError(RuntimeError):
    pass


def _transition(world: World, new: GpState) -> None:
    s = world.universe.state
    if new not in GP_STATE_ARCS[s.gp_state]:
        raise DriverError(f"illegal gp_state arc {s.gp_state.name} -> {new.name}")
    s.gp_state = new
    world.emit("gp_state", None, state=new.name)


def request_gp(world: World, cpu: int = 0) -> None:
    root = world.universe.root
    world.spin_acquire(cpu, root.lock)
    world.universe.state.gp_flags = GpFlags.FLAG_INIT
    world.spin_release(cpu, root.lock)
    world.emit("request_gp", cpu)


def needs_gp(world: World, cpu: int) -> bool:
    """True if ``cpu`` holds callbacks no started GP will satisfy."""
    cbs = world.universe.data[cpu].callbacks
    if cbs.has_unassigned():
        return True
    gpnum = world.universe.state.gpnum
    return any(g > gpnum for g in cbs.pending_gps())


def maybe_start_gp(world: World, cpu: int) -> bool:
    if needs_gp(world, cpu) and world.universe.state.gp_flags is GpFlags.NONE:
        request_gp(world, cpu)
    s = world.universe.state
    if s.gp_flags is GpFlags.FLAG_INIT and s.gpnum == s.completed:
        return gp_init(world, cpu, if_idle=True)
    return False


def gp_init(world: World, cpu: int, note_all: bool | None = None, *, if_idle: bool = False) -> bool:
    """Start the next grace period from ``cpu``.  Returns False if nobody asked.

    With ``if_idle`` a GP already in progress is a normal "not now"
    (the flag stays set for cleanup to honor) rather than a driver bug.
    """
    from rcusim.sim.world import TickModel

    if note_all is None:
        note_all = world.config.tick_model is TickModel.PINNED
    u = world.universe
    s = u.state
    root = u.root
    world.spin_acquire(cpu, root.lock)
    if s.gp_flags is not GpFlags.FLAG_INIT:
        world.spin_release(cpu, root.lock)
        return False
    if not is_idle(s):
        world.spin_release(cpu, root.lock)
        if if_idle:
            return False
        raise DriverError(f"gp_init on cpu{cpu} while GP {s.gpnum} is in progress")
    s.gp_flags = GpFlags.NONE
    _transition(world, GpState.INIT)
    s.gpnum += 1
    g = s.gpnum
    world.on_gp_start(g)
    world.spin_release(cpu, root.lock)
    world.emit("gp_init", cpu, gpnum=g)

    zero_mask = world.fault.active(Hook.GP_INIT_QSMASK_ZERO)
    geom = u.geometry
    for node in u.bfs():
        world.spin_acquire(cpu, node.lock)
        node.qsmask = frozenset() if zero_mask else node.qsmaskinit
        node.gpnum = g
        node.completed = s.completed
        if geom.is_leaf(node.index):
            for c in geom.cpus_of_leaf(node.index):
                if c == cpu or note_all:
                    qs.note_gp_changes(world, c, bypass=(c == cpu), on_cpu=cpu)
        world.spin_release(cpu, node.lock)
    _transition(world, GpState.WAIT_QS)
    return True


def gp_cleanup(world: World, cpu: int) -> None:
    u = world.universe
    s = u.state
    if u.root.qsmask:
        world.diagnostic(f"gp_cleanup for GP {s.gpnum} with root qsmask {sorted(u.root.qsmask)}")
    _transition(world, GpState.CLEANUP)
    g = s.gpnum
    mine = u.data[cpu].mynode
    for node in u.bfs():
        world.spin_acquire(cpu, node.lock)
        node.completed = g
        if node.index == mine:
            qs.note_gp_changes(world, cpu)
        world.spin_release(cpu, node.lock)

    root = u.root
    world.spin_acquire(cpu, root.lock)
    s.completed = g
    world.on_gp_end(g)
    world.emit("gp_cleanup", cpu, completed=g)
    u.data[cpu].callbacks.advance(g, qs.accel_target(u, root) if root.index == mine else None)
    _transition(world, GpState.CLEANED)
    more = s.gp_flags is GpFlags.FLAG_INIT or needs_gp(world, cpu)
    if more:
        s.gp_flags = GpFlags.FLAG_INIT
    else:
        _transition(world, GpState.WAIT_GPS)
    world.spin_release(cpu, root.lock)
    if more:
        gp_init(world, cpu, if_idle=True)
