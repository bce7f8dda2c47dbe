"""Quiescent-state recording and reporting up the combining tree.

All functions take the world the universe lives in; it supplies locks,
the memory layer for the lockless rcu_data flags, tracing and the fault
plan.  ``passed_quiesce`` and ``qs_pending`` are read and written through
``world.rdp_load``/``world.rdp_store`` so they can sit in store buffers.
"""

from __future__ import annotations

from typing import TYPE_CHECKING

from rcusim.faults import Hook
from rcusim.state import RcuNode, RcuUniverse, is_idle

if TYPE_CHECKING:
    from rcusim.sim.world import World


class ModelViolation(RuntimeError):
    """The simulated program broke a rule of the kernel model."""


def accel_target(u: RcuUniverse, leaf: RcuNode) -> int:
    """GP number new callbacks must wait for, as seen from ``leaf``.

    Only a lock holder on an idle root knows no GP has started behind its
    back; everyone else must allow for one.
    """
    if leaf.parent is None and leaf.gpnum == leaf.completed:
        return leaf.completed + 1
    return leaf.completed + 2


def record_qs(world: World, cpu: int) -> None:
    """rcu_sched_qs: note that ``cpu`` passed through a quiescent state."""
    if world.fault.active(Hook.SCHED_QS_NOOP):
        world.emit("rcu_sched_qs", cpu, skipped=True)
        return
    world.rdp_store(cpu, cpu, "passed_quiesce", 1)
    world.emit("rcu_sched_qs", cpu)


def note_context_switch(world: World, cpu: int) -> None:
    if world.section_depth[cpu] > 0:
        raise ModelViolation(f"cpu{cpu}: context switch inside an RCU read-side critical section")
    world.emit("note_context_switch", cpu)
    record_qs(world, cpu)


def note_gp_changes(world: World, cpu: int, *, bypass: bool = False, on_cpu: int | None = None) -> None:
    """Bring ``cpu``'s rcu_data up to date with its leaf.  Leaf lock held.

    ``on_cpu`` is the CPU actually executing (the GP driver may set up
    another CPU's state); ``bypass`` marks the CPU that is starting the
    new GP itself, whose queued callbacks may join that GP directly.
    """
    me = cpu if on_cpu is None else on_cpu
    u = world.universe
    rdp = u.data[cpu]
    leaf = u.nodes[rdp.mynode]
    if rdp.gpnum == leaf.gpnum and rdp.completed == leaf.completed:
        return
    cbs = rdp.callbacks
    if rdp.completed != leaf.completed:
        cbs.advance(leaf.completed)
        rdp.completed = leaf.completed
        world.emit("gp_end_noted", cpu, completed=leaf.completed)
    if rdp.gpnum != leaf.gpnum:
        rdp.gpnum = leaf.gpnum
        if bypass:
            cbs.accelerate(leaf.gpnum, bypass=True)
        else:
            cbs.accelerate(accel_target(u, leaf))
        world.rdp_store(me, cpu, "passed_quiesce", 0)
        pending = 1 if rdp.grpmask_bit in leaf.qsmask else 0
        if world.fault.active(Hook.NOTE_GP_QS_PENDING_ZERO):
            pending = 0
        world.rdp_store(me, cpu, "qs_pending", pending)
        if world.fault.active(Hook.NOTE_GP_CLEAR_QSMASK):
            leaf.qsmask = leaf.qsmask - {rdp.grpmask_bit}
        world.emit("gp_start_noted", cpu, gpnum=leaf.gpnum, qs_pending=pending)
    else:
        cbs.accelerate(accel_target(u, leaf))


def check_quiescent_state(world: World, cpu: int) -> None:
    u = world.universe
    leaf = u.leaf_of(cpu)
    world.spin_acquire(cpu, leaf.lock)
    note_gp_changes(world, cpu)
    world.spin_release(cpu, leaf.lock)
    if not world.rdp_load(cpu, cpu, "qs_pending"):
        return
    if not world.rdp_load(cpu, cpu, "passed_quiesce"):
        return
    report_qs_rdp(world, cpu)


def report_qs_rdp(world: World, cpu: int) -> None:
    u = world.universe
    rdp = u.data[cpu]
    leaf = u.nodes[rdp.mynode]
    world.spin_acquire(cpu, leaf.lock)
    passed = world.rdp_load(cpu, cpu, "passed_quiesce")
    if not passed or rdp.gpnum != leaf.gpnum or leaf.completed == leaf.gpnum:
        # quiescent state belongs to an earlier GP
        world.rdp_store(cpu, cpu, "passed_quiesce", 0)
        world.spin_release(cpu, leaf.lock)
        world.emit("report_qs_rdp", cpu, stale=True)
        return
    if rdp.grpmask_bit not in leaf.qsmask:
        world.spin_release(cpu, leaf.lock)
        world.emit("report_qs_rdp", cpu, already_clear=True)
        return
    world.rdp_store(cpu, cpu, "qs_pending", 0)
    rdp.callbacks.accelerate(accel_target(u, leaf))
    gp = leaf.gpnum
    world.spin_release(cpu, leaf.lock)
    world.emit("report_qs_rdp", cpu, gpnum=gp)
    report_qs_rnp(world, cpu, leaf.index, frozenset({rdp.grpmask_bit}), gp)


def report_qs_rnp(world: World, cpu: int, start_node: int, mask_bits: frozenset[int], gp_at_entry: int) -> None:
    """Clear ``mask_bits`` at ``start_node`` and walk up while subtrees empty out.

    Holds exactly one node lock at a time.
    """
    if not mask_bits:
        raise ValueError("empty mask")
    if world.fault.active(Hook.RNP_RETURN_EARLY):
        world.emit("report_qs_rnp", cpu, skipped=True)
        return
    skip_stop = world.fault.active(Hook.RNP_SKIP_STOP_CHECK)
    nodes = world.universe.nodes
    idx = start_node
    mask = frozenset(mask_bits)
    while True:
        node = nodes[idx]
        world.spin_acquire(cpu, node.lock)
        if not (mask & node.qsmask) or node.gpnum != gp_at_entry:
            world.spin_release(cpu, node.lock)
            world.emit("report_qs_rnp", cpu, node=idx, stop="clear-or-new-gp")
            return
        if not mask <= node.qsmask:
            world.spin_release(cpu, node.lock)
            raise AssertionError(f"rnp{idx}: clearing already-clear bits {sorted(mask - node.qsmask)}")
        node.qsmask = node.qsmask - mask
        world.on_qs_clear(idx, mask, gp_at_entry)
        world.emit("qsmask_clear", cpu, node=idx, bits=sorted(mask), qsmask=sorted(node.qsmask))
        if node.qsmask and not skip_stop:
            world.spin_release(cpu, node.lock)
            return
        if node.parent is None:
            world.spin_release(cpu, node.lock)
            break
        mask = frozenset({node.grpmask_bit})  # type: ignore[arg-type]
        world.spin_release(cpu, node.lock)
        idx = node.parent
    report_qs_rsp(world, cpu)


def report_qs_rsp(world: World, cpu: int) -> None:
    from rcusim import gp

    u = world.universe
    if is_idle(u.state):
        world.diagnostic(f"cpu{cpu}: report_qs_rsp with no grace period in progress")
        return
    if u.root.qsmask:
        world.diagnostic(f"cpu{cpu}: report_qs_rsp with root qsmask {sorted(u.root.qsmask)} still set")
    world.emit("report_qs_rsp", cpu, gpnum=u.state.gpnum)
    gp.gp_cleanup(world, cpu)


def process_callbacks(world: World, cpu: int) -> None:
    """RCU softirq body: report QS, start a GP if one is needed, run done callbacks."""
    from rcusim import gp

    world.emit("process_callbacks", cpu)
    check_quiescent_state(world, cpu)
    gp.maybe_start_gp(world, cpu)
    rdp = world.universe.data[cpu]
    for cb in rdp.callbacks.take_done():
        world.invoke_callback(cpu, cb)
