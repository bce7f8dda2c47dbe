"""Core Tree RCU records and the cross-level consistency audit."""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field

from rcusim.cbs import DEFAULT_BLIMIT, SegmentedCallbackList
from rcusim.geometry import TreeGeometry, parent_of


class InvariantViolation(AssertionError):
    """A model invariant does not hold."""


class GpFlags(enum.Enum):
    NONE = 0
    FLAG_INIT = 1


class GpState(enum.Enum):
    WAIT_GPS = "WAIT_GPS"
    INIT = "INIT"
    WAIT_QS = "WAIT_QS"
    CLEANUP = "CLEANUP"
    CLEANED = "CLEANED"


GP_STATE_ARCS = {
    GpState.WAIT_GPS: {GpState.INIT},
    GpState.INIT: {GpState.WAIT_QS},
    GpState.WAIT_QS: {GpState.CLEANUP},
    GpState.CLEANUP: {GpState.CLEANED},
    GpState.CLEANED: {GpState.WAIT_GPS, GpState.INIT},
}


@dataclass(slots=True)
class RcuState:
    gpnum: int = 0
    completed: int = 0
    gp_flags: GpFlags = GpFlags.NONE
    gp_state: GpState = GpState.WAIT_GPS

    def key(self) -> tuple:
        return (self.gpnum, self.completed, self.gp_flags, self.gp_state)


@dataclass(slots=True)
class RcuNode:
    index: int
    parent: int | None
    level: int
    grpmask_bit: int | None
    grplo: int
    grphi: int
    qsmaskinit: frozenset[int]
    qsmask: frozenset[int] = frozenset()
    gpnum: int = 0
    completed: int = 0

    @property
    def lock(self) -> str:
        return f"rnp{self.index}"

    def key(self) -> tuple:
        return (self.qsmask, self.gpnum, self.completed)


@dataclass(slots=True)
class RcuData:
    cpu: int
    mynode: int
    grpmask_bit: int
    qs_pending: int = 0
    passed_quiesce: int = 0
    gpnum: int = 0
    completed: int = 0
    callbacks: SegmentedCallbackList = field(default_factory=SegmentedCallbackList)

    def key(self) -> tuple:
        return (self.qs_pending, self.passed_quiesce, self.gpnum, self.completed, self.callbacks.key())


@dataclass(slots=True)
class RcuUniverse:
    geometry: TreeGeometry
    state: RcuState
    nodes: list[RcuNode]
    data: list[RcuData]

    @property
    def root(self) -> RcuNode:
        return self.nodes[0]

    def leaf_of(self, cpu: int) -> RcuNode:
        return self.nodes[self.data[cpu].mynode]

    def bfs(self) -> list[RcuNode]:
        return self.nodes

    def clone(self) -> RcuUniverse:
        s = self.state
        nodes = [
            RcuNode(n.index, n.parent, n.level, n.grpmask_bit, n.grplo, n.grphi,
                    n.qsmaskinit, n.qsmask, n.gpnum, n.completed)
            for n in self.nodes
        ]
        data = [
            RcuData(d.cpu, d.mynode, d.grpmask_bit, d.qs_pending, d.passed_quiesce,
                    d.gpnum, d.completed, d.callbacks.clone())
            for d in self.data
        ]
        return RcuUniverse(self.geometry, RcuState(s.gpnum, s.completed, s.gp_flags, s.gp_state), nodes, data)

    def key(self) -> tuple:
        return (self.state.key(), tuple(n.key() for n in self.nodes), tuple(d.key() for d in self.data))

    def snapshot(self) -> dict:
        """Plain-data view using the kernel's field names."""
        s = self.state
        return {
            "rcu_state": {
                "gpnum": s.gpnum,
                "completed": s.completed,
                "gp_flags": s.gp_flags.name,
                "gp_state": s.gp_state.name,
            },
            "rcu_node": [
                {
                    "index": n.index,
                    "level": n.level,
                    "parent": n.parent,
                    "grpmask": n.grpmask_bit,
                    "grplo": n.grplo,
                    "grphi": n.grphi,
                    "qsmask": sorted(n.qsmask),
                    "qsmaskinit": sorted(n.qsmaskinit),
                    "gpnum": n.gpnum,
                    "completed": n.completed,
                }
                for n in self.nodes
            ],
            "rcu_data": [
                {
                    "cpu": d.cpu,
                    "mynode": d.mynode,
                    "grpmask": d.grpmask_bit,
                    "qs_pending": d.qs_pending,
                    "passed_quiesce": d.passed_quiesce,
                    "gpnum": d.gpnum,
                    "completed": d.completed,
                    "qlen": d.callbacks.qlen,
                    "nxtlist": [list(seg) for seg in d.callbacks.segments()],
                }
                for d in self.data
            ],
        }

    def dumps(self) -> str:
        return json.dumps(self.snapshot(), sort_keys=True)


def init_universe(geom: TreeGeometry, blimit: int = DEFAULT_BLIMIT) -> RcuUniverse:
    nodes = []
    for i in range(geom.total_nodes):
        if geom.is_leaf(i):
            present = frozenset(c % geom.leaf_fanout for c in geom.cpus_of_leaf(i))
        else:
            present = frozenset(geom.grpmask_bit(ch) for ch in geom.children_of(i))  # type: ignore[misc]
        lo, hi = geom.cpu_range(i)
        nodes.append(
            RcuNode(
                index=i,
                parent=parent_of(geom, i),
                level=geom.level_of(i),
                grpmask_bit=geom.grpmask_bit(i),
                grplo=lo,
                grphi=hi,
                qsmaskinit=present,
            )
        )
    data = [
        RcuData(cpu=c, mynode=geom.leaf_of(c), grpmask_bit=c % geom.leaf_fanout,
                callbacks=SegmentedCallbackList(blimit))
        for c in range(geom.cpus)
    ]
    return RcuUniverse(geom, RcuState(), nodes, data)


def is_idle(state: RcuState) -> bool:
    gap = state.gpnum - state.completed
    if gap not in (0, 1):
        raise InvariantViolation(f"gpnum={state.gpnum} completed={state.completed}: invalid combination")
    return gap == 0


def check_universe(u: RcuUniverse, prev: RcuUniverse | None = None) -> list[str]:
    """Return every broken invariant as a message; empty means consistent.

    With ``prev`` (an earlier snapshot of the same universe) counters are
    also checked for monotonicity.
    """
    errs: list[str] = []
    s = u.state
    if s.gpnum - s.completed not in (0, 1):
        errs.append(f"state: gpnum={s.gpnum} completed={s.completed}")
    for n in u.nodes:
        if not n.qsmask <= n.qsmaskinit:
            errs.append(f"rnp{n.index}: qsmask {sorted(n.qsmask)} not within qsmaskinit {sorted(n.qsmaskinit)}")
        if s.gpnum - n.gpnum not in (0, 1):
            errs.append(f"rnp{n.index}: gpnum lag {s.gpnum - n.gpnum}")
        if s.completed - n.completed not in (0, 1):
            errs.append(f"rnp{n.index}: completed lag {s.completed - n.completed}")
    for d in u.data:
        leaf = u.nodes[d.mynode]
        if leaf.gpnum - d.gpnum not in (0, 1):
            errs.append(f"rdp{d.cpu}: gpnum lag {leaf.gpnum - d.gpnum} behind leaf")
        if leaf.completed - d.completed not in (0, 1):
            errs.append(f"rdp{d.cpu}: completed lag {leaf.completed - d.completed} behind leaf")
        cb = d.callbacks
        if not cb.boundaries_ok():
            errs.append(f"rdp{d.cpu}: callback boundaries {cb.done_end},{cb.wait_end},{cb.next_ready_end},{cb.qlen}")
        gps = [c.assigned_gp for c in cb.entries[cb.done_end : cb.next_ready_end]]
        if any(g is None for g in gps) or gps != sorted(gps):  # type: ignore[type-var]
            errs.append(f"rdp{d.cpu}: pending callbacks out of GP order {gps}")
        if any(c.assigned_gp is not None for c in cb.next):
            errs.append(f"rdp{d.cpu}: NEXT callback already carries a GP")
    if prev is not None:
        if s.gpnum < prev.state.gpnum or s.completed < prev.state.completed:
            errs.append("state: counter went backwards")
        for n, p in zip(u.nodes, prev.nodes):
            if n.gpnum < p.gpnum or n.completed < p.completed:
                errs.append(f"rnp{n.index}: counter went backwards")
        for d, p in zip(u.data, prev.data):
            if d.gpnum < p.gpnum or d.completed < p.completed:
                errs.append(f"rdp{d.cpu}: counter went backwards")
    return errs
