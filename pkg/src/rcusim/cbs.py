"""Per-CPU four-segment callback list.

One ordered list with three boundary indices::

    [0, done_end)               DONE        ready to invoke
    [done_end, wait_end)        WAIT        waiting for the current GP
    [wait_end, next_ready_end)  NEXT_READY  waiting for the next GP
    [next_ready_end, len)       NEXT        no GP assigned yet

Callbacks in WAIT and NEXT_READY carry ``assigned_gp``: the grace period
whose completion makes them ready.  Assignments never decrease along the
list, so "everything up to GP n is done" is always a prefix.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

DEFAULT_BLIMIT = 10


class CallbackError(ValueError):
    pass


@dataclass(frozen=True)
class Callback:
    id: int
    func: str = "wakeme_after_rcu"
    assigned_gp: int | None = None


class SegmentedCallbackList:
    __slots__ = ("entries", "done_end", "wait_end", "next_ready_end", "blimit", "_ids")

    def __init__(self, blimit: int = DEFAULT_BLIMIT) -> None:
        if blimit < 1:
            raise CallbackError("blimit must be positive")
        self.entries: list[Callback] = []
        self.done_end = 0
        self.wait_end = 0
        self.next_ready_end = 0
        self.blimit = blimit
        # every id ever enqueued here, for duplicate detection
        self._ids: set[int] = set()

    # -- views -----------------------------------------------------------

    @property
    def qlen(self) -> int:
        return len(self.entries)

    @property
    def done(self) -> list[Callback]:
        return self.entries[: self.done_end]

    @property
    def wait(self) -> list[Callback]:
        return self.entries[self.done_end : self.wait_end]

    @property
    def next_ready(self) -> list[Callback]:
        return self.entries[self.wait_end : self.next_ready_end]

    @property
    def next(self) -> list[Callback]:
        return self.entries[self.next_ready_end :]

    def segments(self) -> tuple[list[int], list[int], list[int], list[int]]:
        return (
            [cb.id for cb in self.done],
            [cb.id for cb in self.wait],
            [cb.id for cb in self.next_ready],
            [cb.id for cb in self.next],
        )

    def pending_gps(self) -> set[int]:
        """GP numbers some queued callback is still waiting on."""
        return {cb.assigned_gp for cb in self.entries[self.done_end : self.next_ready_end]}  # type: ignore[misc]

    def has_unassigned(self) -> bool:
        return self.next_ready_end < len(self.entries)

    def boundaries_ok(self) -> bool:
        return 0 <= self.done_end <= self.wait_end <= self.next_ready_end <= len(self.entries)

    def clone(self) -> SegmentedCallbackList:
        new = SegmentedCallbackList.__new__(SegmentedCallbackList)
        new.entries = list(self.entries)
        new.done_end = self.done_end
        new.wait_end = self.wait_end
        new.next_ready_end = self.next_ready_end
        new.blimit = self.blimit
        new._ids = set(self._ids)
        return new

    def key(self) -> tuple:
        return (tuple(self.entries), self.done_end, self.wait_end, self.next_ready_end)

    def __repr__(self) -> str:
        d, w, r, n = self.segments()
        return f"<cbs DONE={d} WAIT={w} NEXT_READY={r} NEXT={n}>"

    # -- operations ------------------------------------------------------

    def enqueue(self, cb: Callback) -> None:
        if cb.assigned_gp is not None:
            raise CallbackError(f"callback {cb.id} already has a grace period")
        if cb.id in self._ids:
            raise CallbackError(f"duplicate callback id {cb.id}")
        self._ids.add(cb.id)
        self.entries.append(cb)

    def accelerate(self, target_gp: int, bypass: bool = False) -> None:
        """Give every NEXT callback ``target_gp`` and fold it into a waiting segment.

        Normally NEXT merges into NEXT_READY.  With ``bypass`` (only valid on
        the CPU that is itself starting GP ``target_gp``) NEXT merges straight
        into WAIT.  Only two distinct pending GPs fit; if NEXT_READY already
        waits for an earlier GP it is re-tagged to the later one, which only
        makes those callbacks wait longer.
        """
        n = len(self.entries)
        if self.next_ready_end == n:
            return
        wait_gp = self._gp_of(self.done_end, self.wait_end)
        ready_gp = self._gp_of(self.wait_end, self.next_ready_end)
        if bypass and ready_gp in (None, target_gp) and wait_gp in (None, target_gp):
            self._tag(self.wait_end, n, target_gp)
            self.wait_end = self.next_ready_end = n
            return
        if ready_gp is None and wait_gp is not None and wait_gp >= target_gp:
            target_gp = wait_gp
        if ready_gp is not None and ready_gp != target_gp:
            target_gp = max(target_gp, ready_gp)
            self._tag(self.wait_end, self.next_ready_end, target_gp)
        self._tag(self.next_ready_end, n, target_gp)
        self.next_ready_end = n

    def advance(self, completed_now: int, accel_target: int | None = None) -> None:
        """Move everything whose GP has completed into DONE.

        WAIT drains into DONE, then NEXT_READY slides into the emptied WAIT
        segment.  Repeating the call with the same ``completed_now`` changes
        nothing.  If ``accel_target`` is given, NEXT is accelerated afterwards.
        """
        i = self.done_end
        while i < self.next_ready_end and self.entries[i].assigned_gp <= completed_now:  # type: ignore[operator]
            i += 1
        self.done_end = i
        if self.wait_end < i:
            self.wait_end = i
        if self.next_ready_end < i:
            self.next_ready_end = i
        if self.wait_end == self.done_end:
            self.wait_end = self.next_ready_end
        if accel_target is not None:
            self.accelerate(accel_target)

    def take_done(self) -> list[Callback]:
        k = min(self.done_end, self.blimit)
        if k == 0:
            return []
        taken = self.entries[:k]
        del self.entries[:k]
        self.done_end -= k
        self.wait_end -= k
        self.next_ready_end -= k
        return taken

    # -- helpers ---------------------------------------------------------

    def _gp_of(self, lo: int, hi: int) -> int | None:
        return self.entries[lo].assigned_gp if lo < hi else None

    def _tag(self, lo: int, hi: int, gp: int) -> None:
        for j in range(lo, hi):
            if self.entries[j].assigned_gp != gp:
                self.entries[j] = replace(self.entries[j], assigned_gp=gp)
