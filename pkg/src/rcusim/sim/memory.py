"""Store buffers for TSO and PSO.

TSO keeps one FIFO per CPU; PSO keeps one FIFO per (CPU, cell), so stores
to different cells may become visible out of order.  Loads forward from
the issuing CPU's own newest buffered store.
"""

from __future__ import annotations

import enum
from collections.abc import Hashable
from typing import Any

Cell = Hashable
_MISSING: Any = object()


class MemoryModel(enum.Enum):
    SC = "sc"
    TSO = "tso"
    PSO = "pso"


class StoreBuffers:
    __slots__ = ("model", "bufs")

    def __init__(self, model: MemoryModel, cpus: int) -> None:
        self.model = model
        # TSO: list[(cell, value)] per cpu; PSO: dict[cell, list[value]] per cpu
        self.bufs: list[Any] = [[] if model is MemoryModel.TSO else {} for _ in range(cpus)]

    def clone(self) -> StoreBuffers:
        new = StoreBuffers.__new__(StoreBuffers)
        new.model = self.model
        if self.model is MemoryModel.TSO:
            new.bufs = [list(b) for b in self.bufs]
        else:
            new.bufs = [{c: list(v) for c, v in b.items()} for b in self.bufs]
        return new

    def key(self) -> tuple:
        if self.model is MemoryModel.TSO:
            return tuple(tuple(b) for b in self.bufs)
        return tuple(tuple(sorted(((repr(c), tuple(v)) for c, v in b.items()))) for b in self.bufs)

    def empty(self, cpu: int | None = None) -> bool:
        cpus = range(len(self.bufs)) if cpu is None else (cpu,)
        return all(not self.bufs[c] for c in cpus)

    def push(self, cpu: int, cell: Cell, value: int) -> None:
        if self.model is MemoryModel.TSO:
            self.bufs[cpu].append((cell, value))
        else:
            self.bufs[cpu].setdefault(cell, []).append(value)

    def forward(self, cpu: int, cell: Cell) -> Any:
        """Newest value ``cpu`` has buffered for ``cell``, or ``_MISSING``."""
        if self.model is MemoryModel.TSO:
            for c, v in reversed(self.bufs[cpu]):
                if c == cell:
                    return v
            return _MISSING
        q = self.bufs[cpu].get(cell)
        return q[-1] if q else _MISSING

    def flush_choices(self) -> list[tuple[int, Cell | None]]:
        out: list[tuple[int, Cell | None]] = []
        for cpu, b in enumerate(self.bufs):
            if not b:
                continue
            if self.model is MemoryModel.TSO:
                out.append((cpu, None))
            else:
                out.extend((cpu, c) for c in sorted(b, key=repr))
        return out

    def pop_oldest(self, cpu: int, cell: Cell | None = None) -> tuple[Cell, int]:
        if self.model is MemoryModel.TSO:
            return self.bufs[cpu].pop(0)
        q = self.bufs[cpu][cell]
        v = q.pop(0)
        if not q:
            del self.bufs[cpu][cell]
        return cell, v

    def drain(self, cpu: int) -> list[tuple[Cell, int]]:
        """Remove and return every buffered store of ``cpu`` in commit order."""
        if self.model is MemoryModel.TSO:
            out = self.bufs[cpu]
            self.bufs[cpu] = []
            return out
        out = [(c, v) for c in sorted(self.bufs[cpu], key=repr) for v in self.bufs[cpu][c]]
        self.bufs[cpu] = {}
        return out
