"""Shape of the rcu_node combining tree.

The tree is stored breadth-first in a flat array, root at index 0, so a
breadth-first walk is a linear scan.  Children are packed densely left to
right; the last parent on a level may be under-full.
"""

from __future__ import annotations

from dataclasses import dataclass

MAX_LEVELS = 4


class GeometryError(ValueError):
    """Raised for CPU counts or fanouts the tree cannot represent."""


@dataclass(frozen=True)
class TreeGeometry:
    cpus: int
    leaf_fanout: int
    interior_fanout: int
    levels: tuple[int, ...]
    level_start: tuple[int, ...]
    cpu_to_leaf: tuple[int, ...]
    total_nodes: int

    @property
    def depth(self) -> int:
        return len(self.levels)

    @property
    def leaf_level(self) -> int:
        return len(self.levels) - 1

    def level_of(self, node: int) -> int:
        self._check(node)
        for lvl in range(len(self.levels) - 1, -1, -1):
            if node >= self.level_start[lvl]:
                return lvl
        raise AssertionError("unreachable")

    def is_leaf(self, node: int) -> bool:
        return self.level_of(node) == self.leaf_level

    def ordinal(self, node: int) -> int:
        """Position of ``node`` within its own level."""
        return node - self.level_start[self.level_of(node)]

    def grpmask_bit(self, node: int) -> int | None:
        """Bit this node occupies in its parent's qsmask (None for the root)."""
        if node == 0:
            self._check(node)
            return None
        return self.ordinal(node) % self.interior_fanout

    def children_of(self, node: int) -> list[int]:
        lvl = self.level_of(node)
        if lvl == self.leaf_level:
            return []
        k = self.ordinal(node)
        lo = k * self.interior_fanout
        hi = min(self.levels[lvl + 1], lo + self.interior_fanout)
        base = self.level_start[lvl + 1]
        return [base + i for i in range(lo, hi)]

    def cpus_of_leaf(self, node: int) -> list[int]:
        if not self.is_leaf(node):
            raise GeometryError(f"node {node} is not a leaf")
        k = self.ordinal(node)
        lo = k * self.leaf_fanout
        return list(range(lo, min(self.cpus, lo + self.leaf_fanout)))

    def cpu_range(self, node: int) -> tuple[int, int]:
        """(grplo, grphi) -- inclusive range of CPUs covered by ``node``."""
        lvl = self.level_of(node)
        span = self.leaf_fanout * self.interior_fanout ** (self.leaf_level - lvl)
        lo = self.ordinal(node) * span
        return lo, min(self.cpus, lo + span) - 1

    def leaf_of(self, cpu: int) -> int:
        if not 0 <= cpu < self.cpus:
            raise GeometryError(f"cpu {cpu} out of range [0, {self.cpus})")
        return self.cpu_to_leaf[cpu]

    def _check(self, node: int) -> None:
        if not 0 <= node < self.total_nodes:
            raise GeometryError(f"node index {node} out of range [0, {self.total_nodes})")


def compute_geometry(cpus: int, leaf_fanout: int = 16, interior_fanout: int = 64) -> TreeGeometry:
    """Minimal-depth tree for ``cpus`` CPUs under the given fanouts."""
    if cpus < 1:
        raise GeometryError("need at least one CPU")
    for name, f in (("leaf_fanout", leaf_fanout), ("interior_fanout", interior_fanout)):
        if not 2 <= f <= 64:
            raise GeometryError(f"{name}={f} outside [2, 64]")
    limit = interior_fanout ** (MAX_LEVELS - 1) * leaf_fanout
    if cpus > limit:
        raise GeometryError(f"{cpus} CPUs need more than {MAX_LEVELS} levels (limit {limit})")

    counts = [-(-cpus // leaf_fanout)]
    while counts[-1] > 1:
        counts.append(-(-counts[-1] // interior_fanout))
    levels = tuple(reversed(counts))
    assert len(levels) <= MAX_LEVELS

    starts = []
    acc = 0
    for n in levels:
        starts.append(acc)
        acc += n
    leaf_base = starts[-1]
    cpu_to_leaf = tuple(leaf_base + c // leaf_fanout for c in range(cpus))
    return TreeGeometry(
        cpus=cpus,
        leaf_fanout=leaf_fanout,
        interior_fanout=interior_fanout,
        levels=levels,
        level_start=tuple(starts),
        cpu_to_leaf=cpu_to_leaf,
        total_nodes=acc,
    )


def parent_of(geom: TreeGeometry, node_index: int) -> int | None:
    lvl = geom.level_of(node_index)
    if lvl == 0:
        return None
    k = node_index - geom.level_start[lvl]
    return geom.level_start[lvl - 1] + k // geom.interior_fanout


def children_of(geom: TreeGeometry, node_index: int) -> list[int]:
    return geom.children_of(node_index)
