"""Schedule exploration over virtual worlds.

A schedule is the list of indices chosen from ``world.choices()`` at each
step, so it replays exactly against an identically configured world.
"""

from __future__ import annotations

import enum
import random
from collections.abc import Callable, Sequence
from dataclasses import dataclass

from rcusim.sim.world import World


class End(enum.Enum):
    DONE = "done"          # every thread finished
    STUCK = "stuck"        # threads remain, nothing can move
    BUDGET = "budget"      # max_steps reached
    ERROR = "error"        # the model raised


@dataclass
class Terminal:
    world: World
    schedule: list[int]
    end: End
    error: str | None = None


@dataclass
class ExploreStats:
    schedules: int = 0
    states: int = 0
    pruned: int = 0
    truncated: int = 0
    hit_schedule_cap: bool = False
    stopped: bool = False


class ReplayError(ValueError):
    pass


def _step(world: World, choice: tuple) -> str | None:
    try:
        world.step(choice)
    except (RuntimeError, AssertionError, ValueError) as e:
        return f"{type(e).__name__}: {e}"
    return None


def _classify(world: World, choices: list) -> End | None:
    if world.all_done():
        return End.DONE
    if not choices:
        return End.STUCK
    return None


def _subsumed(seen: dict[tuple, list[tuple[int, ...]]], world: World) -> bool:
    """Record ``world``; True if its core state was already expanded with at least its budget."""
    core, budget = world.core_key(), world.budget()
    front = seen.setdefault(core, [])
    for b in front:
        if all(x >= y for x, y in zip(b, budget)):
            return True
    front[:] = [b for b in front if not all(y >= x for x, y in zip(b, budget))]
    front.append(budget)
    return False


def explore(
    root: World,
    visit: Callable[[Terminal], bool | None],
    *,
    max_steps: int = 400,
    max_schedules: int | None = None,
    cache: bool = False,
) -> ExploreStats:
    """Depth-first enumeration of every schedule of ``root``.

    ``visit`` sees each maximal or truncated schedule; returning True stops
    the search.  With ``cache`` a state whose core was already expanded with
    no less event budget is skipped: its futures are a subset of what was
    explored, so any reachable violation or GP completion is still found.
    """
    stats = ExploreStats()
    seen: dict[tuple, list[tuple[int, ...]]] = {}
    seen_terminal: set[tuple] = set()
    stack: list[tuple[World, list[int]]] = [(root, [])]
    while stack:
        world, sched = stack.pop()
        stats.states += 1
        choices = world.choices()
        end = _classify(world, choices)
        if cache:
            # terminals are deduplicated exactly so every distinct end state is reported
            if end is None and _subsumed(seen, world):
                stats.pruned += 1
                continue
            if end is not None:
                k = world.key()
                if k in seen_terminal:
                    stats.pruned += 1
                    continue
                seen_terminal.add(k)
        if end is None and len(sched) >= max_steps:
            end = End.BUDGET
            stats.truncated += 1
        if end is not None:
            stats.schedules += 1
            if visit(Terminal(world, sched, end)):
                stats.stopped = True
                return stats
            if max_schedules is not None and stats.schedules >= max_schedules:
                stats.hit_schedule_cap = bool(stack)
                return stats
            continue
        # clone siblings before index 0 mutates the parent in place;
        # pushed in reverse so index 0 is explored first
        children = [(world.clone(), i) for i in range(len(choices) - 1, 0, -1)] + [(world, 0)]
        for child, i in children:
            err = _step(child, choices[i])
            if err is None:
                stack.append((child, sched + [i]))
                continue
            stats.schedules += 1
            if visit(Terminal(child, sched + [i], End.ERROR, err)):
                stats.stopped = True
                return stats
    return stats


def run_random(root: World, seed: int, *, max_steps: int = 400) -> Terminal:
    rng = random.Random(seed)
    world = root
    sched: list[int] = []
    while True:
        choices = world.choices()
        end = _classify(world, choices)
        if end is None and len(sched) >= max_steps:
            end = End.BUDGET
        if end is not None:
            return Terminal(world, sched, end)
        i = rng.randrange(len(choices))
        sched.append(i)
        err = _step(world, choices[i])
        if err is not None:
            return Terminal(world, sched, End.ERROR, err)


def replay(root: World, schedule: Sequence[int]) -> Terminal:
    """Follow ``schedule``; a run left non-maximal at its end counts as truncated."""
    world = root
    sched: list[int] = []
    for n, i in enumerate(schedule):
        choices = world.choices()
        if not 0 <= i < len(choices):
            raise ReplayError(f"step {n}: choice {i} out of range ({len(choices)} enabled)")
        sched.append(i)
        err = _step(world, choices[i])
        if err is not None:
            return Terminal(world, sched, End.ERROR, err)
    end = _classify(world, world.choices())
    return Terminal(world, sched, End.BUDGET if end is None else end)
