"""Native mode: the same model on real OS threads.

Each virtual thread gets a worker thread and each CPU a ticker thread that
fires scheduling-clock interrupts every few milliseconds.  A per-CPU
execution lock stands in for "this CPU is running one thing at a time":
a worker holds it for one instruction, a ticker for one interrupt.  Node
spinlocks map one-to-one onto ``threading.Lock`` objects.  Runs execute
concurrently in batches and are classified as successful, failing
(assertion violated) or timed out, like a stress test.
"""

from __future__ import annotations

import random
import threading
import time
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

from rcusim import qs
from rcusim.qs import ModelViolation
from rcusim.sim.world import VThread, World, WorldConfig

if TYPE_CHECKING:
    from rcusim.harness import Scenario

TICK_MS = (5.0, 15.0)
START_DELAY_MS = (0.0, 20.0)
READER_DELAY_MS = (0.0, 20.0)
POLL_MS = 5.0
CTX_PROBABILITY = 0.5


class NativeWorld(World):
    """A world whose locks really block."""

    def __init__(self, config: WorldConfig) -> None:
        super().__init__(config)
        self.real_locks = {lk: threading.Lock() for lk in self.spinlocks}
        self.cpu_exec = [threading.Lock() for _ in range(config.cpus)]
        self.errors: list[str] = []

    def clone(self) -> World:
        raise TypeError("native worlds cannot be cloned")

    def spin_acquire(self, cpu: int, lock: str) -> None:
        if lock in self.held[cpu]:
            raise ModelViolation(f"cpu{cpu}: recursive acquire of {lock}")
        self.real_locks[lock].acquire()
        self.spinlocks[lock] = cpu
        self.held[cpu].append(lock)

    def spin_try_acquire(self, cpu: int, lock: str) -> bool:
        if lock in self.held[cpu] or not self.real_locks[lock].acquire(blocking=False):
            return False
        self.spinlocks[lock] = cpu
        self.held[cpu].append(lock)
        return True

    def spin_release(self, cpu: int, lock: str) -> None:
        if self.spinlocks.get(lock) != cpu:
            raise ModelViolation(f"cpu{cpu}: release of {lock} it does not hold")
        self.spinlocks[lock] = None
        self.held[cpu].remove(lock)
        self.real_locks[lock].release()


@dataclass
class NativeStats:
    successful: int = 0
    failing: int = 0
    timeouts: int = 0
    breaches: int = 0
    errors: list[str] = field(default_factory=list)

    @property
    def detail(self) -> str:
        return f"{len(self.errors)} model errors: {self.errors[:3]}" if self.errors else ""


class _Run:
    def __init__(self, sc: Scenario, index: int) -> None:
        from rcusim.harness import build_world

        self.sc = sc
        self.rng = random.Random(sc.seed * 1_000_003 + index)
        template = build_world(sc)
        self.world = NativeWorld(sc.world_config())
        for t in template.threads:
            self.world.add_thread(t.name, t.cpu, t.program)
        self.world.boot()
        self.stop = threading.Event()
        self.workers = [
            threading.Thread(target=self._worker, args=(t, random.Random(self.rng.random())), daemon=True)
            for t in self.world.threads
        ]
        self.tickers = [
            threading.Thread(target=self._ticker, args=(c, random.Random(self.rng.random())), daemon=True)
            for c in range(sc.cpus)
        ]
        self.deadline = 0.0

    def start(self) -> None:
        self.deadline = time.monotonic() + self.sc.timeout_ms / 1000.0
        for th in self.workers + self.tickers:
            th.start()

    def finished(self) -> bool:
        return all(not th.is_alive() for th in self.workers)

    def expired(self) -> bool:
        return time.monotonic() >= self.deadline

    def halt(self) -> None:
        self.stop.set()
        for th in self.workers + self.tickers:
            th.join()

    def _fail(self, e: BaseException) -> None:
        self.world.errors.append(f"{type(e).__name__}: {e}")
        self.stop.set()

    def _worker(self, t: VThread, rng: random.Random) -> None:
        w = self.world
        is_reader = t.name.startswith("reader")
        try:
            time.sleep(rng.uniform(*START_DELAY_MS) / 1000.0)
            while not t.done and not self.stop.is_set():
                ins = t.program[t.pc]
                with w.cpu_exec[t.cpu]:
                    ready = ins.ready is None or ins.ready(w, t)
                    if ready:
                        nxt = ins.run(w, t)
                        t.pc = t.pc + 1 if nxt is None else nxt
                if not ready:
                    time.sleep(POLL_MS / 1000.0)
                elif is_reader and w.section_depth[t.cpu] > 0:
                    # stretch the critical section between its loads
                    time.sleep(rng.uniform(*READER_DELAY_MS) / 1000.0)
        except Exception as e:  # noqa: BLE001 - surfaced as a model error
            self._fail(e)

    def _ticker(self, cpu: int, rng: random.Random) -> None:
        w = self.world
        try:
            while not self.stop.wait(rng.uniform(*TICK_MS) / 1000.0):
                with w.cpu_exec[cpu]:
                    idle = w.cpu_lock[cpu] is None and w.section_depth[cpu] == 0
                    if idle and rng.random() < CTX_PROBABILITY:
                        qs.note_context_switch(w, cpu)
                    w.inject_tick(cpu)
        except Exception as e:  # noqa: BLE001
            self._fail(e)


def run_native(sc: Scenario, parallel: int = 100) -> NativeStats:
    from rcusim.harness import order_violations

    stats = NativeStats()
    pending = list(range(sc.runs))
    active: list[_Run] = []
    while pending or active:
        while pending and len(active) < parallel:
            r = _Run(sc, pending.pop(0))
            r.start()
            active.append(r)
        time.sleep(POLL_MS / 1000.0)
        still: list[_Run] = []
        for r in active:
            done = r.finished()
            if not (done or r.expired() or r.world.errors):
                still.append(r)
                continue
            r.halt()
            w = r.world
            stats.breaches += bool(w.breaches)
            if w.errors:
                stats.errors.extend(w.errors)
            elif not done:
                stats.timeouts += 1
            elif order_violations(w):
                stats.failing += 1
            else:
                stats.successful += 1
        active = still
    return stats
