"""Acceptance criteria, one PASS/FAIL line each.

Run under pytest (lines are repeated in the terminal summary) or directly
with ``python tests/test_acceptance.py``.
"""

from __future__ import annotations

import random
import sys
import time
from dataclasses import replace
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

from conftest import VERDICTS  # noqa: E402
from test_geometry import check_invariants  # noqa: E402
from test_litmus import enumerate_outcomes  # noqa: E402

from rcusim.geometry import GeometryError, compute_geometry  # noqa: E402
from rcusim.harness import (  # noqa: E402
    Mode,
    Outcome,
    Scenario,
    build_world,
    replay_schedule,
    run_scenario,
    schedule_doc,
    wakeme_fired,
)
from rcusim.litmus import STALE, outcomes  # noqa: E402
from rcusim.sim import MemoryModel, TickModel, replay, run_random  # noqa: E402
from rcusim.sim.world import World  # noqa: E402

# pinned budgets
PROVE_MAX_RUNTIME_S = 60.0
NATIVE_RUNS = 200
NATIVE_TIMEOUT_MS = 2000
INVARIANT_STEPS = 10_000
GEOMETRY_PAIRS = 1000
DETERMINISM_REPEATS = 3


def verdict(n: int, title: str, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'}  criterion {n:>2}  {title}: {detail}"
    VERDICTS.append(line)
    print(line)
    assert ok, line


def replays_to(sc: Scenario, schedule: list[int], outcome: Outcome) -> bool:
    return replay_schedule(schedule_doc(sc, schedule)).outcome is outcome


def test_criterion_01_prove_safe():
    t0 = time.perf_counter()
    rep = run_scenario(Scenario("prove", max_steps=400))
    dt = time.perf_counter() - t0
    ok = rep.outcome is Outcome.SAFE and rep.breaches == 0 and dt < PROVE_MAX_RUNTIME_S
    verdict(1, "Prove exhaustive SC", ok,
            f"{rep.outcome.value}, {rep.states_explored} states, {rep.breaches} breaches, {dt:.1f}s")


def test_criterion_02_prove_gp_completes():
    sc = Scenario("prove-gp")
    rep = run_scenario(sc)
    fired = False
    if rep.witness is not None:
        term = replay(build_world(sc), rep.witness)
        fired = term.world.gp_completed > 0 and wakeme_fired(term.world)
    ok = rep.outcome is Outcome.GP_COMPLETED and fired
    verdict(2, "Prove-GP", ok, f"{rep.outcome.value}, wakeme fired on witness: {fired}")


def test_criterion_03_bug1_violation_replays():
    sc = Scenario("bug1")
    rep = run_scenario(sc)
    ok = rep.outcome is Outcome.ASSERTION_VIOLATED and rep.counterexample is not None
    ok = ok and replays_to(sc, rep.counterexample, Outcome.ASSERTION_VIOLATED)
    n = len(rep.counterexample or [])
    verdict(3, "Bug 1 exhaustive SC", ok, f"{rep.outcome.value}, {n}-step counterexample replays")


def test_criterion_04_liveness_bugs_hang():
    results = {}
    for name in ("bug2", "bug3", "bug4", "bug5", "bug6"):
        results[name] = run_scenario(Scenario(name)).outcome
    ok = all(o is Outcome.GP_HUNG for o in results.values())
    verdict(4, "Bugs 2-6", ok, ", ".join(f"{k}={v.value}" for k, v in results.items()))


def test_criterion_05_bug7():
    sc2 = Scenario("bug7", readers=2)
    two = run_scenario(sc2)
    two_ok = two.outcome is Outcome.ASSERTION_VIOLATED and replays_to(sc2, two.counterexample, two.outcome)
    one = run_scenario(Scenario("bug7")).outcome
    pinned = run_scenario(Scenario("bug7", tick_model=TickModel.PINNED)).outcome
    ok = two_ok and one in (Outcome.ASSERTION_VIOLATED, Outcome.BUG_MISSED) and pinned is Outcome.BUG_MISSED
    verdict(5, "Bug 7", ok,
            f"2R={two.outcome.value}; 1R general ticks={one.value}; 1R pinned ticks={pinned.value}")


def test_criterion_06_memory_models():
    details, ok = [], True
    for model in MemoryModel:
        got = outcomes("mp", model)
        want, n_states = enumerate_outcomes("mp", model.value)
        stale = STALE["mp"] in got
        ok &= got == want and n_states <= 500
        details.append(f"{model.value}: stale={stale} oracle-match={got == want}")
    ok &= STALE["mp"] in outcomes("mp", MemoryModel.PSO)
    ok &= STALE["mp"] not in outcomes("mp", MemoryModel.SC)
    verdict(6, "Message-passing litmus", ok, "; ".join(details))


def test_criterion_07_native():
    def native(name: str, readers: int = 1):
        return run_scenario(Scenario(name, readers=readers, mode=Mode.NATIVE,
                                     runs=NATIVE_RUNS, timeout_ms=NATIVE_TIMEOUT_MS))

    rows, ok = [], True
    p = native("prove")
    ok &= p.successful == NATIVE_RUNS
    rows.append(f"prove {p.successful}/{NATIVE_RUNS} ok")
    for name in ("bug2", "bug3", "bug4", "bug5", "bug6"):
        r = native(name)
        ok &= r.timeouts == NATIVE_RUNS
        rows.append(f"{name} {r.timeouts} timeouts")
    b1 = native("bug1")
    ok &= b1.failing >= 1
    rows.append(f"bug1 {b1.failing} failing")
    b7 = native("bug7", readers=2)
    ok &= b7.failing >= 1
    rows.append(f"bug7-2R {b7.failing} failing")
    verdict(7, "Native stress", ok, ", ".join(rows))


def test_criterion_08_invariants():
    sc = Scenario("prove", mode=Mode.RANDOM)
    cfg = replace(sc.world_config(), check_each_step=True)
    steps = runs = 0
    violations: list[str] = []
    clear_twice = 0
    seed = 0
    while steps < INVARIANT_STEPS:
        w = World(cfg)
        for t in build_world(sc).threads:
            w.add_thread(t.name, t.cpu, t.program)
        term = run_random(w, seed)
        seed += 1
        runs += 1
        steps += len(term.schedule)
        violations += term.world.invariant_violations
        clear_twice += len(term.world.clear_once_violations)
    ok = not violations and clear_twice == 0
    verdict(8, "Invariant suite", ok,
            f"{steps} checked steps over {runs} seeds, {len(violations)} violations, {clear_twice} double clears")


def test_criterion_09_determinism():
    hashes = set()
    for _ in range(DETERMINISM_REPEATS):
        hashes.add(run_scenario(Scenario("prove", mode=Mode.RANDOM, runs=20, seed=7)).trace_hash)
    ex = {run_scenario(Scenario("bug1")).trace_hash for _ in range(DETERMINISM_REPEATS)}
    stored = [Scenario("bug1"), Scenario("bug7", readers=2), Scenario("bug7"),
              Scenario("bug1", memory_model=MemoryModel.TSO), Scenario("bug1", memory_model=MemoryModel.PSO)]
    replayed = 0
    total = 0
    for sc in stored:
        rep = run_scenario(sc)
        if rep.counterexample is None:
            continue
        total += 1
        again = replay_schedule(schedule_doc(sc, rep.counterexample))
        replayed += again.outcome is rep.outcome and again.trace_hash == rep.trace_hash
    ok = len(hashes) == 1 and len(ex) == 1 and replayed == total > 0
    verdict(9, "Determinism", ok,
            f"random hash stable x{DETERMINISM_REPEATS}: {len(hashes) == 1}, "
            f"exhaustive hash stable: {len(ex) == 1}, {replayed}/{total} counterexamples replay")


def test_criterion_10_geometry():
    g = compute_geometry(4096, 16, 64)
    exact = list(g.levels) == [1, 4, 256]
    rng = random.Random(2024)
    checked = 0
    for _ in range(GEOMETRY_PAIRS):
        leaf, interior = rng.randint(2, 64), rng.randint(2, 64)
        cpus = rng.randint(1, min(5000, leaf * interior**3))
        check_invariants(compute_geometry(cpus, leaf, interior), cpus, leaf, interior)
        checked += 1
    too_deep = False
    try:
        compute_geometry(16_777_217, 64, 64)
    except GeometryError:
        too_deep = True
    ok = exact and checked == GEOMETRY_PAIRS and too_deep
    verdict(10, "Geometry", ok, f"levels {list(g.levels)}; {checked} random pairs hold all invariants; "
            f"five-level request rejected: {too_deep}")


if __name__ == "__main__":
    failed = 0
    for name, fn in sorted(globals().items()):
        if name.startswith("test_criterion_"):
            try:
                fn()
            except AssertionError:
                failed += 1
    sys.exit(1 if failed else 0)
