import itertools
from math import comb

import pytest

from rcusim import api, gp, qs
from rcusim.faults import FaultPlan
from rcusim.harness import trace_hash
from rcusim.qs import ModelViolation
from rcusim.sim import End, Instr, MemoryModel, ReplayError, World, WorldConfig, explore, replay, run_random


def quiet(cpus=2, **kw) -> World:
    kw.setdefault("ticks_per_cpu", 0)
    kw.setdefault("ctx_per_cpu", 0)
    return World(WorldConfig(cpus=cpus, **kw))


def private_stores(n: int, name: str) -> list[Instr]:
    return [api.store_instr(f"{name}{i}", 1) for i in range(n)]


@pytest.mark.parametrize("a,b", [(1, 1), (2, 2), (3, 2), (3, 3)])
def test_interleaving_count_matches_binomial(a, b):
    w = quiet()
    w.add_thread("A", 0, private_stores(a, "a"))
    w.add_thread("B", 1, private_stores(b, "b"))
    scheds: list[tuple[int, ...]] = []
    stats = explore(w, lambda t: scheds.append(tuple(t.schedule)) and None, cache=False)
    assert stats.schedules == comb(a + b, a)
    assert len(set(scheds)) == len(scheds)


def test_two_by_two_has_six_schedules_by_name():
    w = quiet()
    w.add_thread("A", 0, private_stores(2, "a"))
    w.add_thread("B", 1, private_stores(2, "b"))
    orders = set()

    def visit(t):
        order = tuple(r["args"]["thread"] for r in t.world.trace if r["op"] == "exec")
        orders.add(order)

    w.tracing = True
    explore(w, visit)
    oracle = {p for p in itertools.permutations("AABB")}
    assert orders == oracle and len(oracle) == 6


def test_single_runnable_thread_is_the_only_choice():
    w = quiet()
    w.add_thread("A", 0, private_stores(1, "a"))
    assert w.choices() == [("run", 0)]


def test_same_seed_same_trace():
    def traced(seed):
        w = World(WorldConfig(cpus=2))
        w.tracing = True
        w.add_thread("u", 1, [api.sched_in(), *api.synchronize_instrs(), api.sched_out()])
        return trace_hash(run_random(w, seed).world.trace)

    assert traced(11) == traced(11)
    assert len({traced(s) for s in range(5)}) > 1


def test_tick_deferred_while_irqs_disabled():
    w = quiet()
    w.tracing = True
    gp.request_gp(w, 1)
    gp.gp_init(w, 1)
    w.local_irq_save(0)
    w.inject_tick(0)
    assert w.pending_events[0] == ["TICK"]
    assert w.universe.data[0].gpnum == 0
    w.local_irq_restore(0)
    assert w.pending_events[0] == []
    assert w.universe.data[0].gpnum == 1
    ops = [r["op"] for r in w.trace]
    assert ops.index("tick_deferred") < ops.index("tick")


def test_unbalanced_irq_restore():
    with pytest.raises(ModelViolation):
        quiet().local_irq_restore(0)


def test_idle_tick_changes_nothing_but_trace():
    w = quiet()
    before = w.universe.key()
    w.inject_tick(0)
    assert w.universe.key() == before


def test_tick_after_context_switch_reports_upward():
    w = quiet()
    gp.request_gp(w, 1)
    gp.gp_init(w, 1)
    w.inject_tick(0)
    qs.note_context_switch(w, 0)
    w.inject_tick(0)
    assert w.universe.root.qsmask == frozenset({1})


def test_tso_forwarding_and_flush():
    w = quiet(memory_model=MemoryModel.TSO)
    w.store(0, "x", 1)
    assert w.load(0, "x") == 1
    assert w.load(1, "x") == 0
    assert w.choices() == [("flush", 0)]
    w.step(("flush", 0))
    assert w.load(1, "x") == 1


def test_pso_flushes_per_cell():
    w = quiet(memory_model=MemoryModel.PSO)
    w.store(0, "x", 1)
    w.store(0, "y", 1)
    assert set(w.choices()) == {("flush", 0, "x"), ("flush", 0, "y")}
    w.step(("flush", 0, "y"))
    assert (w.load(1, "y"), w.load(1, "x")) == (1, 0)


def test_uninstrumented_cells_are_sequentially_consistent():
    w = quiet(memory_model=MemoryModel.PSO)
    w.store(0, "z", 4)
    assert w.load(1, "z") == 4


def test_lock_acquire_and_release_flush():
    w = quiet(memory_model=MemoryModel.TSO)
    w.store(0, "x", 1)
    w.spin_acquire(0, "rnp0")
    assert w.load(1, "x") == 1
    w.store(0, "y", 1)
    w.spin_release(0, "rnp0")
    assert w.load(1, "y") == 1


def test_assign_pointer_publishes_earlier_stores():
    w = quiet(memory_model=MemoryModel.PSO)
    w.store(0, "x", 1)
    api.assign_pointer(w, 0, "y", 1)
    assert w.load(1, "x") == 1
    assert api.dereference(w, 0, "y") == 1


def test_spinlock_errors():
    w = quiet()
    w.tracing = True
    w.spin_acquire(0, "rnp0")
    assert w.trace[-1]["op"] == "spin_acquire"
    with pytest.raises(ModelViolation):
        w.spin_acquire(0, "rnp0")
    with pytest.raises(ModelViolation):
        w.spin_release(1, "rnp0")
    assert w.spin_try_acquire(1, "rnp0") is False
    with pytest.raises(ModelViolation):
        w.spin_acquire(1, "rnp0")
    w.spin_release(0, "rnp0")
    assert w.spin_is_free("rnp0")
    assert w.spin_try_acquire(1, "rnp0") is True


def test_ctx_switch_only_on_free_cpu_outside_sections():
    w = World(WorldConfig(cpus=2, ticks_per_cpu=0, ctx_per_cpu=1))
    assert ("ctx", 0) in w.choices()
    w.cpu_lock[0] = 0
    assert ("ctx", 0) not in w.choices()
    w.cpu_lock[0] = None
    w.section_enter(0)
    assert ("ctx", 0) not in w.choices()
    assert ("ctx", 1) in w.choices()


def test_clone_is_independent():
    w = World(WorldConfig(cpus=2, memory_model=MemoryModel.TSO))
    w.add_thread("A", 0, [api.store_instr("x", 1)])
    c = w.clone()
    c.step(("run", 0))
    c.step(("tick", 1))
    assert w.threads[0].pc == 0 and w.ticks_left == [3, 3]
    assert w.buffers.empty() and not c.buffers.empty()
    assert c.key() != w.key()


def test_budget_truncation_reported():
    w = quiet()
    w.add_thread("A", 0, private_stores(5, "a"))
    ends = []
    stats = explore(w, lambda t: ends.append(t.end) and None, max_steps=3)
    assert ends == [End.BUDGET] and stats.truncated == 1


def test_replay_rejects_out_of_range_choice():
    w = quiet()
    w.add_thread("A", 0, private_stores(1, "a"))
    with pytest.raises(ReplayError):
        replay(w, [1])


def test_replay_of_prefix_is_truncated():
    w = quiet()
    w.add_thread("A", 0, private_stores(2, "a"))
    assert replay(w, [0]).end is End.BUDGET


def updater_only(ticks: int, ctx: int, fault: str | None = None) -> World:
    w = World(WorldConfig(cpus=2, ticks_per_cpu=ticks, ctx_per_cpu=ctx, fault=FaultPlan.parse(fault)))
    w.add_thread("updater", 1, [api.sched_in(), *api.synchronize_instrs(), api.sched_out()])
    return w


@pytest.mark.parametrize("fault", [None, "bug5"])
def test_cache_preserves_done_outcomes_and_gp_reachability(fault):
    def summary(cache):
        done, gp_seen = set(), False

        def visit(t):
            nonlocal gp_seen
            gp_seen |= t.world.gp_completed > 0
            if t.end is End.DONE:
                done.add((t.world.gp_completed, tuple(t.world.invoked)))

        explore(updater_only(2, 1, fault), visit, cache=cache)
        return done, gp_seen

    assert summary(True) == summary(False)


def test_updater_alone_waits_for_one_gp():
    """With no readers, synchronize returns after exactly one grace period."""
    w = updater_only(3, 2)
    done = []
    explore(w, lambda t: done.append(t) if t.end is End.DONE else None, cache=True)
    assert done
    for t in done:
        assert t.world.gp_completed == 1
        assert [f for _, _, f in t.world.invoked] == ["wakeme_after_rcu"]


def test_check_each_step_audits():
    w = World(WorldConfig(cpus=2, check_each_step=True))
    w.add_thread("updater", 1, [api.sched_in(), *api.synchronize_instrs(), api.sched_out()])
    for seed in range(20):
        run_random(w.clone(), seed)
    assert w.invariant_violations == []
