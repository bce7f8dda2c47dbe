import pytest

from rcusim.harness import (
    HarnessError,
    Mode,
    Outcome,
    Property,
    ReplayMismatch,
    Scenario,
    audit_trace,
    load_schedule,
    replay_schedule,
    run_scenario,
    save_schedule,
    schedule_doc,
)
from rcusim.sim import MemoryModel, TickModel


def test_scenario_validation():
    with pytest.raises(ValueError):
        Scenario("bug9")
    with pytest.raises(ValueError):
        Scenario(readers=3)
    with pytest.raises(ValueError):
        Scenario(mode=Mode.NATIVE, memory_model=MemoryModel.TSO)
    with pytest.raises(ValueError):
        Scenario(mode=Mode.NATIVE, tick_model=TickModel.PINNED)
    with pytest.raises(ValueError):
        Scenario(max_steps=0)


def test_scenario_derived_values():
    assert Scenario("prove").prop is Property.ASSERT_ORDER
    assert Scenario("bug3").prop is Property.ASSERT_GP_COMPLETES
    assert Scenario(readers=2).cpus == 3
    assert Scenario(readers=2, shared_reader_cpu=True).cpus == 2
    assert (Scenario().ticks, Scenario().ctx) == (3, 2)
    assert Scenario(mode=Mode.RANDOM).ticks == 30


def test_digest_ignores_run_budgets_only():
    base = Scenario("bug1")
    same = Scenario("bug1", mode=Mode.RANDOM, runs=5, max_schedules=9, ticks_per_cpu=3, ctx_per_cpu=2)
    assert base.digest() == same.digest()
    assert base.digest() != Scenario("bug1", mode=Mode.RANDOM).digest()
    assert base.digest() != Scenario("bug1", seed=1).digest()
    assert base.digest() != Scenario("bug7").digest()
    assert Scenario.from_config(base.config_dict()) == base


def test_prove_is_safe():
    rep = run_scenario(Scenario("prove"))
    assert rep.outcome is Outcome.SAFE and rep.matched
    assert rep.breaches == 0 and rep.counterexample is None
    assert audit_trace(rep.trace) == []


def test_prove_gp_completes_with_witness():
    rep = run_scenario(Scenario("prove-gp"))
    assert rep.outcome is Outcome.GP_COMPLETED
    again = replay_schedule(schedule_doc(Scenario("prove-gp"), rep.witness))
    assert again.outcome is Outcome.GP_COMPLETED


@pytest.mark.parametrize("name,readers", [("bug1", 1), ("bug7", 2)])
def test_counterexample_replays_identically(name, readers, tmp_path):
    sc = Scenario(name, readers=readers)
    rep = run_scenario(sc)
    assert rep.outcome is Outcome.ASSERTION_VIOLATED and rep.counterexample
    path = tmp_path / "cex.json"
    save_schedule(path, sc, rep.counterexample, rep.outcome)
    again = replay_schedule(load_schedule(path))
    assert again.outcome is Outcome.ASSERTION_VIOLATED
    assert again.trace_hash == rep.trace_hash
    assert again.detail == rep.detail


def test_replay_wrong_digest():
    sc = Scenario("bug1")
    rep = run_scenario(sc)
    doc = schedule_doc(sc, rep.counterexample)
    doc["digest"] = "0" * 16
    with pytest.raises(ReplayMismatch):
        replay_schedule(doc)
    with pytest.raises(ReplayMismatch):
        replay_schedule(schedule_doc(sc, rep.counterexample), Scenario("bug7"))


def test_replay_of_safe_prefix_has_no_violation():
    sc = Scenario("prove-gp")
    witness = run_scenario(sc).witness
    prove = Scenario("prove")
    for cut in (0, len(witness) // 2, len(witness) - 1):
        rep = replay_schedule(schedule_doc(prove, witness[:cut]))
        assert rep.outcome is not Outcome.ASSERTION_VIOLATED


@pytest.mark.parametrize("name", ["bug2", "bug3", "bug4", "bug5", "bug6"])
def test_liveness_bugs_hang(name):
    rep = run_scenario(Scenario(name))
    assert rep.outcome is Outcome.GP_HUNG and rep.matched
    assert rep.caveat == (Scenario(name).fault.caveat)


def test_bug7_one_reader_either_outcome():
    rep = run_scenario(Scenario("bug7"))
    assert rep.outcome in (Outcome.ASSERTION_VIOLATED, Outcome.BUG_MISSED)


def test_bug7_pinned_tick_model_misses():
    rep = run_scenario(Scenario("bug7", tick_model=TickModel.PINNED))
    assert rep.outcome is Outcome.BUG_MISSED and rep.matched


def test_multi_level_tree_scenarios():
    kw = dict(readers=2, leaf_fanout=2)
    assert run_scenario(Scenario("bug7", **kw)).outcome is Outcome.ASSERTION_VIOLATED
    assert run_scenario(Scenario("bug3", **kw)).outcome is Outcome.GP_HUNG
    assert run_scenario(Scenario("prove-gp", **kw)).outcome is Outcome.GP_COMPLETED


@pytest.mark.parametrize("model", [MemoryModel.TSO, MemoryModel.PSO])
def test_weak_memory_outcomes(model):
    assert run_scenario(Scenario("prove", memory_model=model)).outcome is Outcome.SAFE
    assert run_scenario(Scenario("bug1", memory_model=model)).outcome is Outcome.ASSERTION_VIOLATED


def test_budget_exhaustion_is_not_safe():
    rep = run_scenario(Scenario("prove", max_steps=10))
    assert rep.outcome is Outcome.BUDGET_EXHAUSTED
    assert rep.exit_code() == 2
    rep = run_scenario(Scenario("prove", max_schedules=1, cache=False))
    assert rep.outcome is Outcome.BUDGET_EXHAUSTED


def test_random_mode():
    rep = run_scenario(Scenario("prove", mode=Mode.RANDOM, runs=30, seed=3))
    assert rep.outcome is Outcome.SAFE
    assert rep.failing == 0 and rep.successful + rep.timeouts == 30
    rep = run_scenario(Scenario("bug1", mode=Mode.RANDOM, runs=50))
    assert rep.outcome is Outcome.ASSERTION_VIOLATED and rep.failing > 0
    again = replay_schedule(schedule_doc(Scenario("bug1", mode=Mode.RANDOM, runs=50), rep.counterexample))
    assert again.outcome is Outcome.ASSERTION_VIOLATED


def test_random_mode_is_deterministic():
    sc = Scenario("prove", mode=Mode.RANDOM, runs=5, seed=42)
    hashes = {run_scenario(sc).trace_hash for _ in range(3)}
    assert len(hashes) == 1


def test_audit_flags_nested_node_locks_and_leaks():
    def rec(step, op, lock, cpu=0):
        return {"step": step, "cpu": cpu, "op": op, "gpnum": 1, "completed": 0, "args": {"lock": lock}}

    trace = [rec(1, "spin_acquire", "rnp1"), rec(2, "spin_acquire", "rnp0"), rec(3, "spin_release", "rnp0")]
    problems = audit_trace(trace)
    assert any("2 node locks" in p for p in problems)
    assert any("still holds" in p for p in problems)
    bad = [{"step": 1, "cpu": None, "op": "gp_init", "gpnum": 3, "completed": 1, "args": {}}]
    assert any("lockstep" in p for p in audit_trace(bad))


def test_model_fault_surfaces_as_harness_error():
    from rcusim.harness import classify_terminal
    from rcusim.sim import End, Terminal, World

    with pytest.raises(HarnessError):
        classify_terminal(Scenario(), Terminal(World(), [0], End.ERROR, "boom"))
