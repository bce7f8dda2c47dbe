import json

import pytest

from rcusim.cli import main


def test_run_prove_table(capsys):
    assert main(["run", "--scenario", "prove"]) == 0
    out = capsys.readouterr().out
    assert "SAFE" in out and "scenario" in out.splitlines()[0]


def test_run_jsonl(capsys):
    assert main(["run", "--scenario", "bug1", "--format", "jsonl"]) == 0
    rec = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert rec["outcome"] == "ASSERTION_VIOLATED" and rec["counterexample"]


def test_save_replay_audit_roundtrip(tmp_path, capsys):
    sched, trace, trace2 = tmp_path / "s.json", tmp_path / "t.jsonl", tmp_path / "t2.jsonl"
    assert main(["run", "--scenario", "bug7", "--readers", "2", "--save-schedule", str(sched),
                 "--trace", str(trace), "--format", "jsonl"]) == 0
    first = json.loads(capsys.readouterr().out)
    assert main(["replay", "--schedule", str(sched), "--trace", str(trace2), "--format", "jsonl"]) == 0
    again = json.loads(capsys.readouterr().out)
    assert again["trace_hash"] == first["trace_hash"]
    assert trace.read_text() == trace2.read_text()
    # the buggy run ends a GP under a live reader, which the audit reports
    assert main(["audit", "--trace", str(trace)]) == 1
    assert "pre-existing reader" in capsys.readouterr().out


def test_audit_clean_trace(tmp_path, capsys):
    trace = tmp_path / "t.jsonl"
    assert main(["run", "--scenario", "prove-gp", "--trace", str(trace)]) == 0
    assert main(["audit", "--trace", str(trace)]) == 0
    assert "0 problem(s)" in capsys.readouterr().out


def test_budget_exhaustion_exit_code():
    assert main(["run", "--scenario", "prove", "--max-steps", "5"]) == 2


def test_unexpected_outcome_exit_code():
    # with no ticks or context switches no GP can complete
    assert main(["run", "--scenario", "prove-gp", "--ticks-per-cpu", "0", "--ctx-per-cpu", "0"]) == 1


def test_bad_arguments_exit_one(capsys):
    with pytest.raises(SystemExit) as e:
        main(["run", "--scenario", "bug9"])
    assert e.value.code == 1
    assert main(["run", "--mode", "native", "--memory-model", "tso"]) == 1
    assert main(["replay", "--schedule", "/nonexistent.json"]) == 1


def test_replay_digest_mismatch(tmp_path):
    sched = tmp_path / "s.json"
    assert main(["run", "--scenario", "bug1", "--save-schedule", str(sched)]) == 0
    doc = json.loads(sched.read_text())
    doc["digest"] = "ffff"
    sched.write_text(json.dumps(doc))
    assert main(["replay", "--schedule", str(sched)]) == 1
