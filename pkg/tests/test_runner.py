from __future__ import annotations

import json

import pytest

from feedbench.errors import ConfigError, GatewayExhausted, TestLeak, TransportError
from feedbench.gateway import Gateway, GatewayProfile, Rule, ScriptedBackend, match
from feedbench.memory.systems import RetrievalSystem, RetrievalConfig
from feedbench.runner import (
    Experiment,
    ExperimentSpec,
    InvariantViolation,
    TimingRecord,
    generate_log,
    run,
    run_off_policy,
    run_on_policy,
    run_stepwise_off_policy,
    time_section,
    timing_summary,
)
from feedbench.synthetic import SYNTHETIC_DATASETS, mock_gateway, synthetic_cases
from feedbench.tasks import FeedbackLog

CASES = synthetic_cases(per_dataset=12, seed=1)


def spec(**kw):
    base = dict(protocol="off_policy", partition="synthetic", datasets=SYNTHETIC_DATASETS, cap=10, system="bm25-s")
    base.update(kw)
    return ExperimentSpec(**base)


def test_spec_validation_and_yaml(tmp_path):
    with pytest.raises(ConfigError):
        ExperimentSpec(protocol="sideways")
    with pytest.raises(ConfigError):
        ExperimentSpec(batch_size=0)
    with pytest.raises(ConfigError):
        ExperimentSpec(eval_subsample=3)
    with pytest.raises(ConfigError):
        ExperimentSpec.from_dict({"protocol": "off_policy", "colour": "red"})
    (tmp_path / "s.yaml").write_text("protocol: on_policy\nbatch_size: 7\ncases_path: data/c.jsonl\n")
    s = ExperimentSpec.load(tmp_path / "s.yaml")
    assert s.protocol == "on_policy" and s.batch_size == 7
    assert s.cases_path == str((tmp_path / "data" / "c.jsonl").resolve())
    assert ExperimentSpec.from_dict(s.to_dict()) == s


def test_partition_shape():
    exp = Experiment(spec(), CASES, mock_gateway())
    for d in SYNTHETIC_DATASETS:
        m = exp.split.manifest["datasets"][d]
        assert (m["sampled"], len(m["train"]), len(m["test"])) == (10, 8, 2)


def test_off_policy_replay_hash():
    a = run_off_policy(spec(), CASES, mock_gateway())
    b = run_off_policy(spec(), CASES, mock_gateway())
    assert a.manifest.report_hash == b.manifest.report_hash
    assert a.manifest.log_hash == b.manifest.log_hash and a.manifest.log_hash is not None
    assert len(a.steps) == 1 and a.report.n_cases == 10
    assert 0.0 <= a.report.overall_minmax <= 1.0


def test_single_batch_stepwise_equals_off_policy():
    log = generate_log(spec(), CASES, mock_gateway())
    off = run_off_policy(spec(), CASES, mock_gateway(), log=log)
    step = run_stepwise_off_policy(spec(protocol="stepwise_off_policy", batch_size=1000), CASES, mock_gateway(),
                                   log=log)
    assert len(step.steps) == 1
    assert step.manifest.report_hash == off.manifest.report_hash


def test_stepwise_batches_and_monotone_ingestion():
    log = generate_log(spec(), CASES, mock_gateway())
    res = run_stepwise_off_policy(spec(protocol="stepwise_off_policy", batch_size=15), CASES, mock_gateway(), log=log)
    assert [s.step for s in res.steps] == [1, 2, 3]
    counts = [s.entry_count for s in res.steps]
    assert counts == sorted(counts)
    ok = sum(1 for s in log.all() if s.ok)
    assert res.steps[-1].ingested_sessions == ok


def test_empty_log_equals_corpus_only_baseline():
    empty = FeedbackLog()
    step = run_stepwise_off_policy(spec(protocol="stepwise_off_policy"), CASES, mock_gateway(), log=empty)
    off = run_off_policy(spec(), CASES, mock_gateway(), log=empty)
    assert [s.step for s in step.steps] == [0]
    assert step.manifest.report_hash == off.manifest.report_hash
    assert step.manifest.log_hash is None


def test_leak_aborts():
    exp = Experiment(spec(), CASES, mock_gateway())
    log = generate_log(spec(), CASES, mock_gateway())
    leaked = next(iter(log.all()))
    bad = FeedbackLog()
    bad.add(type(leaked).from_dict({**leaked.to_dict(), "case_id": exp.split.test[0].case_id}))
    with pytest.raises(TestLeak):
        run_off_policy(spec(), CASES, mock_gateway(), log=bad)


def test_on_policy_steps_and_subsample():
    res = run_on_policy(spec(protocol="on_policy", batch_size=15), CASES, mock_gateway())
    assert [s.step for s in res.steps] == [1, 2, 3]
    again = run_on_policy(spec(protocol="on_policy", batch_size=15), CASES, mock_gateway())
    assert again.manifest.report_hash == res.manifest.report_hash
    limited = run(spec(protocol="on_policy", batch_size=15, steps=2, eval_subsample=4), CASES, mock_gateway())
    assert [s.report.n_cases for s in limited.steps] == [4, 10]
    assert [s.subsampled for s in limited.steps] == [True, False]


class FlakySystem(RetrievalSystem):
    """Raises for one query to exercise failure isolation."""

    def __init__(self, bad_query):
        super().__init__(RetrievalConfig(), name="flaky")
        self.bad_query = bad_query

    def prepare_prompt(self, query, gateway, context=()):
        if query == self.bad_query:
            raise RuntimeError("injected fault")
        return super().prepare_prompt(query, gateway, context)


def test_failure_isolation():
    exp = Experiment(spec(), CASES, mock_gateway())
    victim = exp.split.test[0]
    res = run_off_policy(spec(), CASES, mock_gateway(), system=FlakySystem(victim.query), log=FeedbackLog())
    assert res.report.failed_cases == [victim.case_id]
    assert res.report.n_cases == 10
    failed = res.steps[0].scores[victim.case_id]
    assert failed.failed and failed.raw_value == res.anchors[victim.dataset_id].min


class LeakySystem(RetrievalSystem):
    """Writes to memory while answering, which the harness must detect."""

    def prepare_prompt(self, query, gateway, context=()):
        self._add(self.entries[:1] or [])
        return super().prepare_prompt(query, gateway, context)


def test_memory_frozen_invariant():
    with pytest.raises(InvariantViolation):
        run_off_policy(spec(), CASES, mock_gateway(), system=LeakySystem(RetrievalConfig()))


def test_all_gateway_failures_abort():
    dead = Gateway(GatewayProfile.single_model("m"), ScriptedBackend([Rule(match(), TransportError("down"))]),
                   sleep=lambda s: None)
    with pytest.raises(GatewayExhausted):
        run_off_policy(spec(), CASES, dead, log=FeedbackLog())


def test_vanilla_memory_time_absent():
    res = run_off_policy(spec(system="vanilla"), CASES, mock_gateway())
    assert res.timings and all(t.memory_time is None for t in res.timings)
    assert all(t.predict_time is not None and t.predict_time >= 0 for t in res.timings
               if t.case_id in {c.case_id for c in res.split.test})
    assert res.manifest.timing["memory_time"] is None
    bm = run_off_policy(spec(), CASES, mock_gateway())
    assert all(t.memory_time is not None and t.memory_time >= 0 for t in bm.timings)


def test_output_files(tmp_path):
    out = tmp_path / "run"
    anchors = tmp_path / "anchors.json"
    res = run_off_policy(spec(output_dir=str(out), anchors_path=str(anchors)), CASES, mock_gateway())
    for name in ["partition.json", "anchors.json", "scores.jsonl", "report.json", "reports.jsonl",
                 "timings.jsonl", "manifest.json", "feedback_log.jsonl"]:
        assert (out / name).exists(), name
    assert anchors.exists()
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["report_hash"] == res.manifest.report_hash
    # a second run reuses the persisted anchors and reproduces the report
    again = run_off_policy(spec(anchors_path=str(anchors)), CASES, mock_gateway())
    assert again.manifest.anchor_hash == res.manifest.anchor_hash
    assert again.manifest.report_hash == res.manifest.report_hash


def test_timing_helpers():
    out, t = time_section("predict", lambda: 42)
    assert out == 42 and t["predict"] >= 0
    summary = timing_summary([TimingRecord("a", None, 1.0), TimingRecord("b", None, 3.0)])
    assert summary["memory_time"] is None and summary["predict_time"] == 2.0
    with pytest.raises(ValueError):
        TimingRecord("a", -1.0)
