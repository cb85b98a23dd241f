from __future__ import annotations

import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from feedbench.errors import IncompleteCoverage, MissingAnchor
from feedbench.evaluation.aggregate import (
    AggregateReport,
    Anchor,
    NormalizationAnchors,
    aggregate,
    build_report,
    min_max_normalize,
    render_table,
    z_score,
    z_scores_across_systems,
)
from feedbench.evaluation.metrics import MetricScore
from feedbench.tasks import TaskCase


def tc(cid, dataset="locomo"):
    return TaskCase(cid, dataset, "q", {"metric": "f1"})


def test_min_max_hand_value():
    assert min_max_normalize([0.3], Anchor(0.2, 0.6)) == [pytest.approx(0.25)]
    assert min_max_normalize([0.3], Anchor(0.2, 0.6), "lower_better") == [pytest.approx(0.75)]
    assert min_max_normalize([0.0, 0.9], Anchor(0.2, 0.6)) == [0.0, 1.0]  # clipped
    assert min_max_normalize([5.0], Anchor(3.0, 3.0)) == [0.5]
    with pytest.raises(ValueError):
        Anchor(1.0, 0.0)


@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=20))
def test_min_max_in_unit_interval(xs):
    anchor = Anchor(min(xs), max(xs))
    assert all(0.0 <= v <= 1.0 for v in min_max_normalize(xs, anchor))


def test_z_score_population():
    z = z_score([1.0, 2.0, 3.0])
    sd = math.sqrt(2 / 3)
    assert z == [pytest.approx(-1 / sd), 0.0, pytest.approx(1 / sd)]
    assert z_score([4.0, 4.0]) == [0.0, 0.0]
    assert z_score([7.0]) == [0.0]


def test_aggregate_mean_over_cases():
    cases = [tc("a"), tc("b", "nf-cats")]
    overall, per = aggregate({"a": 0.4, "b": 0.6}, cases)
    assert overall == pytest.approx(0.5) and per == {"locomo": 0.4, "nf-cats": 0.6}
    with pytest.raises(IncompleteCoverage):
        aggregate({"a": 0.4}, cases)


def test_aggregate_weights_cases_not_datasets():
    cases = [tc("a"), tc("b"), tc("c"), tc("d", "nf-cats")]
    overall, per = aggregate({"a": 1.0, "b": 1.0, "c": 1.0, "d": 0.0}, cases)
    assert overall == pytest.approx(0.75) and per["nf-cats"] == 0.0


def test_anchor_file_stability(tmp_path):
    anchors = NormalizationAnchors.from_scores({"locomo": [0.2, 0.6, 0.4], "nf-cats": [3, 5]})
    h1 = anchors.save(tmp_path / "a.json")
    loaded = NormalizationAnchors.load(tmp_path / "a.json")
    assert loaded.save(tmp_path / "b.json") == h1
    assert (tmp_path / "a.json").read_text() == (tmp_path / "b.json").read_text()
    assert loaded["locomo"] == Anchor(0.2, 0.6)
    with pytest.raises(MissingAnchor):
        loaded["writingprompts"]


def test_build_report_and_failures():
    cases = [tc("a"), tc("b"), tc("c", "nf-cats")]
    scores = {"a": MetricScore("a", "f1", 0.3), "b": MetricScore("b", "f1", 0.0, failed=True),
              "c": MetricScore("c", "judge", 4.0)}
    anchors = NormalizationAnchors({"locomo": Anchor(0.2, 0.6), "nf-cats": Anchor(1.0, 5.0)})
    r = build_report("bm25-s", "p", cases, scores, anchors)
    assert r.overall_minmax == pytest.approx((0.25 + 0.0 + 0.75) / 3)
    assert r.dataset_raw_mean["locomo"] == pytest.approx(0.15)
    assert r.failed_cases == ["b"] and r.n_cases == 3
    assert AggregateReport.from_dict(r.to_dict()) == r
    assert r.digest() == AggregateReport.from_dict(r.to_dict()).digest()
    with pytest.raises(IncompleteCoverage):
        build_report("x", "p", cases, {"a": scores["a"]}, anchors)


def test_z_scores_across_systems():
    dataset_of = {"a": "locomo", "b": "locomo"}
    scores = {"s1": {"a": MetricScore("a", "f1", 1.0), "b": MetricScore("b", "f1", 2.0)},
              "s2": {"a": MetricScore("a", "f1", 3.0), "b": MetricScore("b", "f1", 2.0)}}
    z = z_scores_across_systems(scores, dataset_of)
    pooled = z_score([1.0, 2.0, 3.0, 2.0])
    assert [z["s1"]["a"], z["s1"]["b"], z["s2"]["a"], z["s2"]["b"]] == pooled


def test_render_table():
    reports = [
        AggregateReport("vanilla", "open", 2, {}, {}, 0.25),
        AggregateReport("bm25-s", "open", 2, {}, {}, 0.5),
        AggregateReport("bm25-s", "legal", 2, {}, {}, 0.125),
    ]
    lines = render_table(reports).splitlines()
    assert lines[0].split("|")[0].strip() == "LLMsys"
    assert [c.strip() for c in lines[0].split("|")[1:]] == ["open", "legal"]
    assert [c.strip() for c in lines[2].split("|")] == ["vanilla", "0.2500", "-"]
    assert [c.strip() for c in lines[3].split("|")] == ["bm25-s", "0.5000", "0.1250"]
