"""Per-case scoring: dispatch a response to the metric named in the case's evaluation metadata."""

from __future__ import annotations

from typing import TYPE_CHECKING

from .judge import get_template, judge_rubric_score
from .metrics import METRICS, MetricScore, exact_match_with_fallback, meteor_simplified, rouge_l, token_f1

if TYPE_CHECKING:
    from ..gateway import Gateway
    from ..tasks import TaskCase


def _golds(case: "TaskCase") -> list[str]:
    gold = case.gold
    if gold is None:
        return [""]
    if isinstance(gold, (list, tuple)):
        return [str(g) for g in gold] or [""]
    return [str(gold)]


def score_case(case: "TaskCase", response: str, judge: "Gateway | None" = None) -> MetricScore:
    metric = case.metric
    if metric == "f1":
        raw = max(token_f1(response, g) for g in _golds(case))
    elif metric == "accuracy":
        raw = float(any(exact_match_with_fallback(response, g, judge, case.query) for g in _golds(case)))
    elif metric == "rouge_l":
        raw = max(rouge_l(response, g) for g in _golds(case))
    elif metric == "meteor":
        raw = max(meteor_simplified(response, g) for g in _golds(case))
    elif metric == "judge":
        template_id = case.eval_metadata.get("judge_template", "generic")
        template = get_template(template_id)
        extra = {}
        if "ROUGE_L" in template.slots and case.gold is not None:
            extra["ROUGE_L"] = rouge_l(response, _golds(case)[0])
        raw = float(judge_rubric_score(case, response, judge, template_id, extra))
    else:  # guarded by TaskCase validation
        raise ValueError(f"unknown metric {metric!r}")
    return MetricScore(case.case_id, metric, raw, METRICS[metric].direction)


def metric_floor(case: "TaskCase") -> float:
    """Lowest attainable raw value for the case's metric."""
    if case.metric == "judge":
        return float(get_template(case.eval_metadata.get("judge_template", "generic")).low)
    return METRICS[case.metric].low or 0.0
