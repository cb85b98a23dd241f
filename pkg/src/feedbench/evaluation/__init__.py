from .aggregate import (
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
from .judge import TEMPLATES, fill_template, judge_rubric_score, parse_judge_integer
from .metrics import (
    METRICS,
    MetricScore,
    exact_match,
    exact_match_with_fallback,
    lcs_length,
    meteor_simplified,
    rouge_l,
    token_f1,
)
from .scoring import metric_floor, score_case
