"""Judge-backed scoring: metric-integration prompts that fold several metrics into one 1-10 score."""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import TYPE_CHECKING, Any, Mapping

from ..errors import GatewayExhausted, JudgeUnavailable, MissingSlot, TransportError, UnparseableScore

if TYPE_CHECKING:
    from ..gateway import Gateway
    from ..tasks import TaskCase

_SLOT_RE = re.compile(r"\{([A-Za-z_][A-Za-z0-9_]*)\}")


@dataclass(frozen=True)
class JudgeTemplate:
    template_id: str
    text: str
    input_slot: str
    output_slot: str
    golden_slot: str | None = None
    low: int = 1
    high: int = 10

    @property
    def slots(self) -> list[str]:
        seen: list[str] = []
        for name in _SLOT_RE.findall(self.text):
            if name not in seen:
                seen.append(name)
        return seen

    @property
    def metric_slots(self) -> list[str]:
        fixed = {self.input_slot, self.output_slot, self.golden_slot}
        return [s for s in self.slots if s not in fixed]


JUDGE_TEMPLATE = """You are an expert legal AI assistant. Your task is to evaluate the quality of an automatically generated legal judgment document based on the provided context and a set of pre-calculated metrics.

## Case Factual Description (Input)
{INPUT_FACTS}

## Generated Judgment Document (Output)
{GENERATED_JUDGMENT}

## Ground Truth Judgment Document (Reference)
{GOLDEN_JUDGMENT}

## Evaluation Metrics
Below are the calculated metrics comparing the 'Generated Judgment' to the 'Ground Truth'. A score of 1.00 indicates a perfect match for that specific metric, while 0.00 indicates a complete mismatch.

1. Penalty Accuracy (Scores range from 0.00 to 1.00)
time_score: {time_score} (Measures the accuracy of the prison sentence duration.)
amount_score: {amount_score} (Measures the accuracy of the monetary fine amount.)

2. Convicting Accuracy (Scores range from 0.00 to 1.00)
crime_recall: {crime_recall} (The proportion of actual charges that the system correctly identifies.)
crime_precision: {crime_precision} (The proportion of predicted charges that are accurate.)

3. Referencing Accuracy (Scores range from 0.00 to 1.00)
penalcode_index_recall: {penalcode_index_recall} (The proportion of correctly cited ground-truth statutes among all relevant statutes.)
penalcode_index_precision: {penalcode_index_precision} (The proportion of correctly cited statutes among all citations in the generated judgment.)
reasoning_meteor: {reasoning_meteor} (Semantic similarity of the 'Judicial Reasoning' section based on METEOR score.)
reasoning_bert_score: {reasoning_bert_score} (Semantic similarity of the 'Judicial Reasoning' section based on BERTScore.)
judge_meteor: {judge_meteor} (Semantic similarity of the 'Judgment Result' section based on METEOR score.)
judge_bert_score: {judge_bert_score} (Semantic similarity of the 'Judgment Result' section based on BERTScore.)

## Task
Based on a holistic review of the input, output, ground truth, and all the metrics provided above, provide a single integer score from 1 to 10 to represent the overall quality of the generated judgment document.
- 1: Represents extremely poor quality (e.g., completely irrelevant, factually incorrect, nonsensical).
- 10: Represents excellent quality (e.g., legally sound, factually accurate, well-reasoned, and structurally perfect, nearly indistinguishable from the ground truth).Your response should be only a single integer.

## Final Score"""

IDEABENCH_TEMPLATE = """You are an expert scientific researcher and AI assistant. Your task is to evaluate the overall quality of an automatically generated research idea based on the provided context and a set of pre-calculated metrics.

## Background Knowledge (Input)
{INPUT_CONTEXT}

## Generated Research Idea (Output)
{GENERATED_IDEA}

## Ground Truth Research Idea (Reference)
{GOLDEN_IDEA}

## Evaluation Metrics
Below are the calculated metrics comparing the 'Generated Research Idea' to the 'Ground Truth'. Please use them to inform your overall score.

1. Semantic Similarity (bert_score): Measures the semantic similarity between the 'Generated Research Idea' and the 'Ground Truth Research Idea'. Scores range from 0.00 (no similarity) to 1.00 (perfect semantic match).
bert_score: {bert_score}

2. Idea Overlap (llm_rating_score): An LLM-based rating of the idea overlap between the 'Generated Research Idea' and the 'Ground Truth'. Scores range from 1 (minimal overlap) to 10 (perfect overlap).
llm_rating_score: {llm_rating_score}

3. Novelty Insight Score (llm_novelty_ranking_score): Quantifies the novelty of the 'Generated Research Idea' relative to the 'Ground Truth'. This score is derived by ranking the generated idea(s) against the ground truth idea. Scores range from 0.00 to 1.00.
    * A score near **0.00** means the generated idea is significantly less novel than the ground truth.
    * A score near **0.50** suggests comparable novelty.
    * A score near **1.00** means the generated idea is significantly more novel than the ground truth.
llm_novelty_ranking_score: {llm_novelty_ranking_score}

4. Feasibility Insight Score (llm_feasibility_ranking_score): Quantifies the feasibility of the 'Generated Research Idea' relative to the 'Ground Truth', using the same ranking methodology as the Novelty Insight Score. Scores range from 0.00 to 1.00.
    * A score near **0.00** means the generated idea is significantly less feasible than the ground truth.
    * A score near **0.50** suggests comparable feasibility.
    * A score near **1.00** means the generated idea is significantly more feasible than the ground truth.
llm_feasibility_ranking_score: {llm_feasibility_ranking_score}

## Task
Based on a holistic review of the input, output, ground truth, and all the metrics provided above, provide a single integer score from 1 to 10 to represent the overall quality of the generated research idea.
- 1: Represents extremely poor quality (e.g., incoherent, irrelevant, factually incorrect).
- 10: Represents excellent quality (e.g., coherent, insightful, novel, feasible, and well-aligned with the background knowledge, nearly indistinguishable from an idea proposed by a human expert).

Your response should be only a single integer.

## Final Score"""

SCITECHNEWS_TEMPLATE = """You are an expert in science communication and text evaluation. Your task is to evaluate the quality of an automatically generated popular science article based on the provided source document, a reference article, and a set of pre-calculated metrics.

## Source Document (Input)
{INPUT_TEXT}

## Generated Popular Science Article (Output)
{GENERATED_ARTICLE}

## Abstract of Reference Popular Science Article (Golden Passage)
{GOLDEN_PASSAGE}

## Evaluation Metrics
Below are the calculated metrics comparing the 'Generated Article' to the 'Reference Article' or analyzing its intrinsic qualities.

Rouge-L (Score range: 0.00 to 1.00)
Score: {ROUGE_L}
Meaning: Measures the overlap of the longest common word sequence between the generated and reference articles. A higher score indicates better factual consistency and content preservation.

BERTScore-F1 (Score range: 0.00 to 1.00)
Score: {BERTSCORE_F1}
Meaning: Measures the semantic similarity between the generated and reference articles using contextual language models. A higher score indicates that the core meaning is better captured, even with different wording.

CLI (Coleman-Liau Index)
Score: {CLI}
Meaning: Estimates the U.S. grade level required to understand the text. For popular science, a lower score (e.g., 8-12) is generally desirable, indicating better readability and accessibility for a general audience.

FKGL (Flesch-Kincaid Grade Level)
Score: {FKGL}
Meaning: Similar to CLI, this metric also estimates the required U.S. grade level for comprehension. Lower scores suggest the text is easier to read. A score between 8 and 12 means standard readability for a general audience.

DCRS (Dale-Chall Readability Score)
Score: {DCRS}
Meaning: Estimates readability based on a list of 3000 common words. A lower score indicates the text is easier to understand. A score of 4.9 or lower indicates that the passage is very easy to read for fourth-grade students. A score between 9.0 and 9.9 indicates that the passage is at a college readability level.

## Task
Based on a holistic review of the input, output, golden passage, and all the metrics provided above, provide a single integer score from 1 to 10 to represent the overall quality of the generated popular science article. Consider its accuracy, readability, coherence, and faithfulness to the source material.
- 1: Represents extremely poor quality (e.g., completely irrelevant, factually incorrect, nonsensical, or unreadable).
- 10: Represents excellent quality (e.g., accurate, easy to understand for a layperson, well-structured, engaging, and highly faithful to the source, nearly indistinguishable from the reference).

Your response should be only a single integer.

## Final Score"""

NFCATS_TEMPLATE = """###Task: Evaluate the answer of a given question. Directly output an integer between 1 and 5 to indicate the score of this answer:
- 1 means the answer is irrelevant to the question,
- 2 means the answer is related to the question, but does not solve the question,
- 3 means the answer only solves a part of the question,
- 4 means the answer solve majority aspects of the question, but not perfect,
- 5 means the answer is perfect to solve the question

###Question: {Question}

###Answer: {Output}

###Score of the answer:"""

GENERIC_TEMPLATE = """You are an expert evaluator. Score the response to the user's request on a scale from 1 to 10.

## Request
{INPUT}

## Response
{OUTPUT}

## Reference
{REFERENCE}

## Criteria
{CRITERIA}

Your response should be only a single integer.

## Final Score"""

TEMPLATES: dict[str, JudgeTemplate] = {
    "judge": JudgeTemplate("judge", JUDGE_TEMPLATE, "INPUT_FACTS", "GENERATED_JUDGMENT", "GOLDEN_JUDGMENT"),
    "ideabench": JudgeTemplate("ideabench", IDEABENCH_TEMPLATE, "INPUT_CONTEXT", "GENERATED_IDEA", "GOLDEN_IDEA"),
    "scitechnews": JudgeTemplate("scitechnews", SCITECHNEWS_TEMPLATE, "INPUT_TEXT", "GENERATED_ARTICLE",
                                 "GOLDEN_PASSAGE"),
    "nfcats": JudgeTemplate("nfcats", NFCATS_TEMPLATE, "Question", "Output", None, low=1, high=5),
    "generic": JudgeTemplate("generic", GENERIC_TEMPLATE, "INPUT", "OUTPUT", "REFERENCE"),
}


def get_template(template_id: str) -> JudgeTemplate:
    try:
        return TEMPLATES[template_id]
    except KeyError:
        raise MissingSlot(f"judge template {template_id!r} is not registered") from None


def _fmt(value: Any) -> str:
    if isinstance(value, float):
        return f"{value:.2f}"
    if isinstance(value, (list, tuple)):
        return "\n".join(f"- {v}" for v in value)
    return str(value)


def fill_template(template: JudgeTemplate, slots: Mapping[str, Any]) -> str:
    missing = [s for s in template.slots if s not in slots or slots[s] is None]
    if missing:
        raise MissingSlot(f"template {template.template_id!r} missing slot(s): {', '.join(missing)}")
    return _SLOT_RE.sub(lambda m: _fmt(slots[m.group(1)]), template.text)


_INT_RE = re.compile(r"-?\d+")


def parse_judge_integer(text: str, low: int = 1, high: int = 10) -> int:
    m = _INT_RE.search(text or "")
    if m is None:
        raise UnparseableScore(f"no integer in judge output: {text[:80]!r}")
    value = int(m.group())
    if not low <= value <= high:
        raise UnparseableScore(f"judge score {value} outside [{low}, {high}]")
    return value


def case_slots(case: "TaskCase", response: str, template: JudgeTemplate) -> dict[str, Any]:
    slots: dict[str, Any] = dict(case.eval_metadata.get("slots") or {})
    slots.setdefault(template.input_slot, case.query)
    slots[template.output_slot] = response
    if template.golden_slot is not None and case.gold is not None:
        slots.setdefault(template.golden_slot, case.gold)
    if template.template_id == "generic":
        slots.setdefault("REFERENCE", case.eval_metadata.get("evaluation_context") or "(none)")
    if "CRITERIA" in template.slots:
        slots.setdefault("CRITERIA", case.eval_metadata.get("criteria") or "-")
    return slots


def judge_rubric_score(case: "TaskCase", response: str, judge: "Gateway", template_id: str | None = None,
                       extra_slots: Mapping[str, Any] | None = None) -> int:
    from ..gateway import ChatRequest

    template = get_template(template_id or case.eval_metadata.get("judge_template") or "generic")
    slots = case_slots(case, response, template)
    for k, v in (extra_slots or {}).items():
        slots.setdefault(k, v)
    prompt = fill_template(template, slots)
    try:
        out = judge.chat("judge", ChatRequest.user(prompt))
    except (GatewayExhausted, TransportError) as exc:
        raise JudgeUnavailable(str(exc)) from exc
    return parse_judge_integer(out, template.low, template.high)
