"""Reference-based text metrics: token F1, exact match, ROUGE-L and a simplified METEOR."""

from __future__ import annotations

import logging
import re
from collections import Counter, defaultdict
from dataclasses import dataclass
from typing import TYPE_CHECKING, Sequence

from ..errors import GatewayExhausted, JudgeUnavailable, TransportError
from ..text import tokenize

if TYPE_CHECKING:
    from ..gateway import Gateway

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MetricInfo:
    name: str
    direction: str = "higher_better"
    low: float | None = 0.0
    high: float | None = 1.0


METRICS: dict[str, MetricInfo] = {
    "f1": MetricInfo("f1"),
    "accuracy": MetricInfo("accuracy"),
    "rouge_l": MetricInfo("rouge_l"),
    "meteor": MetricInfo("meteor"),
    # judge-scored; bounds come from the template's scale
    "judge": MetricInfo("judge", low=None, high=None),
}


@dataclass(frozen=True)
class MetricScore:
    case_id: str
    metric_name: str
    raw_value: float
    direction: str = "higher_better"
    failed: bool = False

    def to_dict(self) -> dict:
        return {
            "case_id": self.case_id,
            "metric": self.metric_name,
            "raw": self.raw_value,
            "direction": self.direction,
            "failed": self.failed,
        }


def token_f1(prediction: str, gold: str) -> float:
    pred, ref = tokenize(prediction), tokenize(gold)
    if not pred and not ref:
        return 1.0
    if not pred or not ref:
        return 0.0
    overlap = sum((Counter(pred) & Counter(ref)).values())
    if overlap == 0:
        return 0.0
    p, r = overlap / len(pred), overlap / len(ref)
    return 2 * p * r / (p + r)


def normalize_answer(text: str) -> str:
    return " ".join(tokenize(text))


def exact_match(prediction: str, gold: str) -> bool:
    return normalize_answer(prediction) == normalize_answer(gold)


def contains_answer(prediction: str, gold: str) -> bool:
    """Exact match, or the normalized gold appears as a contiguous token run in the prediction."""
    pred, ref = tokenize(prediction), tokenize(gold)
    if not ref:
        return not pred
    n = len(ref)
    return any(pred[i:i + n] == ref for i in range(len(pred) - n + 1))


EQUIVALENCE_PROMPT = """You are checking whether a predicted answer matches a golden answer.

Question: {question}
Golden answer: {gold}
Predicted answer: {prediction}

Does the predicted answer convey the same answer as the golden answer? Reply with only "yes" or "no"."""

_YES_RE = re.compile(r"^\W*(yes|true|correct)\b", re.I)


def exact_match_with_fallback(prediction: str, gold: str, judge: "Gateway | None" = None,
                              question: str = "") -> bool:
    if exact_match(prediction, gold):
        return True
    if judge is None:
        raise JudgeUnavailable("exact match failed and no judge is configured")
    from ..gateway import ChatRequest

    prompt = EQUIVALENCE_PROMPT.format(question=question, gold=gold, prediction=prediction)
    try:
        verdict = judge.chat("judge", ChatRequest.user(prompt))
    except (GatewayExhausted, TransportError) as exc:
        raise JudgeUnavailable(str(exc)) from exc
    return bool(_YES_RE.match(verdict.strip()))


def lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    """Bit-parallel LCS length (Allison-Dix / Hyyro), O(len(a) * len(b) / wordsize)."""
    if not a or not b:
        return 0
    masks: dict[str, int] = defaultdict(int)
    for i, tok in enumerate(a):
        masks[tok] |= 1 << i
    full = (1 << len(a)) - 1
    v = full
    for tok in b:
        u = v & masks.get(tok, 0)
        v = ((v + u) | (v - u)) & full
    return len(a) - bin(v).count("1")


def rouge_l(prediction: str, gold: str) -> float:
    pred, ref = tokenize(prediction), tokenize(gold)
    lcs = lcs_length(pred, ref)
    if lcs == 0:
        return 0.0
    p, r = lcs / len(pred), lcs / len(ref)
    return 2 * p * r / (p + r)


def align_unigrams(pred: Sequence[str], ref: Sequence[str]) -> list[tuple[int, int]]:
    """Exact-match unigram alignment, preferring to extend the current chunk."""
    positions: dict[str, list[int]] = defaultdict(list)
    for j, tok in enumerate(ref):
        positions[tok].append(j)
    used: set[int] = set()
    pairs: list[tuple[int, int]] = []
    prev_j = None
    for i, tok in enumerate(pred):
        cands = [j for j in positions.get(tok, ()) if j not in used]
        if not cands:
            prev_j = None
            continue
        j = prev_j + 1 if prev_j is not None and prev_j + 1 in cands else cands[0]
        used.add(j)
        pairs.append((i, j))
        prev_j = j
    return pairs


def count_chunks(pairs: Sequence[tuple[int, int]]) -> int:
    chunks = 0
    prev = None
    for i, j in pairs:
        if prev is None or i != prev[0] + 1 or j != prev[1] + 1:
            chunks += 1
        prev = (i, j)
    return chunks


def meteor_simplified(prediction: str, gold: str, alpha: float = 0.9, beta: float = 3.0,
                      gamma: float = 0.5) -> float:
    """METEOR with exact unigram matching only (no stemming or synonyms).

    F_mean = P*R / (alpha*P + (1-alpha)*R), which is 10PR/(R+9P) at alpha=0.9;
    penalty = gamma * (chunks/matches)**beta; score = F_mean * (1 - penalty).
    """
    pred, ref = tokenize(prediction), tokenize(gold)
    pairs = align_unigrams(pred, ref)
    m = len(pairs)
    if m == 0:
        return 0.0
    p, r = m / len(pred), m / len(ref)
    f_mean = p * r / (alpha * p + (1 - alpha) * r)
    penalty = gamma * (count_chunks(pairs) / m) ** beta
    return f_mean * (1 - penalty)
