"""Simulated user: routing, verdict parsing, satisfaction scoring and the session state machine.

Datasets with a checkable answer (boolean accuracy or token F1) take the
metric path: satisfaction comes straight from the metric and follow-up
utterances come from fixed templates, so no simulator or judge model is
called. Everything else takes the LLM path: a simulator model decides
whether to continue and what to say, and a separate judge call scores
satisfaction.
"""

from __future__ import annotations

import logging
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Literal, Sequence

import numpy as np

from .action_model import ActionPolicy, binary_satisfaction, f1_to_satisfaction, sample_action
from .datasets import get_dataset
from .errors import (
    FeedbenchError,
    GatewayExhausted,
    InvalidBehavior,
    JudgeUnavailable,
    MalformedVerdict,
    MissingResponse,
    SystemFailure,
    TransportError,
    UnparseableScore,
    VerdictError,
)
from .evaluation.metrics import contains_answer, token_f1
from .gateway import ChatRequest
from .prompts import (
    PERSONAS,
    SATISFACTION_SYSTEM,
    SCORE_REINSTRUCTION,
    VERDICT_REINSTRUCTION,
    UserPersona,
    build_profile_prompt,
    build_satisfaction_prompt,
    build_test_prompt,
)
from .session import DialogTurn, FeedbackSession, render_turns
from .text import first_json_object

if TYPE_CHECKING:
    from .gateway import Gateway
    from .memory.systems import MemorySystem
    from .tasks import TaskCase

logger = logging.getLogger(__name__)

Behavior = Literal["continue_conversation", "end_conversation"]
BEHAVIORS = ("continue_conversation", "end_conversation")


@dataclass(frozen=True)
class SimulationPath:
    kind: Literal["metric_direct", "llm_simulated"]
    metric_name: str | None = None


@dataclass(frozen=True)
class SimulatorVerdict:
    reasoning: str
    behavior: Behavior
    response: str | None = None

    def __post_init__(self):
        if self.behavior not in BEHAVIORS:
            raise InvalidBehavior(f"behavior must be one of {BEHAVIORS}, got {self.behavior!r}")
        if self.behavior == "continue_conversation" and not self.response:
            raise MissingResponse("continue_conversation requires a response")
        if self.behavior == "end_conversation" and self.response is not None:
            object.__setattr__(self, "response", None)


def route_case(case: "TaskCase") -> SimulationPath:
    info = get_dataset(case.dataset_id)
    if info.direct_metric is not None:
        return SimulationPath("metric_direct", info.direct_metric)
    return SimulationPath("llm_simulated")


def parse_verdict(raw_model_output: str) -> SimulatorVerdict:
    obj = first_json_object(raw_model_output)
    if obj is None:
        raise MalformedVerdict("no JSON object found in simulator output")
    reasoning = obj.get("reasoning")
    if not isinstance(reasoning, str):
        raise MalformedVerdict("'reasoning' must be a string")
    behavior = obj.get("behavior")
    if behavior not in BEHAVIORS:
        raise InvalidBehavior(f"behavior must be one of {BEHAVIORS}, got {behavior!r}")
    response = obj.get("response")
    if response is not None and not isinstance(response, str):
        raise MalformedVerdict("'response' must be a string or null")
    if behavior == "continue_conversation" and not (response or "").strip():
        raise MissingResponse("continue_conversation without response text")
    return SimulatorVerdict(reasoning, behavior, response if behavior == "continue_conversation" else None)


def parse_score(text: str) -> int:
    obj = first_json_object(text)
    if obj is None or "score" not in obj:
        raise UnparseableScore(f"no score object in judge output: {text[:80]!r}")
    value = obj["score"]
    if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value:
        raise UnparseableScore(f"score is not an integer: {value!r}")
    value = int(value)
    if not 1 <= value <= 10:
        raise UnparseableScore(f"score {value} outside [1, 10]")
    return value


def evaluation_context(case: "TaskCase") -> str:
    v = case.eval_metadata
    if v.get("evaluation_context"):
        return v["evaluation_context"]
    parts = []
    if case.gold is not None:
        gold = case.gold if isinstance(case.gold, str) else "; ".join(map(str, case.gold))
        parts.append(f"Reference answer: {gold}")
    if v.get("criteria"):
        parts.append("Evaluation criteria:\n" + "\n".join(f"- {c}" for c in v["criteria"]))
    return "\n".join(parts) or "(no reference provided)"


def task_description(case: "TaskCase") -> str:
    return case.eval_metadata.get("task_description") or \
        "asking an AI assistant for help with the request in the first message"


def score_satisfaction(history: Sequence[DialogTurn], eval_context: str, judge_client: "Gateway",
                       retries: int = 2) -> int:
    if not any(t.role == "assistant" for t in history):
        raise ValueError("history has no assistant turn to score")
    messages = [
        {"role": "system", "content": SATISFACTION_SYSTEM},
        {"role": "user", "content": build_satisfaction_prompt(render_turns(history), eval_context)},
    ]
    last: UnparseableScore | None = None
    for attempt in range(retries + 1):
        try:
            out = judge_client.chat("judge", ChatRequest(messages=tuple(messages)))
        except (GatewayExhausted, TransportError) as exc:
            raise JudgeUnavailable(str(exc)) from exc
        try:
            return parse_score(out)
        except UnparseableScore as exc:
            last = exc
            messages = messages[:2] + [{"role": "assistant", "content": out},
                                       {"role": "user", "content": SCORE_REINSTRUCTION}]
    raise UnparseableScore(f"judge output unparseable after {retries + 1} attempts: {last}")


@dataclass
class SimulatorConfig:
    max_turns: int = 3
    verdict_retries: int = 1
    score_retries: int = 2
    negative_template: str = ("That doesn't look right to me. Please check the information again and "
                              "answer my original question.")
    positive_template: str = "Thanks, that answers my question."
    correct_threshold: int = 6  # metric-path satisfaction at or above this ends the dialog


@dataclass
class UserSimulator:
    gateway: "Gateway"
    policy: ActionPolicy = field(default_factory=ActionPolicy.default)
    config: SimulatorConfig = field(default_factory=SimulatorConfig)
    personas: dict[str, UserPersona] = field(default_factory=lambda: dict(PERSONAS))

    def persona_for(self, case: "TaskCase") -> UserPersona:
        info = get_dataset(case.dataset_id)
        persona = self.personas.get(info.persona, self.personas["generic"])
        criteria = case.eval_metadata.get("criteria")
        if criteria and info.persona == "generic":
            persona = UserPersona(persona.persona_text, persona.domain_expertise_text, tuple(criteria),
                                  persona.additional_context_text)
        return persona

    def _metric_satisfaction(self, path: SimulationPath, case: "TaskCase", response: str) -> int:
        golds = case.gold if isinstance(case.gold, (list, tuple)) else [case.gold]
        golds = [str(g) for g in golds if g is not None]
        if path.metric_name == "accuracy":
            return binary_satisfaction(any(contains_answer(response, g) for g in golds))
        return f1_to_satisfaction(max((token_f1(response, g) for g in golds), default=0.0))

    def _llm_verdict(self, case: "TaskCase", turns: list[DialogTurn]) -> SimulatorVerdict:
        profile = build_profile_prompt(self.persona_for(case))
        test = build_test_prompt(render_turns(turns), task_description(case), evaluation_context(case),
                                 case.language)
        messages = [{"role": "system", "content": profile}, {"role": "user", "content": test}]
        for attempt in range(self.config.verdict_retries + 1):
            raw = self.gateway.chat("simulator", ChatRequest(messages=tuple(messages)))
            try:
                return parse_verdict(raw)
            except VerdictError:
                if attempt == self.config.verdict_retries:
                    raise
                messages = messages[:2] + [{"role": "assistant", "content": raw},
                                           {"role": "user", "content": VERDICT_REINSTRUCTION}]
        raise AssertionError("unreachable")

    def simulate(self, case: "TaskCase", system: "MemorySystem", seed: int = 0) -> FeedbackSession:
        path = route_case(case)
        rng = np.random.default_rng([seed, zlib.crc32(case.case_id.encode("utf-8"))])
        turns = [DialogTurn("user", case.query, 0)]
        scores: list[int] = []
        actions = []

        def session(termination: str) -> FeedbackSession:
            return FeedbackSession(case.case_id, case.dataset_id, turns, scores, actions, termination)

        try:
            prompt = system.prepare_prompt(case.query, self.gateway, case.context)
        except Exception as exc:
            raise SystemFailure(f"{system.name} failed to build a prompt for {case.case_id}: {exc}") from exc
        messages = [{"role": "user", "content": prompt}]

        while True:
            try:
                response = system.respond(messages, self.gateway)
            except Exception as exc:
                raise SystemFailure(f"{system.name} failed to answer {case.case_id}: {exc}") from exc
            candidate = DialogTurn("assistant", response or " ", len(turns))
            history = turns + [candidate]
            try:
                if path.kind == "metric_direct":
                    score = self._metric_satisfaction(path, case, response)
                else:
                    score = score_satisfaction(history, evaluation_context(case), self.gateway,
                                               self.config.score_retries)
            except (UnparseableScore, JudgeUnavailable) as exc:
                logger.warning("session %s: satisfaction scoring failed: %s", case.case_id, exc)
                return session("error")
            turns.append(candidate)
            scores.append(score)
            actions.append(sample_action(self.policy.probabilities(score, path.metric_name, case.format), rng))

            if len(scores) >= self.config.max_turns:
                return session("turn_limit")

            if path.kind == "metric_direct":
                if score >= self.config.correct_threshold:
                    return session("simulator_end")
                verdict = SimulatorVerdict("metric below threshold", "continue_conversation",
                                           self.config.negative_template)
            else:
                try:
                    verdict = self._llm_verdict(case, turns)
                except (VerdictError, GatewayExhausted, TransportError) as exc:
                    logger.warning("session %s: simulator failed: %s", case.case_id, exc)
                    return session("error")
            if verdict.behavior == "end_conversation":
                return session("simulator_end")
            turns.append(DialogTurn("user", verdict.response, len(turns)))
            messages = messages + [{"role": "assistant", "content": response},
                                   {"role": "user", "content": verdict.response}]

    def simulate_many(self, cases: Sequence["TaskCase"], system: "MemorySystem", seed: int = 0,
                      parallelism: int = 1) -> list[FeedbackSession]:
        if parallelism <= 1:
            return [self.simulate(c, system, seed) for c in cases]
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            return list(pool.map(lambda c: self.simulate(c, system, seed), cases))


def simulate_session(case: "TaskCase", system: "MemorySystem", simulator: UserSimulator,
                     max_turns: int | None = None, seed: int = 0) -> FeedbackSession:
    if max_turns is not None and max_turns != simulator.config.max_turns:
        cfg = SimulatorConfig(**{**simulator.config.__dict__, "max_turns": max_turns})
        simulator = UserSimulator(simulator.gateway, simulator.policy, cfg, simulator.personas)
    return simulator.simulate(case, system, seed)


__all__ = [
    "SimulationPath", "SimulatorVerdict", "UserSimulator", "SimulatorConfig", "UserPersona",
    "route_case", "parse_verdict", "parse_score", "score_satisfaction", "simulate_session",
    "build_profile_prompt", "build_test_prompt", "FeedbenchError",
]
