"""Synthetic cases and a fully scripted gateway for offline runs and tests.

Every scripted answer is a pure function of the request text, so identical
inputs give identical transcripts regardless of call order or threading.
"""

from __future__ import annotations

import hashlib
import json
import random
import re

from .datasets import get_dataset
from .evaluation.metrics import contains_answer
from .gateway import Gateway, GatewayProfile, Rule, ScriptedBackend, match
from .tasks import CorpusSession, TaskCase

SYNTHETIC_DATASETS = ("locomo", "dialsim-friends", "writingprompts", "lexeval-qa", "nf-cats")

_NAMES = ["Alice", "Bruno", "Chen", "Dana", "Emeka", "Farah", "Goran", "Hana", "Ivo", "Jun"]
_PETS = ["Rex", "Mochi", "Biscuit", "Luna", "Pepper", "Olive", "Ziggy", "Nori", "Maple", "Tofu"]
_CITIES = ["Lisbon", "Osaka", "Quito", "Tallinn", "Accra", "Hobart", "Bergen", "Cusco", "Perth", "Izmir"]
_TOPICS = ["a lighthouse keeper", "a lost map", "a robot gardener", "a winter market", "an old violin"]
_ZH_FACTS = ["合同自签字之日起生效", "借款利息不得超过法定上限", "劳动者享有带薪年休假", "侵权责任由行为人承担"]
_NF_QUESTIONS = ["How do I keep basil alive indoors?", "Why does bread go stale?",
                 "What is the difference between weather and climate?", "How can I learn to touch type?"]


def _digest(text: str) -> int:
    return int.from_bytes(hashlib.sha256(text.encode("utf-8")).digest()[:8], "big")


def _case(case_id: str, dataset: str, query: str, eval_meta: dict, context=(), corpus_id=None) -> TaskCase:
    info = get_dataset(dataset)
    return TaskCase(case_id, dataset, query, eval_meta, tuple(context), info.domain, info.format,
                    info.language, corpus_id)


def synthetic_cases(per_dataset: int = 10, seed: int = 0) -> list[TaskCase]:
    """``per_dataset`` cases for each of the five synthetic datasets."""
    rng = random.Random(seed)
    cases: list[TaskCase] = []

    # locomo: two long conversations, questions answered by a fact inside them
    convs = []
    for k in range(2):
        people = rng.sample(_NAMES, 5)
        sessions = []
        for j, p in enumerate(people):
            pet, city = _PETS[(j + 3 * k) % 10], _CITIES[(j + 5 * k) % 10]
            sessions.append(CorpusSession(f"c{k}s{j}", (
                (p, f"I moved to {city} last spring and adopted a dog named {pet}."),
                ("Friend", f"{city} sounds lovely, how is {pet} settling in?"),
            )))
        convs.append((people, sessions))
    for i in range(per_dataset):
        people, sessions = convs[i % 2]
        j = rng.randrange(len(people))
        if i % 2 == 0:
            q, gold = f"What is the name of {people[j]}'s dog?", _PETS[(j + 3 * (i % 2)) % 10]
        else:
            q, gold = f"Which city did {people[j]} move to?", _CITIES[(j + 5 * (i % 2)) % 10]
        cases.append(_case(f"locomo-{i:03d}", "locomo", q, {"metric": "f1", "gold": gold},
                           sessions, corpus_id=f"locomo-conv{i % 2}"))

    # dialsim: multiple-choice style question over a short script
    script = [CorpusSession(f"ep{e}", tuple((_NAMES[(e + t) % 10], f"I left my {_PETS[(e * 3 + t) % 10]} "
                                             f"scarf in {_CITIES[(e + t) % 10]}.") for t in range(3)))
              for e in range(4)]
    for i in range(per_dataset):
        e, t = i % 4, rng.randrange(3)
        speaker, city = _NAMES[(e + t) % 10], _CITIES[(e + t) % 10]
        cases.append(_case(f"dialsim-{i:03d}", "dialsim-friends", f"Where did {speaker} leave the scarf?",
                           {"metric": "accuracy", "gold": city}, script, corpus_id="dialsim-script"))

    for i in range(per_dataset):
        topic = _TOPICS[i % len(_TOPICS)]
        gold = (f"Once there was {topic}. Every night the town listened, and one morning "
                f"{rng.choice(_NAMES)} found the answer waiting by the sea.")
        cases.append(_case(f"wp-{i:03d}", "writingprompts", f"Write a short story about {topic}.",
                           {"metric": "meteor", "gold": gold, "criteria": ["Creativity", "Coherence"]}))

    for i in range(per_dataset):
        fact = _ZH_FACTS[i % len(_ZH_FACTS)]
        cases.append(_case(f"lexqa-{i:03d}", "lexeval-qa", f"请问以下情形如何处理？第{i + 1}题",
                           {"metric": "rouge_l", "gold": fact}))

    for i in range(per_dataset):
        q = _NF_QUESTIONS[i % len(_NF_QUESTIONS)]
        cases.append(_case(f"nfcats-{i:03d}", "nf-cats", f"{q} (variant {i})",
                           {"metric": "judge", "judge_template": "nfcats"}))
    return cases


_MEMORY_BLOCK = re.compile(r"User Memories:\n\n(.*?)\n\nUser input:", re.S)
_EQUIVALENCE = re.compile(r"Golden answer: (.*?)\nPredicted answer: (.*?)\n\nDoes the predicted", re.S)
_QUERY = re.compile(r"User input:\n\n(.*?)\n\nBased on the memories", re.S)


def _system_reply(payload: dict) -> str:
    """Echo a deterministic slice of what the system was shown."""
    first = payload["messages"][0]["content"]
    turn = sum(1 for m in payload["messages"] if m["role"] == "assistant")
    m = _MEMORY_BLOCK.search(first)
    source = m.group(1) if m else first
    words = source.split()
    if not words:
        return "I do not know."
    q = _QUERY.search(first)
    cues = {w.strip("?.,'s").lower() for w in (q.group(1) if q else first).split() if len(w) > 3}
    hits = [i for i, w in enumerate(words) if w.strip("?.,:").lower() in cues]
    if hits:
        start = hits[turn % len(hits)]
    else:
        start = (_digest(first) + turn) % max(1, len(words) - 8)
    return " ".join(words[start:start + 14])


def _simulator_reply(payload: dict) -> str:
    text = payload["messages"][-1]["content"]
    h = _digest(text)
    if h % 3 == 0:
        return json.dumps({"reasoning": "The answer addresses the request.", "behavior": "end_conversation",
                           "response": None})
    return json.dumps({"reasoning": "Some details are missing.", "behavior": "continue_conversation",
                       "response": f"Could you be more specific? (follow-up {h % 97})"})


def _judge_reply(payload: dict) -> str:
    text = payload["messages"][-1]["content"]
    h = _digest(text)
    eq = _EQUIVALENCE.search(text)
    if eq:
        return "yes" if contains_answer(eq.group(2), eq.group(1)) else "no"
    if "###Score of the answer:" in text:
        return str(1 + h % 5)
    if '"score"' in text:
        return json.dumps({"score": 1 + h % 10})
    return str(1 + h % 10)


def scripted_backend(embedding_dim: int = 8) -> ScriptedBackend:
    return ScriptedBackend(
        rules=[
            Rule(match(role="system"), _system_reply),
            Rule(match(role="simulator"), _simulator_reply),
            Rule(match(role="judge"), _judge_reply),
        ],
        embedding_dim=embedding_dim,
    )


def mock_gateway(parallelism: int = 4, embedding_dim: int = 8, **profile_kw) -> Gateway:
    profile = GatewayProfile.single_model("mock", embedder="mock-embed", parallelism=parallelism, **profile_kw)
    return Gateway(profile, scripted_backend(embedding_dim), sleep=lambda _s: None)
