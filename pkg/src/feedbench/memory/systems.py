"""Memory-system contract and the retrieval baselines.

``VanillaSystem`` answers with the backbone alone (optionally with the first
corpus sessions that fit). ``RetrievalSystem`` stores corpus text and
feedback dialogs in one index, either one entry per message or one entry per
dialog, and retrieves with BM25 or embedding cosine similarity.
"""

from __future__ import annotations

import threading
from abc import ABC, abstractmethod
from contextlib import contextmanager
from dataclasses import dataclass
from typing import TYPE_CHECKING, Sequence

from ..errors import BudgetUnsatisfiable, ConfigError
from ..gateway import ChatRequest
from ..session import FeedbackSession
from ..tasks import CorpusSession
from .bm25 import BM25Index
from .embedding import EmbeddingIndex
from .entries import Granularity, MemoryEntry, corpus_entries, session_entries

if TYPE_CHECKING:
    from ..gateway import Gateway

PROMPT_TEMPLATE = """User Memories:

{memories_str}

User input:

{query}

Based on the memories provided, respond naturally and appropriately to the user's input above."""

DEFAULT_BUDGET = 30720  # 32k context minus 2048 generation tokens


@dataclass(frozen=True)
class RetrievalConfig:
    top_k: int = 5
    context_token_budget: int = DEFAULT_BUDGET
    granularity: Granularity = "session"
    scorer: str = "lexical"

    def __post_init__(self):
        if self.top_k < 1:
            raise ConfigError("top_k must be >= 1")
        if self.context_token_budget <= 0:
            raise ConfigError("context_token_budget must be positive")
        if self.granularity not in ("message", "session"):
            raise ConfigError(f"unknown granularity {self.granularity!r}")
        if self.scorer not in ("lexical", "embedding"):
            raise ConfigError(f"unknown scorer {self.scorer!r}")


class RWLock:
    """Many readers or one writer."""

    def __init__(self):
        self._cond = threading.Condition()
        self._readers = 0
        self._writer = False

    @contextmanager
    def read(self):
        with self._cond:
            while self._writer:
                self._cond.wait()
            self._readers += 1
        try:
            yield
        finally:
            with self._cond:
                self._readers -= 1
                self._cond.notify_all()

    @contextmanager
    def write(self):
        with self._cond:
            while self._writer or self._readers:
                self._cond.wait()
            self._writer = True
        try:
            yield
        finally:
            with self._cond:
                self._writer = False
                self._cond.notify_all()


def assemble_prompt(memories: Sequence[MemoryEntry], query: str) -> str:
    return PROMPT_TEMPLATE.format(memories_str="\n\n".join(m.text for m in memories), query=query)


class MemorySystem(ABC):
    name: str = "abstract"
    uses_memory: bool = True

    @abstractmethod
    def ingest_corpus(self, sessions: Sequence[CorpusSession], corpus_key: str = "corpus") -> int: ...

    @abstractmethod
    def ingest_sessions(self, sessions: Sequence[FeedbackSession]) -> int: ...

    @abstractmethod
    def entry_count(self) -> int: ...

    @abstractmethod
    def prepare_prompt(self, query: str, gateway: "Gateway", context: Sequence[CorpusSession] = ()) -> str:
        """First-turn prompt for ``query``; memory is consulted here and only here."""

    def respond(self, messages: Sequence[dict], gateway: "Gateway") -> str:
        return gateway.chat("system", ChatRequest(messages=tuple(messages)))

    def answer(self, query: str, gateway: "Gateway", context: Sequence[CorpusSession] = ()) -> str:
        prompt = self.prepare_prompt(query, gateway, context)
        return self.respond([{"role": "user", "content": prompt}], gateway)


class VanillaSystem(MemorySystem):
    name = "vanilla"
    uses_memory = False

    def __init__(self, context_token_budget: int = DEFAULT_BUDGET):
        self.budget = context_token_budget

    def ingest_corpus(self, sessions, corpus_key="corpus") -> int:
        return 0

    def ingest_sessions(self, sessions) -> int:
        return 0

    def entry_count(self) -> int:
        return 0

    def prepare_prompt(self, query, gateway, context=()) -> str:
        return vanilla_prompt(query, context, gateway, self.budget)


def vanilla_prompt(query: str, context: Sequence[CorpusSession], gateway: "Gateway", budget: int) -> str:
    """Prepend the longest prefix of corpus sessions that keeps the prompt within budget."""
    if gateway.count_tokens(query) > budget:
        raise BudgetUnsatisfiable(f"query alone needs {gateway.count_tokens(query)} tokens > budget {budget}")
    prompt = query
    parts: list[str] = []
    for sess in context:
        candidate = "\n\n".join(parts + [sess.render(), query])
        if gateway.count_tokens(candidate) > budget:
            break
        parts.append(sess.render())
        prompt = candidate
    return prompt


def vanilla_answer(query: str, context: Sequence[CorpusSession], gateway: "Gateway", budget: int = DEFAULT_BUDGET) -> str:
    prompt = vanilla_prompt(query, context, gateway, budget)
    return gateway.chat("system", ChatRequest.user(prompt))


class RetrievalSystem(MemorySystem):
    def __init__(self, config: RetrievalConfig = RetrievalConfig(), gateway: "Gateway | None" = None,
                 name: str | None = None):
        self.config = config
        self.entries: list[MemoryEntry] = []
        if config.scorer == "lexical":
            self.index: BM25Index | EmbeddingIndex = BM25Index()
        else:
            self.index = EmbeddingIndex(gateway)
        self._lock = RWLock()
        self._ingested_sessions = 0
        prefix = "bm25" if config.scorer == "lexical" else "embed"
        self.name = name or f"{prefix}-{config.granularity[0]}"

    def bind_gateway(self, gateway: "Gateway") -> None:
        if isinstance(self.index, EmbeddingIndex) and self.index.gateway is None:
            self.index.gateway = gateway

    def _add(self, entries: list[MemoryEntry]) -> int:
        with self._lock.write():
            if isinstance(self.index, BM25Index):
                for e in entries:
                    self.index.add(e.index_key)
            else:
                self.index.add_many([e.index_key for e in entries])
            self.entries.extend(entries)
        return len(entries)

    def ingest_corpus(self, sessions, corpus_key="corpus") -> int:
        if not sessions:
            return 0
        return self._add(corpus_entries(sessions, self.config.granularity, corpus_key))

    def ingest_sessions(self, sessions) -> int:
        sessions = list(sessions)
        entries = session_entries(sessions, self.config.granularity, f"log{self._ingested_sessions}")
        self._ingested_sessions += len(sessions)
        return self._add(entries)

    def entry_count(self) -> int:
        return len(self.entries)

    def retrieve(self, query: str, top_k: int | None = None) -> list[MemoryEntry]:
        k = top_k or self.config.top_k
        with self._lock.read():
            if not self.entries:
                return []
            return [self.entries[i] for i, _ in self.index.search(query, k)]

    def prepare_prompt(self, query, gateway, context=()) -> str:
        self.bind_gateway(gateway)
        memories = self.retrieve(query)
        k = fitting_count(memories, query, gateway, self.config.context_token_budget)
        return assemble_prompt(memories[:k], query)


def fitting_count(memories: Sequence[MemoryEntry], query: str, gateway: "Gateway", budget: int) -> int:
    """Largest k <= len(memories) whose assembled prompt fits the token budget."""
    for k in range(len(memories), -1, -1):
        if gateway.count_tokens(assemble_prompt(memories[:k], query)) <= budget:
            return k
    raise BudgetUnsatisfiable(f"prompt without memories exceeds budget {budget}")


# functional surface over the classes above

def ingest_corpus(system: MemorySystem, case_context: Sequence[CorpusSession], corpus_key: str = "corpus") -> int:
    return system.ingest_corpus(case_context, corpus_key)


def ingest_sessions(system: MemorySystem, sessions: Sequence[FeedbackSession]) -> int:
    return system.ingest_sessions(sessions)


def retrieve(system: RetrievalSystem, query: str, config: RetrievalConfig | None = None) -> list[MemoryEntry]:
    return system.retrieve(query, (config or system.config).top_k)


def answer_with_backoff(system: RetrievalSystem, query: str, config: RetrievalConfig | None,
                        gateway: "Gateway") -> str:
    config = config or system.config
    system.bind_gateway(gateway)
    memories = system.retrieve(query, config.top_k)
    k = fitting_count(memories, query, gateway, config.context_token_budget)
    return gateway.chat("system", ChatRequest.user(assemble_prompt(memories[:k], query)))


BASELINES = {
    "vanilla": None,
    "bm25-m": RetrievalConfig(granularity="message", scorer="lexical"),
    "bm25-s": RetrievalConfig(granularity="session", scorer="lexical"),
    "embed-m": RetrievalConfig(granularity="message", scorer="embedding"),
    "embed-s": RetrievalConfig(granularity="session", scorer="embedding"),
}


def make_system(name: str, gateway: "Gateway | None" = None, top_k: int = 5,
                context_token_budget: int = DEFAULT_BUDGET) -> MemorySystem:
    key = name.lower()
    if key.startswith("external:"):
        from .external import ExternalMemorySystem

        return ExternalMemorySystem(name[len("external:"):].split())
    if key not in BASELINES:
        raise ConfigError(f"unknown memory system {name!r}; choose from {sorted(BASELINES)} or external:<cmd>")
    if key == "vanilla":
        return VanillaSystem(context_token_budget)
    base = BASELINES[key]
    cfg = RetrievalConfig(top_k, context_token_budget, base.granularity, base.scorer)
    return RetrievalSystem(cfg, gateway, name=key)
