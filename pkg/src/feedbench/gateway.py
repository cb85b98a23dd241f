"""Single boundary for model calls: chat completions, embeddings and token counting.

All traffic goes through :class:`Gateway`, which binds four roles
(``system``, ``simulator``, ``judge``, ``embedder``) to models, serializes the
sampling parameters, applies the retry policy and the parallelism cap, and
counts calls per role. The wire is an OpenAI-compatible HTTP API; tests and
offline runs swap in :class:`ScriptedBackend`.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import re
import threading
import time
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Protocol, Sequence

import numpy as np

from .errors import (
    AuthFailure,
    ConfigError,
    DimensionMismatch,
    GatewayExhausted,
    MockExhausted,
    TransportError,
)

logger = logging.getLogger(__name__)

ROLES = ("system", "simulator", "judge", "embedder")


@dataclass(frozen=True)
class ChatRequest:
    messages: tuple[dict, ...]
    model: str | None = None
    temperature: float = 0.1
    top_p: float = 0.1
    top_k: int | None = 1
    max_tokens: int = 2048

    def __post_init__(self):
        msgs = tuple({"role": m["role"], "content": m["content"]} for m in self.messages)
        object.__setattr__(self, "messages", msgs)

    @classmethod
    def user(cls, content: str, system: str | None = None, **kw) -> "ChatRequest":
        msgs = []
        if system is not None:
            msgs.append({"role": "system", "content": system})
        msgs.append({"role": "user", "content": content})
        return cls(messages=tuple(msgs), **kw)

    def to_payload(self, model: str, send_top_k: bool = False) -> dict:
        payload = {
            "model": self.model or model,
            "messages": [dict(m) for m in self.messages],
            "temperature": self.temperature,
            "top_p": self.top_p,
            "max_tokens": self.max_tokens,
        }
        if send_top_k and self.top_k is not None:
            payload["top_k"] = self.top_k
        return payload


@dataclass(frozen=True)
class RetryPolicy:
    max_attempts: int = 3
    backoff_base: float = 1.0

    def delay(self, attempt: int) -> float:
        return self.backoff_base * (2 ** attempt)


@dataclass
class GatewayProfile:
    endpoint: str = ""
    roles: dict[str, str] = field(default_factory=dict)
    api_key_env: str = "FEEDBENCH_API_KEY"
    retry: RetryPolicy = field(default_factory=RetryPolicy)
    parallelism: int = 4
    send_top_k: bool = False
    chars_per_token: float = 4.0
    transcript_path: str | None = None
    timeout: float = 120.0

    def __post_init__(self):
        missing = [r for r in ROLES if r not in self.roles]
        if missing:
            raise ConfigError(f"gateway profile leaves roles unbound: {', '.join(missing)}")
        if self.parallelism < 1:
            raise ConfigError("parallelism must be >= 1")

    @classmethod
    def single_model(cls, model: str, embedder: str | None = None, **kw) -> "GatewayProfile":
        roles = {r: model for r in ROLES}
        if embedder:
            roles["embedder"] = embedder
        return cls(roles=roles, **kw)

    @classmethod
    def from_dict(cls, d: dict) -> "GatewayProfile":
        d = dict(d)
        retry = d.pop("retry", None)
        if "model" in d and "roles" not in d:
            model = d.pop("model")
            d["roles"] = {r: model for r in ROLES}
            if "embedder" in d:
                d["roles"]["embedder"] = d.pop("embedder")
        d.pop("kind", None)
        d.pop("embedding_dim", None)
        try:
            prof = cls(**d)
        except TypeError as exc:
            raise ConfigError(f"bad gateway profile: {exc}") from exc
        if retry:
            prof.retry = RetryPolicy(**retry)
        return prof


class Backend(Protocol):
    def complete(self, role: str, payload: dict) -> str: ...

    def embed(self, model: str, texts: list[str]) -> list[list[float]]: ...


class HttpBackend:
    """OpenAI-compatible ``/chat/completions`` and ``/embeddings`` client."""

    def __init__(self, endpoint: str, api_key: str | None = None, timeout: float = 120.0, client=None):
        import httpx

        self._httpx = httpx
        self.endpoint = endpoint.rstrip("/")
        headers = {"Content-Type": "application/json"}
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        self.client = client or httpx.Client(timeout=timeout, headers=headers)

    def _post(self, path: str, payload: dict) -> dict:
        httpx = self._httpx
        try:
            resp = self.client.post(f"{self.endpoint}{path}", json=payload)
        except httpx.TransportError as exc:
            raise TransportError(str(exc)) from exc
        if resp.status_code in (401, 403):
            raise AuthFailure(f"endpoint rejected credentials ({resp.status_code})")
        if resp.status_code == 429 or resp.status_code >= 500:
            raise TransportError(f"HTTP {resp.status_code}")
        if resp.status_code >= 400:
            raise GatewayExhausted(f"HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            return resp.json()
        except ValueError as exc:
            raise TransportError("response body is not JSON") from exc

    def complete(self, role: str, payload: dict) -> str:
        body = self._post("/chat/completions", payload)
        try:
            return body["choices"][0]["message"]["content"] or ""
        except (KeyError, IndexError, TypeError) as exc:
            raise TransportError(f"unexpected completion shape: {exc}") from exc

    def embed(self, model: str, texts: list[str]) -> list[list[float]]:
        body = self._post("/embeddings", {"model": model, "input": texts})
        data = sorted(body["data"], key=lambda d: d.get("index", 0))
        return [d["embedding"] for d in data]


Matcher = Callable[[str, dict], bool]
Responder = Callable[[dict], str]


@dataclass
class Rule:
    matcher: Matcher
    response: str | Responder | BaseException
    times: int | None = None  # None = unlimited
    used: int = 0

    def available(self) -> bool:
        return self.times is None or self.used < self.times


def match(role: str | None = None, contains: str | None = None, pattern: str | None = None) -> Matcher:
    """Build a matcher on role and/or the last message's content."""
    rx = re.compile(pattern, re.S) if pattern else None

    def _m(r: str, payload: dict) -> bool:
        if role is not None and r != role:
            return False
        last = payload["messages"][-1]["content"] if payload.get("messages") else ""
        if contains is not None and contains not in last:
            return False
        if rx is not None and not rx.search(last):
            return False
        return True

    return _m


def hashed_embedding(text: str, dim: int = 8) -> list[float]:
    """Deterministic bag-of-words embedding: each token hashes into one of ``dim`` buckets."""
    from .text import index_terms

    vec = np.zeros(dim)
    for term in index_terms(text):
        h = int.from_bytes(hashlib.sha256(term.encode("utf-8")).digest()[:8], "little")
        vec[h % dim] += 1.0 if (h >> 63) == 0 else -1.0
    if not vec.any():
        h = hashlib.sha256(text.encode("utf-8")).digest()
        vec[h[0] % dim] = 1.0
    return (vec / np.linalg.norm(vec)).tolist()


class ScriptedBackend:
    """Deterministic stand-in for a model server.

    Rules are tried in order; the first available rule whose matcher accepts
    the call answers it. A response may be a string, a callable on the payload,
    or an exception instance to raise. With no matching rule the ``default``
    answers; without a default the call raises :class:`MockExhausted`.
    """

    def __init__(self, rules: Sequence[Rule] = (), default: str | Responder | None = None,
                 embedding_dim: int = 8, embedder: Callable[[str], list[float]] | None = None):
        self.rules = list(rules)
        self.default = default
        self.embedding_dim = embedding_dim
        self.embedder = embedder
        self.calls: list[tuple[str, dict]] = []
        self._lock = threading.Lock()

    def add(self, matcher: Matcher, response, times: int | None = None) -> "ScriptedBackend":
        self.rules.append(Rule(matcher, response, times))
        return self

    def complete(self, role: str, payload: dict) -> str:
        with self._lock:
            self.calls.append((role, payload))
            for rule in self.rules:
                if rule.available() and rule.matcher(role, payload):
                    rule.used += 1
                    resp = rule.response
                    break
            else:
                if self.default is None:
                    raise MockExhausted(f"no scripted response for role={role!r}")
                resp = self.default
        if isinstance(resp, BaseException):
            raise resp
        if callable(resp):
            return resp(payload)
        return resp

    def embed(self, model: str, texts: list[str]) -> list[list[float]]:
        with self._lock:
            self.calls.append(("embedder", {"model": model, "input": list(texts)}))
        fn = self.embedder or (lambda t: hashed_embedding(t, self.embedding_dim))
        return [fn(t) for t in texts]


class Gateway:
    def __init__(self, profile: GatewayProfile, backend: Backend | None = None,
                 tokenizer: Callable[[str], Sequence[Any]] | None = None,
                 sleep: Callable[[float], None] = time.sleep):
        self.profile = profile
        if backend is None:
            if not profile.endpoint:
                raise ConfigError("gateway profile has no endpoint and no backend was given")
            backend = HttpBackend(profile.endpoint, os.environ.get(profile.api_key_env), profile.timeout)
        self.backend = backend
        self.tokenizer = tokenizer
        self._sleep = sleep
        self._slots = threading.BoundedSemaphore(profile.parallelism)
        self._count_lock = threading.Lock()
        self.call_counts: Counter[str] = Counter()
        self._transcript_lock = threading.Lock()

    def model_for(self, role: str) -> str:
        try:
            return self.profile.roles[role]
        except KeyError:
            raise ConfigError(f"role {role!r} is not bound") from None

    def _with_retry(self, fn: Callable[[], Any], what: str):
        policy = self.profile.retry
        last: Exception | None = None
        for attempt in range(policy.max_attempts):
            try:
                with self._slots:
                    return fn()
            except TransportError as exc:
                last = exc
                logger.warning("%s failed (attempt %d/%d): %s", what, attempt + 1, policy.max_attempts, exc)
                if attempt + 1 < policy.max_attempts:
                    self._sleep(policy.delay(attempt))
        raise GatewayExhausted(f"{what} failed after {policy.max_attempts} attempts: {last}")

    def chat(self, role: str, request: ChatRequest) -> str:
        if role not in ROLES or role == "embedder":
            raise ConfigError(f"role {role!r} cannot serve chat requests")
        payload = request.to_payload(self.model_for(role), self.profile.send_top_k)
        with self._count_lock:
            self.call_counts[role] += 1
        text = self._with_retry(lambda: self.backend.complete(role, payload), f"chat[{role}]")
        self._log({"role": role, "request": payload, "response": text})
        return text

    def embed(self, texts: Sequence[str]) -> list[np.ndarray]:
        texts = list(texts)
        if not texts:
            return []
        model = self.model_for("embedder")
        with self._count_lock:
            self.call_counts["embedder"] += 1
        raw = self._with_retry(lambda: self.backend.embed(model, texts), "embed")
        if len(raw) != len(texts):
            raise DimensionMismatch(f"asked for {len(texts)} embeddings, got {len(raw)}")
        dims = {len(v) for v in raw}
        if len(dims) != 1:
            raise DimensionMismatch(f"embedding dimensions disagree: {sorted(dims)}")
        return [np.asarray(v, dtype=np.float64) for v in raw]

    def count_tokens(self, text: str) -> int:
        if not text:
            return 0
        if self.tokenizer is not None:
            return len(self.tokenizer(text))
        return math.ceil(len(text) / self.profile.chars_per_token)

    def _log(self, record: dict) -> None:
        path = self.profile.transcript_path
        if not path:
            return
        with self._transcript_lock, Path(path).open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")
