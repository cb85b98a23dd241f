"""Task cases, seeded partitions with 4:1 splits, training batches and feedback logs."""

from __future__ import annotations

import hashlib
import json
import math
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

import jsonschema

from .errors import EmptyDataset, SchemaViolation, TestLeak, UnknownCase
from .evaluation.metrics import METRICS
from .session import FeedbackSession, read_sessions

DOMAINS = ("open", "legal", "academic")
FORMATS = ("LiSo", "SiLo", "LiLo", "SiSo")
CASE_SCHEMA_VERSION = "feedbench.case/1"

_MESSAGE = {
    "type": "object",
    "required": ["content"],
    "properties": {
        "speaker": {"type": "string"},
        "role": {"type": "string"},
        "content": {"type": "string"},
    },
}

CASE_SCHEMA: dict[str, Any] = {
    "type": "object",
    "required": ["case_id", "dataset", "query", "eval", "domain", "format"],
    "properties": {
        "schema": {"const": CASE_SCHEMA_VERSION},
        "case_id": {"type": ["string", "integer"]},
        "dataset": {"type": "string", "minLength": 1},
        "query": {"type": "string", "minLength": 1},
        "eval": {
            "type": "object",
            "required": ["metric"],
            "properties": {
                "metric": {"enum": sorted(METRICS)},
                "criteria": {"type": "array", "items": {"type": "string"}},
                "judge_template": {"type": "string"},
                "slots": {"type": "object"},
                "task_description": {"type": "string"},
                "evaluation_context": {"type": "string"},
            },
        },
        "context": {
            "type": ["array", "null"],
            "items": {
                "anyOf": [
                    {"type": "string"},
                    {"type": "array", "items": _MESSAGE},
                    {
                        "type": "object",
                        "required": ["messages"],
                        "properties": {"id": {"type": "string"}, "messages": {"type": "array", "items": _MESSAGE}},
                    },
                ]
            },
        },
        "corpus_id": {"type": "string"},
        "domain": {"enum": list(DOMAINS)},
        "format": {"enum": list(FORMATS)},
        "language": {"type": "string"},
    },
}
_validator = jsonschema.Draft7Validator(CASE_SCHEMA)


@dataclass(frozen=True)
class CorpusSession:
    """One session of declarative context: ordered (speaker, text) messages."""

    session_id: str
    messages: tuple[tuple[str, str], ...]

    def render(self) -> str:
        return "\n".join(f"{sp}: {text}" if sp else text for sp, text in self.messages)


@dataclass(frozen=True)
class TaskCase:
    case_id: str
    dataset_id: str
    query: str
    eval_metadata: dict = field(default_factory=dict, hash=False)
    context: tuple[CorpusSession, ...] = ()
    domain: str = "open"
    format: str = "SiSo"
    language: str = "en"
    corpus_id: str | None = None

    def __post_init__(self):
        if not self.query:
            raise ValueError("query must be non-empty")
        if self.eval_metadata.get("metric") not in METRICS:
            raise ValueError(f"eval metadata must name one registered metric, got {self.eval_metadata.get('metric')!r}")
        if self.format not in FORMATS:
            raise ValueError(f"unknown task format {self.format!r}")
        if self.domain not in DOMAINS:
            raise ValueError(f"unknown domain {self.domain!r}")

    @property
    def metric(self) -> str:
        return self.eval_metadata["metric"]

    @property
    def gold(self) -> Any:
        return self.eval_metadata.get("gold")

    @property
    def corpus_key(self) -> str | None:
        """Identity of the declarative corpus; cases sharing it share one ingestion."""
        if not self.context:
            return None
        if self.corpus_id:
            return self.corpus_id
        h = hashlib.sha256()
        for sess in self.context:
            h.update(json.dumps([sess.session_id, sess.messages], ensure_ascii=False).encode("utf-8"))
        return "sha256:" + h.hexdigest()[:16]

    @classmethod
    def from_record(cls, rec: dict, line: int | None = None) -> "TaskCase":
        errors = sorted(_validator.iter_errors(rec), key=lambda e: list(e.path))
        if errors:
            err = errors[0]
            where = "/".join(str(p) for p in err.path) or "<root>"
            raise SchemaViolation(f"{where}: {err.message}", line)
        return cls(
            case_id=str(rec["case_id"]),
            dataset_id=rec["dataset"],
            query=rec["query"],
            eval_metadata=dict(rec["eval"]),
            context=_parse_context(rec.get("context") or ()),
            domain=rec["domain"],
            format=rec["format"],
            language=rec.get("language", "en"),
            corpus_id=rec.get("corpus_id"),
        )

    def to_record(self) -> dict:
        rec: dict[str, Any] = {
            "schema": CASE_SCHEMA_VERSION,
            "case_id": self.case_id,
            "dataset": self.dataset_id,
            "query": self.query,
            "eval": self.eval_metadata,
            "domain": self.domain,
            "format": self.format,
            "language": self.language,
        }
        if self.context:
            rec["context"] = [
                {"id": s.session_id, "messages": [{"speaker": sp, "content": c} for sp, c in s.messages]}
                for s in self.context
            ]
        if self.corpus_id:
            rec["corpus_id"] = self.corpus_id
        return rec


def _parse_context(items: Iterable) -> tuple[CorpusSession, ...]:
    out = []
    for i, item in enumerate(items):
        sid = f"s{i + 1}"
        if isinstance(item, str):
            msgs = (("", item),)
        else:
            if isinstance(item, dict):
                sid = item.get("id", sid)
                item = item["messages"]
            msgs = tuple((m.get("speaker", m.get("role", "")), m["content"]) for m in item)
        out.append(CorpusSession(sid, msgs))
    return tuple(out)


def load_cases(path: str | Path) -> list[TaskCase]:
    cases = []
    seen: set[str] = set()
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaViolation(f"invalid JSON: {exc.msg}", lineno) from None
            case = TaskCase.from_record(rec, lineno)
            if case.case_id in seen:
                raise SchemaViolation(f"duplicate case_id {case.case_id!r}", lineno)
            seen.add(case.case_id)
            cases.append(case)
    return cases


def save_cases(path: str | Path, cases: Iterable[TaskCase]) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for c in cases:
            fh.write(json.dumps(c.to_record(), ensure_ascii=False) + "\n")


@dataclass(frozen=True)
class Partition:
    name: str
    datasets: tuple[str, ...]
    cap: int = 250
    test_ratio: float = 0.2
    seed: int = 42

    def __post_init__(self):
        object.__setattr__(self, "datasets", tuple(self.datasets))
        if self.cap < 1:
            raise ValueError("cap must be >= 1")
        if not 0.0 < self.test_ratio < 1.0:
            raise ValueError("test_ratio must be in (0, 1)")


def split_sizes(n: int, test_ratio: float = 0.2) -> tuple[int, int]:
    """(train, test) sizes: test = round-half-up(n * ratio)."""
    n_test = int(math.floor(n * test_ratio + 0.5))
    return n - n_test, n_test


@dataclass
class PartitionSplit:
    partition: Partition
    train: list[TaskCase]
    test: list[TaskCase]
    manifest: dict

    @property
    def manifest_hash(self) -> str:
        return self.manifest["hash"]


def _digest(obj: Any) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True, ensure_ascii=False).encode("utf-8")).hexdigest()


def build_partition(cases: Sequence[TaskCase], spec: Partition) -> PartitionSplit:
    by_dataset: dict[str, list[TaskCase]] = {d: [] for d in spec.datasets}
    for c in cases:
        if c.dataset_id in by_dataset:
            by_dataset[c.dataset_id].append(c)

    train: list[TaskCase] = []
    test: list[TaskCase] = []
    members: dict[str, dict] = {}
    for d in spec.datasets:
        pool = by_dataset[d]
        if not pool:
            raise EmptyDataset(f"partition {spec.name!r}: dataset {d!r} has no cases")
        rng = random.Random(f"{spec.seed}:{d}")
        sampled = rng.sample(pool, min(spec.cap, len(pool)))
        _, n_test = split_sizes(len(sampled), spec.test_ratio)
        d_test, d_train = sampled[:n_test], sampled[n_test:]
        test.extend(d_test)
        train.extend(d_train)
        members[d] = {
            "total": len(pool),
            "sampled": len(sampled),
            "train": [c.case_id for c in d_train],
            "test": [c.case_id for c in d_test],
        }

    manifest = {
        "partition": spec.name,
        "seed": spec.seed,
        "cap": spec.cap,
        "test_ratio": spec.test_ratio,
        "rounding": "test = floor(n * test_ratio + 0.5)",
        "datasets": members,
        "train_hash": _digest(sorted(c.case_id for c in train)),
        "test_hash": _digest(sorted(c.case_id for c in test)),
    }
    manifest["hash"] = _digest(manifest)
    return PartitionSplit(spec, train, test, manifest)


def training_batches(train: Sequence, batch_size: int, seed: int = 0) -> list[list]:
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    items = list(train)
    random.Random(seed).shuffle(items)
    return [items[i:i + batch_size] for i in range(0, len(items), batch_size)]


@dataclass
class FeedbackLog:
    sessions: dict[str, list[FeedbackSession]] = field(default_factory=dict)
    provenance: str = "generated"

    def add(self, session: FeedbackSession) -> None:
        self.sessions.setdefault(session.case_id, []).append(session)

    def __len__(self) -> int:
        return sum(len(v) for v in self.sessions.values())

    def case_ids(self) -> set[str]:
        return set(self.sessions)

    def for_cases(self, case_ids: Iterable[str]) -> list[FeedbackSession]:
        out = []
        for cid in case_ids:
            out.extend(self.sessions.get(cid, ()))
        return out

    def all(self) -> list[FeedbackSession]:
        return [s for v in self.sessions.values() for s in v]


def check_no_leak(log_case_ids: Iterable[str], test: Iterable[TaskCase]) -> None:
    leaked = sorted(set(log_case_ids) & {c.case_id for c in test})
    if leaked:
        raise TestLeak(f"feedback log references test case(s): {', '.join(leaked[:10])}")


def import_feedback_log(path: str | Path, train: Sequence[TaskCase],
                        test: Sequence[TaskCase] = ()) -> FeedbackLog:
    train_ids = {c.case_id for c in train}
    test_ids = {c.case_id for c in test}
    log = FeedbackLog(provenance="imported")
    for lineno, rec in read_sessions(path):
        try:
            session = FeedbackSession.from_dict(rec)
        except (KeyError, ValueError, TypeError) as exc:
            raise SchemaViolation(f"bad session record: {exc}", lineno) from None
        if session.case_id in test_ids:
            raise TestLeak(f"line {lineno}: session for test case {session.case_id!r}")
        if session.case_id not in train_ids:
            raise UnknownCase(f"line {lineno}: case {session.case_id!r} is not in the training set")
        log.add(session)
    return log
