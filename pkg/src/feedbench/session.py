"""Dialog turns and feedback sessions, plus their JSONL interchange format."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Literal

from .action_model import UserAction, check_score

Role = Literal["user", "assistant"]
Termination = Literal["simulator_end", "turn_limit", "error"]
TERMINATIONS = ("simulator_end", "turn_limit", "error")


@dataclass(frozen=True)
class DialogTurn:
    role: Role
    content: str
    timestamp_ordinal: int = 0

    def __post_init__(self):
        if self.role not in ("user", "assistant"):
            raise ValueError(f"unknown role {self.role!r}")
        if not self.content:
            raise ValueError("turn content must be non-empty")


@dataclass
class FeedbackSession:
    case_id: str
    dataset: str
    turns: list[DialogTurn] = field(default_factory=list)
    satisfaction: list[int] = field(default_factory=list)
    actions: list[UserAction] = field(default_factory=list)
    terminated_by: Termination = "simulator_end"

    def __post_init__(self):
        if self.terminated_by not in TERMINATIONS:
            raise ValueError(f"unknown termination {self.terminated_by!r}")
        ordinals = [t.timestamp_ordinal for t in self.turns]
        if any(b <= a for a, b in zip(ordinals, ordinals[1:])):
            raise ValueError("turn ordinals must strictly increase")
        if self.turns and self.turns[0].role != "user":
            raise ValueError("a session must open with the user's query")
        n = self.assistant_turns
        if len(self.satisfaction) != n or len(self.actions) != n:
            raise ValueError(
                f"{n} assistant turns but {len(self.satisfaction)} scores and {len(self.actions)} actions"
            )
        for s in self.satisfaction:
            check_score(s)

    @property
    def assistant_turns(self) -> int:
        return sum(1 for t in self.turns if t.role == "assistant")

    @property
    def question(self) -> str:
        return self.turns[0].content if self.turns else ""

    @property
    def ok(self) -> bool:
        return self.terminated_by != "error"

    def render(self) -> str:
        return render_turns(self.turns)

    def to_dict(self) -> dict:
        return {
            "case_id": self.case_id,
            "dataset": self.dataset,
            "turns": [{"role": t.role, "content": t.content} for t in self.turns],
            "satisfaction": list(self.satisfaction),
            "actions": [a.to_dict() for a in self.actions],
            "terminated_by": self.terminated_by,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False, separators=(",", ":"))

    @classmethod
    def from_dict(cls, d: dict) -> "FeedbackSession":
        turns = [DialogTurn(t["role"], t["content"], i) for i, t in enumerate(d["turns"])]
        return cls(
            case_id=str(d["case_id"]),
            dataset=str(d["dataset"]),
            turns=turns,
            satisfaction=[int(s) for s in d["satisfaction"]],
            actions=[UserAction.from_dict(a) for a in d["actions"]],
            terminated_by=d["terminated_by"],
        )


def render_turns(turns: Iterable[DialogTurn]) -> str:
    return "\n\n".join(f"{t.role.capitalize()}: {t.content}" for t in turns)


def write_sessions(path: str | Path, sessions: Iterable[FeedbackSession], append: bool = False) -> int:
    n = 0
    with Path(path).open("a" if append else "w", encoding="utf-8") as fh:
        for s in sessions:
            fh.write(s.to_json() + "\n")
            n += 1
    return n


def read_sessions(path: str | Path) -> Iterator[tuple[int, dict]]:
    """Yield (line number, raw record) for each non-blank line."""
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if line.strip():
                yield lineno, json.loads(line)
