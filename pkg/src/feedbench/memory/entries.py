"""Memory entries and the rules that cut corpora and dialogs into them."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Iterable, Literal, Sequence

from ..session import FeedbackSession
from ..tasks import CorpusSession

Source = Literal["corpus", "feedback_log"]
Granularity = Literal["message", "session"]


@dataclass(frozen=True)
class MemoryEntry:
    entry_id: str
    text: str
    source: Source
    index_key: str
    session_ref: str | None = None
    position_in_session: int | None = None

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "MemoryEntry":
        return cls(**d)


def corpus_entries(sessions: Sequence[CorpusSession], granularity: Granularity, prefix: str) -> list[MemoryEntry]:
    out: list[MemoryEntry] = []
    for sess in sessions:
        ref = f"{prefix}/{sess.session_id}"
        if granularity == "session":
            text = sess.render()
            out.append(MemoryEntry(f"{ref}", text, "corpus", text, ref))
        else:
            for pos, (speaker, content) in enumerate(sess.messages):
                text = f"{speaker}: {content}" if speaker else content
                out.append(MemoryEntry(f"{ref}#{pos}", text, "corpus", text, ref, pos))
    return out


def session_entries(sessions: Iterable[FeedbackSession], granularity: Granularity, prefix: str) -> list[MemoryEntry]:
    out: list[MemoryEntry] = []
    for k, sess in enumerate(sessions):
        ref = f"{prefix}/{sess.case_id}/{k}"
        if granularity == "session":
            out.append(MemoryEntry(ref, sess.render(), "feedback_log", sess.question, ref))
        else:
            for pos, turn in enumerate(sess.turns):
                text = f"{turn.role.capitalize()}: {turn.content}"
                out.append(MemoryEntry(f"{ref}#{pos}", text, "feedback_log", turn.content, ref, pos))
    return out
