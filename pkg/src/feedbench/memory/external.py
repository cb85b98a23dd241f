"""Process-boundary adapter for memory systems implemented outside this package.

The child process reads one JSON request per line on stdin and writes one
JSON reply per line on stdout:

    {"op": "ingest_corpus", "sessions": [{"id": ..., "messages": [[speaker, text], ...]}]}
        -> {"count": int}
    {"op": "ingest_sessions", "sessions": [<FeedbackSession JSONL record>, ...]}  -> {"count": int}
    {"op": "count"}                                                             -> {"count": int}
    {"op": "prompt", "query": str, "context": [...]}                           -> {"prompt": str}

Replies with an ``"error"`` key raise :class:`SystemFailure`.
"""

from __future__ import annotations

import json
import subprocess
import threading
from typing import Sequence

from ..errors import SystemFailure
from .systems import MemorySystem


class ExternalMemorySystem(MemorySystem):
    def __init__(self, command: Sequence[str], name: str | None = None):
        self.command = list(command)
        self.name = name or f"external:{self.command[0]}"
        self._proc: subprocess.Popen | None = None
        self._lock = threading.Lock()

    def _call(self, request: dict) -> dict:
        with self._lock:
            if self._proc is None or self._proc.poll() is not None:
                self._proc = subprocess.Popen(
                    self.command, stdin=subprocess.PIPE, stdout=subprocess.PIPE, text=True, encoding="utf-8"
                )
            assert self._proc.stdin and self._proc.stdout
            try:
                self._proc.stdin.write(json.dumps(request, ensure_ascii=False) + "\n")
                self._proc.stdin.flush()
                line = self._proc.stdout.readline()
            except OSError as exc:
                raise SystemFailure(f"{self.name}: {exc}") from exc
        if not line:
            raise SystemFailure(f"{self.name}: process closed its output")
        reply = json.loads(line)
        if "error" in reply:
            raise SystemFailure(f"{self.name}: {reply['error']}")
        return reply

    @staticmethod
    def _sessions(context) -> list[dict]:
        return [{"id": s.session_id, "messages": [list(m) for m in s.messages]} for s in context]

    def ingest_corpus(self, sessions, corpus_key="corpus") -> int:
        return int(self._call({"op": "ingest_corpus", "key": corpus_key, "sessions": self._sessions(sessions)})["count"])

    def ingest_sessions(self, sessions) -> int:
        return int(self._call({"op": "ingest_sessions", "sessions": [s.to_dict() for s in sessions]})["count"])

    def entry_count(self) -> int:
        return int(self._call({"op": "count"})["count"])

    def prepare_prompt(self, query, gateway, context=()) -> str:
        return self._call({"op": "prompt", "query": query, "context": self._sessions(context)})["prompt"]

    def close(self) -> None:
        if self._proc is not None:
            self._proc.stdin.close()
            self._proc.wait(timeout=5)
            self._proc = None
