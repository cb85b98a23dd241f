"""Tokenization and lenient JSON extraction shared by metrics, retrieval and parsers."""

from __future__ import annotations

import json
import re
import unicodedata
from typing import Any

_CJK_RANGES = (
    (0x3040, 0x30FF),  # hiragana, katakana
    (0x3400, 0x4DBF),
    (0x4E00, 0x9FFF),
    (0xAC00, 0xD7AF),  # hangul syllables
    (0xF900, 0xFAFF),
    (0x20000, 0x2A6DF),
)

_FENCE_RE = re.compile(r"```[a-zA-Z0-9_-]*")


def is_cjk(ch: str) -> bool:
    cp = ord(ch)
    return any(lo <= cp <= hi for lo, hi in _CJK_RANGES)


def _strip_punct(text: str) -> str:
    return "".join(" " if unicodedata.category(ch).startswith("P") or unicodedata.category(ch).startswith("S") else ch
                   for ch in text)


def _segments(text: str) -> list[tuple[str, bool]]:
    """Split lowercased, punctuation-free text into (segment, is_cjk_run) pieces."""
    out: list[tuple[str, bool]] = []
    for chunk in _strip_punct(text.lower()).split():
        buf = []
        buf_cjk = None
        for ch in chunk:
            c = is_cjk(ch)
            if buf and c != buf_cjk:
                out.append(("".join(buf), bool(buf_cjk)))
                buf = []
            buf.append(ch)
            buf_cjk = c
        if buf:
            out.append(("".join(buf), bool(buf_cjk)))
    return out


def tokenize(text: str) -> list[str]:
    """Lowercase, punctuation-stripped word tokens; each CJK character is its own token."""
    tokens: list[str] = []
    for seg, cjk in _segments(text or ""):
        if cjk:
            tokens.extend(seg)
        else:
            tokens.append(seg)
    return tokens


def index_terms(text: str) -> list[str]:
    """Retrieval terms: word tokens, with CJK runs expanded to character bigrams."""
    terms: list[str] = []
    for seg, cjk in _segments(text or ""):
        if not cjk:
            terms.append(seg)
        elif len(seg) == 1:
            terms.append(seg)
        else:
            terms.extend(seg[i:i + 2] for i in range(len(seg) - 1))
    return terms


def strip_fences(text: str) -> str:
    return _FENCE_RE.sub("", text or "").strip()


def first_json_object(text: str) -> dict[str, Any] | None:
    """Return the first decodable JSON object embedded in ``text``, or None.

    Leading/trailing prose and Markdown code fences are tolerated.
    """
    cleaned = strip_fences(text)
    decoder = json.JSONDecoder()
    pos = cleaned.find("{")
    while pos != -1:
        try:
            obj, _ = decoder.raw_decode(cleaned, pos)
        except json.JSONDecodeError:
            pos = cleaned.find("{", pos + 1)
            continue
        if isinstance(obj, dict):
            return obj
        pos = cleaned.find("{", pos + 1)
    return None
