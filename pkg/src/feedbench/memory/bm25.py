"""Incremental Okapi BM25 index."""

from __future__ import annotations

import math
from collections import Counter

from ..text import index_terms


class BM25Index:
    """Okapi BM25 over ``index_terms`` tokens.

    idf(t) = ln(1 + (N - df + 0.5) / (df + 0.5)), which stays positive for
    terms present in most documents. Each distinct query term counts once.
    Documents sharing no term with the query are not returned.
    """

    def __init__(self, k1: float = 1.2, b: float = 0.75):
        self.k1 = k1
        self.b = b
        self.postings: dict[str, dict[int, int]] = {}
        self.doc_lengths: list[int] = []

    def __len__(self) -> int:
        return len(self.doc_lengths)

    def add(self, text: str) -> int:
        doc = len(self.doc_lengths)
        terms = index_terms(text)
        for term, tf in Counter(terms).items():
            self.postings.setdefault(term, {})[doc] = tf
        self.doc_lengths.append(len(terms))
        return doc

    def idf(self, term: str) -> float:
        df = len(self.postings.get(term, ()))
        n = len(self.doc_lengths)
        return math.log(1.0 + (n - df + 0.5) / (df + 0.5))

    def scores(self, query: str) -> dict[int, float]:
        n = len(self.doc_lengths)
        if n == 0:
            return {}
        avgdl = sum(self.doc_lengths) / n or 1.0
        out: dict[int, float] = {}
        for term in dict.fromkeys(index_terms(query)):
            posting = self.postings.get(term)
            if not posting:
                continue
            idf = self.idf(term)
            for doc, tf in posting.items():
                norm = self.k1 * (1.0 - self.b + self.b * self.doc_lengths[doc] / avgdl)
                out[doc] = out.get(doc, 0.0) + idf * tf * (self.k1 + 1.0) / (tf + norm)
        return out

    def search(self, query: str, top_k: int) -> list[tuple[int, float]]:
        ranked = sorted(self.scores(query).items(), key=lambda kv: (-kv[1], kv[0]))
        return [(doc, s) for doc, s in ranked if s > 0][:top_k]

    def to_dict(self) -> dict:
        return {
            "k1": self.k1,
            "b": self.b,
            "doc_lengths": self.doc_lengths,
            "postings": {t: sorted(p.items()) for t, p in sorted(self.postings.items())},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BM25Index":
        idx = cls(d["k1"], d["b"])
        idx.doc_lengths = list(d["doc_lengths"])
        idx.postings = {t: {int(doc): int(tf) for doc, tf in p} for t, p in d["postings"].items()}
        return idx
