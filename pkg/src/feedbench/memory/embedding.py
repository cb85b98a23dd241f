"""Cosine-similarity index over gateway-provided embeddings."""

from __future__ import annotations

import hashlib
import struct
from pathlib import Path
from typing import TYPE_CHECKING, Sequence

import numpy as np

from ..errors import DimensionMismatch

if TYPE_CHECKING:
    from ..gateway import Gateway


def text_key(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


class EmbeddingIndex:
    def __init__(self, gateway: "Gateway | None" = None):
        self.gateway = gateway
        self.cache: dict[str, np.ndarray] = {}
        self._rows: list[np.ndarray] = []
        self._matrix: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self._rows)

    @property
    def dim(self) -> int | None:
        return len(self._rows[0]) if self._rows else None

    def _embed(self, texts: Sequence[str]) -> list[np.ndarray]:
        todo = [t for t in dict.fromkeys(texts) if text_key(t) not in self.cache]
        if todo:
            if self.gateway is None:
                raise RuntimeError("embedding index has no gateway to embed new text")
            for t, v in zip(todo, self.gateway.embed(todo)):
                self.cache[text_key(t)] = v
        return [self.cache[text_key(t)] for t in texts]

    def add_many(self, texts: Sequence[str]) -> None:
        for v in self._embed(texts):
            if self._rows and len(v) != len(self._rows[0]):
                raise DimensionMismatch(f"vector of dim {len(v)} does not match index dim {len(self._rows[0])}")
            self._rows.append(np.asarray(v, dtype=np.float64))
        self._matrix = None

    def _normed(self) -> np.ndarray:
        if self._matrix is None:
            m = np.vstack(self._rows)
            norms = np.linalg.norm(m, axis=1, keepdims=True)
            self._matrix = m / np.where(norms == 0, 1.0, norms)
        return self._matrix

    def search(self, query: str, top_k: int) -> list[tuple[int, float]]:
        if not self._rows:
            return []
        q = self._embed([query])[0]
        qn = np.linalg.norm(q)
        sims = self._normed() @ (q / qn if qn else q)
        order = sorted(range(len(sims)), key=lambda i: (-sims[i], i))[:top_k]
        return [(i, float(sims[i])) for i in order]

    def write_vectors(self, path: str | Path) -> None:
        """Little-endian: uint32 dim, uint32 rows, then float64 values row-major."""
        dim = self.dim or 0
        with Path(path).open("wb") as fh:
            fh.write(struct.pack("<II", dim, len(self._rows)))
            if self._rows:
                fh.write(np.vstack(self._rows).astype("<f8").tobytes(order="C"))

    def read_vectors(self, path: str | Path, texts: Sequence[str]) -> None:
        data = Path(path).read_bytes()
        dim, rows = struct.unpack_from("<II", data)
        if rows != len(texts):
            raise ValueError(f"vector file has {rows} rows for {len(texts)} entries")
        values = np.frombuffer(data, dtype="<f8", offset=8).reshape(rows, dim) if rows else np.zeros((0, dim))
        self._rows = [values[i].astype(np.float64) for i in range(rows)]
        for t, v in zip(texts, self._rows):
            self.cache[text_key(t)] = v
        self._matrix = None
