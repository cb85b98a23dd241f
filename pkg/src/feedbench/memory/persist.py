"""On-disk index format.

A saved index is a directory holding::

    manifest.json    {"schema": "feedbench.index/1", "name", "config", "entries", "sidecar"}
    entries.jsonl    one MemoryEntry per line, insertion order
    postings.json    lexical sidecar: k1, b, doc lengths, term -> [[doc, tf], ...]
    vectors.bin      embedding sidecar: <uint32 dim><uint32 rows><float64 row-major>, little-endian
"""

from __future__ import annotations

import json
from dataclasses import asdict
from pathlib import Path
from typing import TYPE_CHECKING

from .bm25 import BM25Index
from .embedding import EmbeddingIndex
from .entries import MemoryEntry
from .systems import RetrievalConfig, RetrievalSystem

if TYPE_CHECKING:
    from ..gateway import Gateway

INDEX_SCHEMA = "feedbench.index/1"


def save_index(system: RetrievalSystem, directory: str | Path) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    with (d / "entries.jsonl").open("w", encoding="utf-8") as fh:
        for e in system.entries:
            fh.write(json.dumps(e.to_dict(), ensure_ascii=False) + "\n")
    if isinstance(system.index, BM25Index):
        sidecar = "postings.json"
        (d / sidecar).write_text(json.dumps(system.index.to_dict(), ensure_ascii=False), encoding="utf-8")
    else:
        sidecar = "vectors.bin"
        system.index.write_vectors(d / sidecar)
    manifest = {
        "schema": INDEX_SCHEMA,
        "name": system.name,
        "config": asdict(system.config),
        "entries": len(system.entries),
        "sidecar": sidecar,
    }
    (d / "manifest.json").write_text(json.dumps(manifest, indent=2), encoding="utf-8")
    return d


def load_index(directory: str | Path, gateway: "Gateway | None" = None) -> RetrievalSystem:
    d = Path(directory)
    manifest = json.loads((d / "manifest.json").read_text(encoding="utf-8"))
    if manifest.get("schema") != INDEX_SCHEMA:
        raise ValueError(f"unsupported index schema {manifest.get('schema')!r}")
    system = RetrievalSystem(RetrievalConfig(**manifest["config"]), gateway, name=manifest["name"])
    with (d / "entries.jsonl").open(encoding="utf-8") as fh:
        system.entries = [MemoryEntry.from_dict(json.loads(line)) for line in fh if line.strip()]
    if manifest["sidecar"] == "postings.json":
        system.index = BM25Index.from_dict(json.loads((d / "postings.json").read_text(encoding="utf-8")))
    else:
        idx = EmbeddingIndex(gateway)
        idx.read_vectors(d / "vectors.bin", [e.index_key for e in system.entries])
        system.index = idx
    if len(system.index) != len(system.entries):
        raise ValueError("index sidecar and entries disagree on size")
    return system
