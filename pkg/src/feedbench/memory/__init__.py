from .bm25 import BM25Index
from .embedding import EmbeddingIndex
from .entries import MemoryEntry, corpus_entries, session_entries
from .persist import load_index, save_index
from .systems import (
    BASELINES,
    PROMPT_TEMPLATE,
    MemorySystem,
    RetrievalConfig,
    RetrievalSystem,
    VanillaSystem,
    answer_with_backoff,
    assemble_prompt,
    fitting_count,
    ingest_corpus,
    ingest_sessions,
    make_system,
    retrieve,
    vanilla_answer,
    vanilla_prompt,
)
