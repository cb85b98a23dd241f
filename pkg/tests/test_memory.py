from __future__ import annotations

import math

import numpy as np
import pytest

from feedbench.action_model import UserAction
from feedbench.errors import BudgetUnsatisfiable, ConfigError
from feedbench.gateway import Gateway, GatewayProfile, ScriptedBackend
from feedbench.memory import (
    BM25Index,
    RetrievalConfig,
    RetrievalSystem,
    VanillaSystem,
    assemble_prompt,
    corpus_entries,
    fitting_count,
    load_index,
    make_system,
    save_index,
    session_entries,
    vanilla_prompt,
)
from feedbench.memory.entries import MemoryEntry
from feedbench.session import DialogTurn, FeedbackSession
from feedbench.tasks import CorpusSession

CORPUS = [CorpusSession(f"s{i}", ((f"P{i}", f"fact number {i}"), ("Q", f"reply {i}"))) for i in range(3)]


def dialog(case_id="c1", n=3, first="Where is the key?"):
    turns = []
    for t in range(n):
        turns.append(DialogTurn("user", first if t == 0 else f"more {t}", 2 * t))
        turns.append(DialogTurn("assistant", f"answer {t}", 2 * t + 1))
    return FeedbackSession(case_id, "locomo", turns, [5] * n, [UserAction("none", False)] * n, "turn_limit")


def ws_gateway():
    return Gateway(GatewayProfile.single_model("m"), ScriptedBackend(default="ok"), tokenizer=str.split)


def test_corpus_granularity_counts():
    assert len(corpus_entries(CORPUS, "message", "k")) == 6
    assert len(corpus_entries(CORPUS, "session", "k")) == 3
    e = corpus_entries(CORPUS, "message", "k")[1]
    assert e.text == "Q: reply 0" and e.session_ref == "k/s0" and e.position_in_session == 1


def test_dialog_granularity_counts():
    sess = dialog()
    msg = session_entries([sess], "message", "log")
    ses = session_entries([sess], "session", "log")
    assert len(msg) == 6 and len(ses) == 1
    assert ses[0].text == sess.render() and ses[0].index_key == "Where is the key?"
    assert msg[0].text == "User: Where is the key?" and msg[1].text == "Assistant: answer 0"
    assert all(e.source == "feedback_log" for e in msg)


@pytest.mark.parametrize("gran,per", [("message", 6), ("session", 1)])
def test_reingest_doubles(gran, per):
    system = RetrievalSystem(RetrievalConfig(granularity=gran))
    system.ingest_sessions([dialog()])
    system.ingest_sessions([dialog()])
    assert system.entry_count() == 2 * per
    assert len({e.entry_id for e in system.entries}) == 2 * per


def test_bm25_hand_computed():
    idx = BM25Index()
    for text in ["a b", "a c c", "d"]:
        idx.add(text)
    n, avgdl, k1, b = 3, 2.0, 1.2, 0.75
    idf_c = math.log(1 + (n - 1 + 0.5) / (1 + 0.5))
    tf, dl = 2, 3
    expected = idf_c * tf * (k1 + 1) / (tf + k1 * (1 - b + b * dl / avgdl))
    scores = idx.scores("c")
    assert set(scores) == {1}
    assert abs(scores[1] - expected) < 1e-12
    # a query term repeated counts once
    assert idx.scores("c c c") == scores
    idf_a = math.log(1 + (n - 2 + 0.5) / (2 + 0.5))
    expected_a0 = idf_a * 1 * (k1 + 1) / (1 + k1 * (1 - b + b * 2 / avgdl))
    assert abs(idx.scores("a")[0] - expected_a0) < 1e-12


def test_bm25_self_retrieval_and_zero_overlap():
    texts = ["the red fox jumps", "a blue whale sings", "green tea leaves steep slowly"]
    idx = BM25Index()
    for t in texts:
        idx.add(t)
    for i, t in enumerate(texts):
        assert idx.search(t, 1)[0][0] == i
    assert idx.search("zebra", 5) == []
    assert BM25Index().search("anything", 3) == []


def test_bm25_cjk_bigrams():
    idx = BM25Index()
    idx.add("合同自签字之日起生效")
    idx.add("劳动者享有带薪年休假")
    assert idx.search("合同什么时候生效", 1)[0][0] == 0


def test_retrieval_system_top_k_and_order():
    system = RetrievalSystem(RetrievalConfig(top_k=2, granularity="message"))
    system.ingest_corpus(CORPUS, "conv")
    got = system.retrieve("fact number 1")
    assert len(got) == 2 and got[0].text == "P1: fact number 1"
    assert system.retrieve("nothing shared") == []


def test_assemble_prompt_golden(fixtures_dir):
    mems = [MemoryEntry("a", "Alice: I moved to Lisbon in May.", "corpus", "x"),
            MemoryEntry("b", "User: Where does Alice live?\n\nAssistant: Lisbon.", "feedback_log", "y")]
    expected = (fixtures_dir / "memory_prompt_two.txt").read_text(encoding="utf-8").rstrip("\n")
    assert assemble_prompt(mems, "When did Alice move?") == expected


def test_assemble_prompt_empty():
    text = assemble_prompt([], "hi")
    assert text.startswith("User Memories:\n\n\n\nUser input:\n\nhi\n\n")


def test_budget_backoff_drops_lowest_ranked():
    gw = ws_gateway()
    mems = [MemoryEntry(str(i), f"m{i} x y", "corpus", "k") for i in range(4)]
    exact = gw.count_tokens(assemble_prompt(mems[:2], "q"))
    assert fitting_count(mems, "q", gw, exact) == 2
    assert fitting_count(mems, "q", gw, exact - 1) == 1
    assert fitting_count(mems, "q", gw, 10_000) == 4
    base = gw.count_tokens(assemble_prompt([], "q"))
    assert fitting_count(mems, "q", gw, base) == 0
    with pytest.raises(BudgetUnsatisfiable):
        fitting_count(mems, "q", gw, base - 1)


def test_prepare_prompt_respects_budget():
    gw = ws_gateway()
    system = RetrievalSystem(RetrievalConfig(top_k=3, granularity="message", context_token_budget=10_000))
    system.ingest_corpus(CORPUS, "conv")
    full = system.prepare_prompt("fact number", gw)
    assert full.count("fact number") == 4  # three memories plus the query
    tight = RetrievalSystem(RetrievalConfig(top_k=3, granularity="message",
                                            context_token_budget=gw.count_tokens(full) - 1))
    tight.ingest_corpus(CORPUS, "conv")
    assert tight.prepare_prompt("fact number", gw).count("fact number") == 3


def test_vanilla_first_sessions_that_fit():
    gw = ws_gateway()
    two = "\n\n".join([CORPUS[0].render(), CORPUS[1].render(), "q"])
    assert vanilla_prompt("q", CORPUS, gw, gw.count_tokens(two)) == two
    assert vanilla_prompt("q", CORPUS, gw, 1) == "q"
    with pytest.raises(BudgetUnsatisfiable):
        vanilla_prompt("two words", CORPUS, gw, 1)
    v = VanillaSystem()
    assert v.ingest_sessions([dialog()]) == 0 and v.entry_count() == 0 and not v.uses_memory


def test_embedding_self_retrieval(gateway):
    system = RetrievalSystem(RetrievalConfig(granularity="message", scorer="embedding"), gateway)
    system.ingest_corpus(CORPUS, "conv")
    for e in system.entries:
        assert system.retrieve(e.text, 1)[0] == e
    assert len(system.retrieve("anything")) == 5  # cosine ranks every entry


def test_embedding_cache_avoids_recompute(gateway):
    system = RetrievalSystem(RetrievalConfig(granularity="message", scorer="embedding"), gateway)
    calls = []
    original = gateway.embed
    gateway.embed = lambda texts: calls.append(list(texts)) or original(texts)
    system.ingest_corpus(CORPUS, "a")
    system.ingest_corpus(CORPUS, "b")
    assert len(calls) == 1 and system.entry_count() == 12


@pytest.mark.parametrize("name", ["bm25-m", "bm25-s", "embed-m", "embed-s"])
def test_persist_roundtrip(tmp_path, gateway, name):
    system = make_system(name, gateway, top_k=3)
    system.ingest_corpus(CORPUS, "conv")
    system.ingest_sessions([dialog(), dialog("c2", 1, "fact about keys")])
    save_index(system, tmp_path / "idx")
    loaded = load_index(tmp_path / "idx", gateway)
    assert loaded.entries == system.entries and loaded.name == system.name
    for q in ["fact number 2", "Where is the key?", "answer 1"]:
        assert loaded.retrieve(q) == system.retrieve(q)
    if name.startswith("embed"):
        assert np.array_equal(np.vstack(loaded.index._rows), np.vstack(system.index._rows))


def test_make_system_rejects_unknown():
    with pytest.raises(ConfigError):
        make_system("bm99")
    with pytest.raises(ConfigError):
        RetrievalConfig(top_k=0)
    assert make_system("vanilla").name == "vanilla"
