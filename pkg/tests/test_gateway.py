from __future__ import annotations

import json
import threading
import time

import httpx
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from feedbench.errors import (
    AuthFailure,
    ConfigError,
    DimensionMismatch,
    GatewayExhausted,
    MockExhausted,
    TransportError,
)
from feedbench.gateway import (
    ChatRequest,
    Gateway,
    GatewayProfile,
    HttpBackend,
    RetryPolicy,
    Rule,
    ScriptedBackend,
    hashed_embedding,
    match,
)


def make(backend, **kw):
    return Gateway(GatewayProfile.single_model("m", **kw), backend, sleep=lambda s: None)


def test_request_defaults_and_payload():
    req = ChatRequest.user("hi")
    p = req.to_payload("model-x")
    assert p == {"model": "model-x", "messages": [{"role": "user", "content": "hi"}],
                 "temperature": 0.1, "top_p": 0.1, "max_tokens": 2048}
    assert req.to_payload("m", send_top_k=True)["top_k"] == 1


def test_profile_requires_all_roles():
    with pytest.raises(ConfigError):
        GatewayProfile(roles={"system": "a", "judge": "b"})
    prof = GatewayProfile.from_dict({"endpoint": "http://x", "model": "big", "embedder": "emb",
                                     "retry": {"max_attempts": 5, "backoff_base": 0.5}})
    assert prof.roles["embedder"] == "emb" and prof.roles["judge"] == "big"
    assert prof.retry == RetryPolicy(5, 0.5)
    with pytest.raises(ConfigError):
        GatewayProfile.from_dict({"model": "m", "bogus": 1})


def test_scripted_match_and_exhaustion():
    be = ScriptedBackend([Rule(match(role="judge"), "7", times=1)])
    gw = make(be)
    assert gw.chat("judge", ChatRequest.user("score")) == "7"
    with pytest.raises(MockExhausted):
        gw.chat("judge", ChatRequest.user("score"))
    be.default = "fallback"
    assert gw.chat("simulator", ChatRequest.user("x")) == "fallback"


def test_retry_then_success():
    be = ScriptedBackend([Rule(match(), TransportError("boom"), times=1), Rule(match(), "ok")])
    sleeps = []
    gw = Gateway(GatewayProfile.single_model("m"), be, sleep=sleeps.append)
    assert gw.chat("system", ChatRequest.user("q")) == "ok"
    assert len(be.calls) == 2 and sleeps == [1.0]


def test_exhaustion_after_max_attempts():
    be = ScriptedBackend([Rule(match(), TransportError("down"))])
    sleeps = []
    gw = Gateway(GatewayProfile.single_model("m"), be, sleep=sleeps.append)
    with pytest.raises(GatewayExhausted):
        gw.chat("system", ChatRequest.user("q"))
    assert len(be.calls) == 3 and sleeps == [1.0, 2.0]


def test_role_counts_are_separate():
    gw = make(ScriptedBackend(default="x"))
    gw.chat("simulator", ChatRequest.user("a"))
    gw.chat("judge", ChatRequest.user("a"))
    gw.chat("judge", ChatRequest.user("b"))
    assert gw.call_counts["simulator"] == 1 and gw.call_counts["judge"] == 2
    with pytest.raises(ConfigError):
        gw.chat("embedder", ChatRequest.user("a"))


def test_parameter_fidelity_on_captured_requests():
    be = ScriptedBackend(default="x")
    gw = make(be, send_top_k=True)
    gw.chat("system", ChatRequest.user("a", temperature=0.7, top_p=0.9, max_tokens=12))
    payload = be.calls[-1][1]
    assert (payload["temperature"], payload["top_p"], payload["max_tokens"], payload["top_k"]) == (0.7, 0.9, 12, 1)


def test_embed_deterministic_and_ordered():
    gw = make(ScriptedBackend())
    a = gw.embed(["alpha", "beta", "gamma"])
    b = gw.embed(["alpha", "beta", "gamma"])
    assert len(a) == 3 and all(v.shape == (8,) for v in a)
    assert all(np.array_equal(x, y) for x, y in zip(a, b))
    assert np.array_equal(gw.embed(["beta"])[0], a[1])
    assert gw.embed([]) == []


def test_embed_dimension_mismatch():
    be = ScriptedBackend(embedder=lambda t: [1.0] * (3 if t == "a" else 4))
    with pytest.raises(DimensionMismatch):
        make(be).embed(["a", "b"])


def test_hashed_embedding_unit_norm():
    v = np.array(hashed_embedding("the quick brown fox", 8))
    assert abs(np.linalg.norm(v) - 1) < 1e-12


def test_count_tokens():
    gw = make(ScriptedBackend())
    assert gw.count_tokens("") == 0
    assert gw.count_tokens("x" * 40) == 10
    assert gw.count_tokens("x" * 41) == 11
    gw_tok = Gateway(GatewayProfile.single_model("m"), ScriptedBackend(), tokenizer=str.split)
    assert gw_tok.count_tokens("a b  c") == 3


@given(st.text(max_size=200), st.text(max_size=50))
def test_count_tokens_monotone(a, extra):
    gw = make(ScriptedBackend())
    assert gw.count_tokens(a) <= gw.count_tokens(a + extra)


def test_mock_determinism_transcripts(tmp_path):
    def run(path):
        gw = make(ScriptedBackend([Rule(match(contains="hello"), "hi there")], default="?"),
                  transcript_path=str(path))
        for q in ["hello", "bye", "hello again"]:
            gw.chat("system", ChatRequest.user(q))
        return path.read_text()

    assert run(tmp_path / "a.jsonl") == run(tmp_path / "b.jsonl")
    rec = json.loads((tmp_path / "a.jsonl").read_text().splitlines()[0])
    assert rec["response"] == "hi there" and rec["request"]["temperature"] == 0.1


def test_parallelism_cap_enforced():
    active, peak = 0, 0
    lock = threading.Lock()

    def slow(payload):
        nonlocal active, peak
        with lock:
            active += 1
            peak = max(peak, active)
        time.sleep(0.01)
        with lock:
            active -= 1
        return "ok"

    gw = make(ScriptedBackend(default=slow), parallelism=2)
    threads = [threading.Thread(target=gw.chat, args=("system", ChatRequest.user(str(i)))) for i in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert peak <= 2


def _http_backend(handler):
    client = httpx.Client(transport=httpx.MockTransport(handler))
    return HttpBackend("http://server/v1", api_key="k", client=client)


def test_http_backend_wire_contract():
    seen = {}

    def handler(request: httpx.Request):
        seen["url"] = str(request.url)
        seen["body"] = json.loads(request.content)
        if request.url.path.endswith("/embeddings"):
            return httpx.Response(200, json={"data": [{"index": 1, "embedding": [0, 1]},
                                                      {"index": 0, "embedding": [1, 0]}]})
        return httpx.Response(200, json={"choices": [{"message": {"content": "answer"}}]})

    be = _http_backend(handler)
    gw = make(be)
    assert gw.chat("system", ChatRequest.user("q")) == "answer"
    assert seen["url"] == "http://server/v1/chat/completions"
    assert seen["body"]["max_tokens"] == 2048 and "top_k" not in seen["body"]
    vecs = gw.embed(["a", "b"])
    assert vecs[0].tolist() == [1, 0] and vecs[1].tolist() == [0, 1]


def test_http_backend_errors():
    codes = iter([503, 200])

    def handler(request):
        code = next(codes)
        if code == 200:
            return httpx.Response(200, json={"choices": [{"message": {"content": "late"}}]})
        return httpx.Response(code)

    assert make(_http_backend(handler)).chat("system", ChatRequest.user("q")) == "late"
    with pytest.raises(AuthFailure):
        make(_http_backend(lambda r: httpx.Response(401))).chat("system", ChatRequest.user("q"))
