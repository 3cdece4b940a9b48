from __future__ import annotations

import json

import numpy as np
import pytest

from helpqa.errors import GatewayError, ModelRefusal, RateLimited, TransportError, UnscriptedPrompt
from helpqa.gateway import (
    ChatRequest,
    EmbeddingVector,
    MockBackend,
    ModelGateway,
    request_digest,
)

from conftest import make_gateway


def req(prompt: str = "hello there", **kwargs) -> ChatRequest:
    kwargs.setdefault("model_id", "chat-x")
    kwargs.setdefault("system_prompt", "sys")
    return ChatRequest(user_prompt=prompt, **kwargs)


def test_chat_request_validation():
    with pytest.raises(ValueError):
        ChatRequest(model_id="m", system_prompt="s", user_prompt="")
    with pytest.raises(ValueError):
        req(temperature=2.5)
    with pytest.raises(ValueError):
        req(max_output_tokens=0)


def test_scripted_chat_reply():
    gateway, _ = make_gateway(script=[("hello", "R")])
    assert gateway.chat(req("well hello there")) == "R"


def test_first_matching_pattern_wins():
    gateway, _ = make_gateway(script=[("hello", "first"), ("hello there", "second")])
    assert gateway.chat(req("hello there")) == "first"


def test_identical_requests_cached_second_serves_without_backend(tmp_path):
    gateway, mock = make_gateway(script=[("hello", "R")], cache_dir=tmp_path / "c")
    first = gateway.chat(req())
    second = gateway.chat(req())
    assert first == second == "R"
    assert len(mock.trace) == 1  # one backend call only


def test_cache_transparency_cold_equals_warm_bytes(tmp_path):
    cache_dir = tmp_path / "c"
    gateway, mock = make_gateway(script=[("hello", "R")], cache_dir=cache_dir)
    gateway.chat(req())
    key = mock.trace[0].digest
    cold = gateway.cache.get(key)
    gateway.chat(req())
    warm = gateway.cache.get(key)
    assert cold == warm
    assert cold is not None


def test_unreachable_endpoint_gives_transport_error_after_max_attempts():
    class DeadBackend:
        def __init__(self):
            self.calls = 0

        def complete(self, request):
            self.calls += 1
            raise TransportError("connection refused")

    backend = DeadBackend()
    gateway = ModelGateway(backend, max_attempts=3, sleeper=lambda s: None)
    with pytest.raises(TransportError):
        gateway.chat(req())
    assert backend.calls == 3


def test_rate_limit_hint_honored():
    delays: list[float] = []

    class FlakyBackend:
        def __init__(self):
            self.calls = 0

        def complete(self, request):
            self.calls += 1
            if self.calls <= 2:
                raise RateLimited("slow down", retry_after=0.01)
            return MockBackend(script=[("", "ok")]).complete(request)

    gateway = ModelGateway(FlakyBackend(), max_attempts=5, sleeper=delays.append)
    assert gateway.chat(req()) == "ok"
    assert delays[:2] == [0.01, 0.01]


def test_empty_model_output_surfaces_as_refusal():
    gateway, _ = make_gateway(script=[("hello", "   ")])
    with pytest.raises(ModelRefusal):
        gateway.chat(req())


def test_unscripted_prompt_names_digest():
    gateway, _ = make_gateway(script=[("nope", "x")])
    digest = request_digest("chat", "chat-x", req().payload())
    with pytest.raises(UnscriptedPrompt) as exc:
        gateway.chat(req())
    assert digest in str(exc.value)


def test_embed_same_text_same_vector_unit_norm():
    gateway, _ = make_gateway()
    a, b, c = gateway.embed(["a", "a", "different"])
    assert a == b
    assert a != c
    for v in (a, b, c):
        assert abs(v.norm() - 1.0) < 1e-6


def test_embed_order_and_length_preserving():
    gateway, _ = make_gateway()
    texts = [f"text {i}" for i in range(7)]
    vectors = gateway.embed(texts)
    assert len(vectors) == len(texts)
    again = gateway.embed(list(reversed(texts)))
    assert again == list(reversed(vectors))


def test_embed_batching_respects_limit_and_preserves_order():
    small, _ = make_gateway(**{"batch_size": 2})
    big, _ = make_gateway(**{"batch_size": 100})
    texts = [f"text {i}" for i in range(5)]
    assert small.embed(texts) == big.embed(texts)
    _, mock = make_gateway(batch_size=2)
    gw = ModelGateway(mock, batch_size=2)
    gw.embed(texts)
    assert len(mock.embed_requests) == 3
    assert [len(b) for b in mock.embed_requests] == [2, 2, 1]


def test_embed_rejects_empty_inputs():
    gateway, _ = make_gateway()
    with pytest.raises(ValueError):
        gateway.embed([])
    with pytest.raises(ValueError):
        gateway.embed(["ok", ""])


def test_mock_embedding_no_collisions_over_fixture_strings():
    # Exhaustively verify distinct fixture strings map to distinct vectors.
    gateway, _ = make_gateway()
    strings = [f"string number {i}" for i in range(100)] + ["", " a", "a ", "A", "a"][1:]
    vectors = gateway.embed(strings)
    assert len({v.values for v in vectors}) == len(strings)


def test_call_trace_records_chat_and_embed_in_order():
    gateway, mock = make_gateway(script=[("hello", "R")])
    gateway.chat(req())
    gateway.embed(["x"])
    assert [c.endpoint for c in mock.trace] == ["chat", "embeddings"]


def test_cache_replay_makes_zero_backend_calls(tmp_path):
    gateway, mock = make_gateway(script=[("hello", "R")], cache_dir=tmp_path / "c")
    gateway.chat(req())
    gateway.embed(["x", "y"])
    n_calls = len(mock.trace)
    # replay the same traffic against the warm cache
    gateway.chat(req())
    gateway.embed(["x", "y"])
    assert len(mock.trace) == n_calls


def test_embedding_vector_unit_rejects_zero_norm():
    with pytest.raises(GatewayError):
        EmbeddingVector.unit([0.0, 0.0, 0.0])


def test_embedding_vector_dot_matches_numpy():
    a = EmbeddingVector.unit([1.0, 2.0, 3.0])
    b = EmbeddingVector.unit([-1.0, 0.5, 2.0])
    assert a.dot(b) == pytest.approx(float(np.dot(a.values, b.values)))


def test_mock_returns_openai_shaped_payload():
    mock = MockBackend(script=[("hi", "payload")])
    raw = mock.complete(req("hi"))
    body = json.loads(raw)
    assert body["choices"][0]["message"]["content"] == "payload"
