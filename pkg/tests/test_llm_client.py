"""
Tests for the provider chokepoint: the chat wire format, retry/backoff
behaviour against a mocked transport, the scripted stub and the embedders.
"""

import httpx
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from business.exceptions.errors import (
    ConfigInvalidError,
    DimensionDriftError,
    EmbedFailureError,
    MalformedProviderResponseError,
    RateLimitedError,
    StubExhaustedError,
    TransportFailureError,
)
from business.models.llm import ChatRequest, EmbedderConfig, LlmConfig, ProviderKind
from business.services.llm_service import (
    HashEmbedder,
    RemoteEmbedder,
    RemoteLlmClient,
    ScriptedLlmClient,
    build_embedder,
    build_llm_client,
    cosine,
)

OK = {"choices": [{"message": {"role": "assistant", "content": "Conclusion: YES"}}],
      "usage": {"prompt_tokens": 12, "completion_tokens": 3}}


@pytest.fixture(autouse=True)
def api_key(monkeypatch):
    monkeypatch.setenv("FLARE_API_KEY", "test-key")


def _client(statuses, seen=None, **config):
    """Remote client whose transport answers with the given statuses in turn."""
    replies = list(statuses)

    def handler(request: httpx.Request) -> httpx.Response:
        if seen is not None:
            seen.append(request)
        status = replies.pop(0)
        if isinstance(status, Exception):
            raise status
        if status == 200:
            return httpx.Response(200, json=OK)
        return httpx.Response(status, json={"error": "nope"})

    cfg = LlmConfig(endpoint="https://llm.test/v1", base_backoff=0.5, **config)
    return RemoteLlmClient(cfg, transport=httpx.MockTransport(handler), sleep=lambda s: None)


def _request(client):
    return client.new_request("You are an expert at rational reasoning.",
                              "Decide whether the resident evacuated.", "predict:R1:decision")


# ---------------------------------------------------------------------
# Wire format
# ---------------------------------------------------------------------
def test_chat_body_matches_golden(golden_dir):
    seen = []
    client = _client([200], seen)
    client.complete(_request(client))
    expected = (golden_dir / "chat_request_body.json").read_bytes()
    assert seen[0].content == expected
    assert seen[0].url.path == "/v1/chat/completions"
    assert seen[0].headers["Authorization"] == "Bearer test-key"


def test_response_fields():
    client = _client([200])
    response = client.complete(_request(client))
    assert response.content == "Conclusion: YES"
    assert response.token_usage == {"prompt_tokens": 12, "completion_tokens": 3}
    assert response.provider_latency >= 0


def test_chat_request_rejects_empty_text():
    with pytest.raises(ValueError):
        ChatRequest(system_text="", user_text="x")


# ---------------------------------------------------------------------
# Retries
# ---------------------------------------------------------------------
def test_rate_limit_then_success_backs_off_exponentially():
    client = _client([429, 429, 200])
    assert client.complete(_request(client)).content == "Conclusion: YES"
    assert client.backoffs == [0.5, 1.0]


def test_rate_limit_exhausted():
    seen = []
    client = _client([429, 429, 429], seen)
    with pytest.raises(RateLimitedError):
        client.complete(_request(client))
    assert len(seen) == 3


def test_server_errors_exhausted():
    client = _client([500, 502, 503])
    with pytest.raises(TransportFailureError) as exc:
        client.complete(_request(client))
    assert exc.value.details["status"] == 503


def test_network_errors_are_retried():
    client = _client([httpx.ConnectError("refused"), 200])
    assert client.complete(_request(client)).content == "Conclusion: YES"
    assert client.backoffs == [0.5]


def test_client_error_is_not_retried():
    seen = []
    client = _client([400, 200], seen)
    with pytest.raises(TransportFailureError):
        client.complete(_request(client))
    assert len(seen) == 1


def test_non_json_response():
    cfg = LlmConfig(endpoint="https://llm.test/v1")
    transport = httpx.MockTransport(lambda r: httpx.Response(200, text="<html>"))
    client = RemoteLlmClient(cfg, transport=transport, sleep=lambda s: None)
    with pytest.raises(MalformedProviderResponseError):
        client.complete(_request(client))


def test_response_without_content():
    cfg = LlmConfig(endpoint="https://llm.test/v1")
    transport = httpx.MockTransport(lambda r: httpx.Response(200, json={"choices": []}))
    client = RemoteLlmClient(cfg, transport=transport, sleep=lambda s: None)
    with pytest.raises(MalformedProviderResponseError):
        client.complete(_request(client))


def test_missing_api_key(monkeypatch):
    monkeypatch.delenv("FLARE_API_KEY", raising=False)
    with pytest.raises(ConfigInvalidError):
        RemoteLlmClient(LlmConfig())


def test_api_key_env_must_be_a_variable_name():
    with pytest.raises(ValueError):
        LlmConfig(api_key_env="sk-live-123")


# ---------------------------------------------------------------------
# Scripted stub
# ---------------------------------------------------------------------
def test_stub_consumes_single_use_entries():
    llm = ScriptedLlmClient([{"match": "resident", "response": "first"},
                             {"match": "resident", "response": "second"}])
    req = llm.new_request("s", "the resident", "r1")
    assert [llm.complete(req).content for _ in range(2)] == ["first", "second"]
    with pytest.raises(StubExhaustedError):
        llm.complete(req)


def test_stub_request_id_pattern():
    llm = ScriptedLlmClient([{"match": "x", "response": "train reply", "request_id": "train:*", "repeat": True},
                             {"match": "x", "response": "other", "repeat": True}])
    assert llm.complete(llm.new_request("s", "x", "train:R1:decision")).content == "train reply"
    assert llm.complete(llm.new_request("s", "x", "predict:R1:decision")).content == "other"


def test_stub_records_calls(stub_llm):
    stub_llm.complete(stub_llm.new_request("s", "summary of the resident's threat assessment", "kb:R1:threat"))
    assert stub_llm.calls[0]["request_id"] == "kb:R1:threat"
    assert stub_llm.calls[0]["response"].endswith("Score: 3")


def test_stub_entry_needs_response():
    with pytest.raises(ConfigInvalidError):
        ScriptedLlmClient([{"match": "x"}])


def test_stub_transcript_must_be_a_list(tmp_path):
    path = tmp_path / "t.yaml"
    path.write_text("match: x\nresponse: y\n", encoding="utf-8")
    with pytest.raises(ConfigInvalidError):
        ScriptedLlmClient.from_file(path)


# ---------------------------------------------------------------------
# Embedders
# ---------------------------------------------------------------------
def test_hash_embedder_is_deterministic_and_normalised():
    a = HashEmbedder(dim=32, seed=4).embed("smoke near the house")
    b = HashEmbedder(dim=32, seed=4).embed("smoke near the house")
    assert np.array_equal(a, b)
    assert a.shape == (32,)
    assert np.isclose(np.linalg.norm(a), 1.0)


def test_hash_embedder_ignores_token_order_and_case():
    e = HashEmbedder(dim=16)
    assert np.allclose(e.embed("Smoke near house"), e.embed("house near smoke"))


def test_hash_embedder_seed_matters():
    assert not np.allclose(HashEmbedder(16, seed=0).embed("smoke"), HashEmbedder(16, seed=1).embed("smoke"))


def test_hash_embedder_needs_tokens():
    with pytest.raises(EmbedFailureError):
        HashEmbedder(dim=8).embed("!!! ...")


def _embedder(vector, dim):
    transport = httpx.MockTransport(lambda r: httpx.Response(200, json={"data": [{"embedding": vector}]}))
    cfg = EmbedderConfig(provider=ProviderKind.REMOTE, endpoint="https://llm.test/v1", dim=dim)
    return RemoteEmbedder(cfg, transport=transport, sleep=lambda s: None)


def test_remote_embedder():
    e = _embedder([0.1, 0.2, 0.3], dim=3)
    assert np.allclose(e.embed("smoke"), [0.1, 0.2, 0.3])
    assert e.provider_id == "remote-text-embedding-3-small-3"


def test_remote_embedder_dimension_drift():
    with pytest.raises(DimensionDriftError):
        _embedder([0.1, 0.2, 0.3], dim=4).embed("smoke")


# ---------------------------------------------------------------------
# Factories
# ---------------------------------------------------------------------
def test_build_stub_client_needs_transcript(tmp_path):
    with pytest.raises(ConfigInvalidError):
        build_llm_client(LlmConfig(provider=ProviderKind.STUB))
    with pytest.raises(ConfigInvalidError):
        build_llm_client(LlmConfig(provider=ProviderKind.STUB, transcript=tmp_path / "missing.yaml"))


def test_build_clients(fixture_config):
    assert isinstance(build_llm_client(fixture_config.llm), ScriptedLlmClient)
    embedder = build_embedder(fixture_config.embedder)
    assert isinstance(embedder, HashEmbedder)
    assert embedder.dim == 64
    assert isinstance(build_llm_client(LlmConfig()), RemoteLlmClient)


# ---------------------------------------------------------------------
# Cosine
# ---------------------------------------------------------------------
_vectors = arrays(np.float64, 8, elements=st.floats(min_value=-100, max_value=100, allow_nan=False))


@given(_vectors.filter(lambda v: np.linalg.norm(v) > 1e-3))
def test_cosine_with_itself_is_one(v):
    assert cosine(v, v) == pytest.approx(1.0)


@given(st.floats(min_value=-100, max_value=100).filter(lambda x: abs(x) > 1e-3),
       st.floats(min_value=-100, max_value=100).filter(lambda x: abs(x) > 1e-3))
def test_cosine_of_orthogonal_vectors_is_zero(a, b):
    assert cosine(np.array([a, 0.0]), np.array([0.0, b])) == 0.0


def test_cosine_with_zero_vector():
    assert cosine(np.zeros(3), np.ones(3)) == 0.0
