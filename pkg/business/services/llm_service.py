"""
The single chokepoint for provider traffic. Remote clients speak the
OpenAI-compatible chat-completions and embeddings protocol over httpx with
tenacity-driven retries; the scripted stub and the hash embedder serve
offline runs and tests.
"""

import fnmatch
import hashlib
import json
import logging
import os
import re
import threading
import time
from collections import Counter
from pathlib import Path
from typing import Callable, Dict, List, Optional

import httpx
import numpy as np
import yaml
from tenacity import Retrying, retry_if_exception_type, stop_after_attempt, wait_exponential

from app_config import DEFAULT_MAX_TOKENS, DEFAULT_MODEL
from business.exceptions.errors import (
    ConfigInvalidError,
    DimensionDriftError,
    EmbedFailureError,
    MalformedProviderResponseError,
    RateLimitedError,
    StubExhaustedError,
    TransportFailureError,
)
from business.models.llm import ChatRequest, ChatResponse, EmbedderConfig, LlmConfig, ProviderKind

logger = logging.getLogger(__name__)


class ChatClient:
    """Request construction shared by every chat provider."""

    model_name: str = DEFAULT_MODEL
    temperature: float = 0.0
    max_tokens: int = DEFAULT_MAX_TOKENS

    def new_request(self, system_text: str, user_text: str, request_id: str) -> ChatRequest:
        return ChatRequest(
            model_name=self.model_name,
            system_text=system_text,
            user_text=user_text,
            temperature=self.temperature,
            max_tokens=self.max_tokens,
            request_id=request_id,
        )

    def complete(self, request: ChatRequest) -> ChatResponse:
        raise NotImplementedError


class _RetryableStatus(Exception):
    def __init__(self, status_code: int):
        super().__init__(f"HTTP {status_code}")
        self.status_code = status_code


class _HttpProvider:
    """Shared POST-with-retry plumbing for the remote chat and embedding clients."""

    def __init__(self, config, transport: Optional[httpx.BaseTransport] = None,
                 sleep: Callable[[float], None] = time.sleep):
        api_key = os.environ.get(config.api_key_env)
        if not api_key:
            raise ConfigInvalidError(
                f"Environment variable {config.api_key_env} is not set", variable=config.api_key_env
            )
        self.config = config
        self.sleep = sleep
        self.backoffs: List[float] = []
        self._semaphore = threading.BoundedSemaphore(config.concurrency_bound)
        self._client = httpx.Client(
            base_url=config.endpoint.rstrip("/"),
            timeout=config.timeout,
            transport=transport,
            headers={"Authorization": f"Bearer {api_key}", "Content-Type": "application/json"},
        )

    def _record_sleep(self, seconds: float) -> None:
        self.backoffs.append(seconds)
        logger.warning("Provider busy, retrying in %.2fs", seconds)
        self.sleep(seconds)

    def _post(self, path: str, content: bytes) -> Dict:
        retrying = Retrying(
            stop=stop_after_attempt(self.config.max_attempts),
            wait=wait_exponential(multiplier=self.config.base_backoff, exp_base=2, min=0),
            retry=retry_if_exception_type((_RetryableStatus, httpx.TransportError)),
            sleep=self._record_sleep,
            reraise=True,
        )
        with self._semaphore:
            try:
                for attempt in retrying:
                    with attempt:
                        response = self._client.post(path, content=content)
                        if response.status_code == 429 or response.status_code >= 500:
                            raise _RetryableStatus(response.status_code)
            except _RetryableStatus as e:
                if e.status_code == 429:
                    raise RateLimitedError("Rate limited after retries", status=429)
                raise TransportFailureError(f"Provider error {e.status_code}", status=e.status_code)
            except httpx.TransportError as e:
                raise TransportFailureError(f"Network error: {e}")

        if response.status_code >= 400:
            raise TransportFailureError(
                f"Provider rejected request ({response.status_code})", status=response.status_code
            )
        try:
            return response.json()
        except ValueError:
            raise MalformedProviderResponseError("Provider response is not JSON")

    def close(self) -> None:
        self._client.close()


class RemoteLlmClient(_HttpProvider, ChatClient):
    """Chat completions against an OpenAI-compatible endpoint."""

    @property
    def model_name(self) -> str:
        return self.config.model_name

    @property
    def temperature(self) -> float:
        return self.config.temperature

    @property
    def max_tokens(self) -> int:
        return self.config.max_tokens

    def complete(self, request: ChatRequest) -> ChatResponse:
        started = time.perf_counter()
        data = self._post("/chat/completions", request.body_json().encode("utf-8"))
        try:
            content = data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError):
            raise MalformedProviderResponseError("Response has no choices[0].message.content")
        if not isinstance(content, str):
            raise MalformedProviderResponseError("Message content is not text")
        usage = {k: v for k, v in (data.get("usage") or {}).items() if isinstance(v, int)}
        return ChatResponse(
            content=content,
            token_usage=usage,
            provider_latency=time.perf_counter() - started,
        )


class ScriptedLlmClient(ChatClient):
    """
    Deterministic stand-in for a chat provider.

    Each transcript entry is {match, response, request_id?, repeat?}. A request
    is served by the first unconsumed entry whose match substrings all occur in
    the prompt and whose request_id pattern (fnmatch) accepts the request id.
    Entries with repeat: true are never consumed.
    """

    def __init__(self, entries: List[Dict], name: str = "stub"):
        self.entries = [self._normalise(e) for e in entries]
        self.name = name
        self.calls: List[Dict] = []
        self._consumed = set()
        self._lock = threading.Lock()

    @staticmethod
    def _normalise(entry: Dict) -> Dict:
        if "response" not in entry:
            raise ConfigInvalidError("Transcript entries need a response", entry=str(entry))
        match = entry.get("match") or []
        return {
            "match": [match] if isinstance(match, str) else list(match),
            "response": str(entry["response"]),
            "request_id": entry.get("request_id"),
            "repeat": bool(entry.get("repeat", False)),
        }

    @classmethod
    def from_file(cls, path: Path) -> "ScriptedLlmClient":
        """Loads a YAML or JSON transcript (a list of entries)."""
        with open(path, "r", encoding="utf-8") as f:
            entries = yaml.safe_load(f) or []
        if not isinstance(entries, list):
            raise ConfigInvalidError(f"Transcript {path} must be a list", path=str(path))
        return cls(entries, name=Path(path).name)

    def _accepts(self, entry: Dict, request: ChatRequest, text: str) -> bool:
        if entry["request_id"] and not fnmatch.fnmatchcase(request.request_id, entry["request_id"]):
            return False
        return all(m in text for m in entry["match"])

    def complete(self, request: ChatRequest) -> ChatResponse:
        text = request.system_text + "\n" + request.user_text
        with self._lock:
            for i, entry in enumerate(self.entries):
                if i in self._consumed or not self._accepts(entry, request, text):
                    continue
                if not entry["repeat"]:
                    self._consumed.add(i)
                self.calls.append({
                    "request_id": request.request_id,
                    "system": request.system_text,
                    "user": request.user_text,
                    "response": entry["response"],
                })
                return ChatResponse(content=entry["response"])
        raise StubExhaustedError(
            f"No transcript entry for request '{request.request_id}'", request_id=request.request_id
        )

    def close(self) -> None:
        pass


# ---------- Embedders ----------

class HashEmbedder:
    """
    Seeded token-multiset embedder: each token maps to a fixed Gaussian vector
    derived from sha256(seed, token); a text embeds as the normalised sum.
    """

    _TOKEN = re.compile(r"[a-z0-9]+")

    def __init__(self, dim: int, seed: int = 0):
        self.dim = dim
        self.seed = seed
        self.provider_id = f"hash-{dim}-{seed}"
        self._token_cache: Dict[str, np.ndarray] = {}

    def _token_vector(self, token: str) -> np.ndarray:
        vec = self._token_cache.get(token)
        if vec is None:
            digest = hashlib.sha256(f"{self.seed}:{token}".encode("utf-8")).digest()
            rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
            vec = rng.standard_normal(self.dim)
            self._token_cache[token] = vec
        return vec

    def embed(self, text: str) -> np.ndarray:
        tokens = Counter(self._TOKEN.findall(text.lower()))
        if not tokens:
            raise EmbedFailureError("Cannot embed text without tokens")
        total = np.zeros(self.dim)
        for token in sorted(tokens):
            total += tokens[token] * self._token_vector(token)
        norm = np.linalg.norm(total)
        if norm == 0:
            raise EmbedFailureError("Embedding has zero norm")
        return total / norm


class RemoteEmbedder(_HttpProvider):
    """Embeddings endpoint client; rejects vectors of an unexpected dimension."""

    @property
    def dim(self) -> int:
        return self.config.dim

    @property
    def provider_id(self) -> str:
        return f"remote-{self.config.model_name}-{self.config.dim}"

    def embed(self, text: str) -> np.ndarray:
        if not text.strip():
            raise EmbedFailureError("Cannot embed empty text")
        body = {"model": self.config.model_name, "input": text}
        data = self._post("/embeddings", json.dumps(body).encode("utf-8"))
        try:
            vector = np.asarray(data["data"][0]["embedding"], dtype=float)
        except (KeyError, IndexError, TypeError, ValueError):
            raise MalformedProviderResponseError("Response has no data[0].embedding")
        if vector.shape != (self.config.dim,):
            raise DimensionDriftError(
                f"Expected dimension {self.config.dim}, got {vector.shape[-1] if vector.ndim else 0}"
            )
        return vector


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity; 0 when either vector is zero."""
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


# ---------- Factories ----------

def build_llm_client(config: LlmConfig, transport: Optional[httpx.BaseTransport] = None,
                     sleep: Callable[[float], None] = time.sleep):
    """Creates the chat provider named by the config."""
    if config.provider is ProviderKind.STUB:
        if config.transcript is None:
            raise ConfigInvalidError("The scripted stub needs a transcript file")
        if not Path(config.transcript).exists():
            raise ConfigInvalidError(f"Transcript {config.transcript} not found")
        return ScriptedLlmClient.from_file(config.transcript)
    if config.provider is ProviderKind.REMOTE:
        return RemoteLlmClient(config, transport=transport, sleep=sleep)
    raise ConfigInvalidError(f"Unsupported provider: {config.provider}")


def build_embedder(config: EmbedderConfig, transport: Optional[httpx.BaseTransport] = None,
                   sleep: Callable[[float], None] = time.sleep):
    """Creates the embedding provider named by the config."""
    if config.provider is ProviderKind.STUB:
        return HashEmbedder(config.dim, config.seed)
    if config.provider is ProviderKind.REMOTE:
        return RemoteEmbedder(config, transport=transport, sleep=sleep)
    raise ConfigInvalidError(f"Unsupported embedder: {config.provider}")
