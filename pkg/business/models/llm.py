"""
Chat and embedding provider types: the request/response pair sent over the
OpenAI-compatible wire, plus the provider configurations.
"""

import json
from enum import Enum
from pathlib import Path
from typing import Dict, Optional

from pydantic import BaseModel, ConfigDict, Field

from app_config import (
    API_KEY_ENV,
    DEFAULT_BASE_BACKOFF,
    DEFAULT_EMBED_DIM,
    DEFAULT_EMBED_MODEL,
    DEFAULT_ENDPOINT,
    DEFAULT_MAX_ATTEMPTS,
    DEFAULT_MAX_TOKENS,
    DEFAULT_MODEL,
    DEFAULT_TIMEOUT,
)


class ProviderKind(str, Enum):
    REMOTE = "remote"
    STUB = "stub"


class ChatRequest(BaseModel):
    """One system/user exchange."""
    model_config = ConfigDict(protected_namespaces=())

    model_name: str = DEFAULT_MODEL
    system_text: str = Field(min_length=1)
    user_text: str = Field(min_length=1)
    temperature: float = Field(default=0.0, ge=0.0)
    max_tokens: int = Field(default=DEFAULT_MAX_TOKENS, ge=1)
    request_id: str = ""

    def to_body(self) -> Dict:
        """Chat-completions body; key order is part of the wire contract."""
        return {
            "model": self.model_name,
            "messages": [
                {"role": "system", "content": self.system_text},
                {"role": "user", "content": self.user_text},
            ],
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
        }

    def body_json(self) -> str:
        return json.dumps(self.to_body(), indent=2, ensure_ascii=False) + "\n"


class ChatResponse(BaseModel):
    content: str
    token_usage: Dict[str, int] = Field(default_factory=dict)
    provider_latency: float = 0.0


_ENV_NAME = r"^[A-Z_][A-Z0-9_]*$"


class LlmConfig(BaseModel):
    """Chat provider settings. Only the name of the API-key variable is configurable."""
    model_config = ConfigDict(extra="forbid", protected_namespaces=())

    provider: ProviderKind = ProviderKind.REMOTE
    endpoint: str = DEFAULT_ENDPOINT
    api_key_env: str = Field(default=API_KEY_ENV, pattern=_ENV_NAME)
    model_name: str = DEFAULT_MODEL
    temperature: float = Field(default=0.0, ge=0.0)
    max_tokens: int = Field(default=DEFAULT_MAX_TOKENS, ge=1)
    max_attempts: int = Field(default=DEFAULT_MAX_ATTEMPTS, ge=1)
    base_backoff: float = Field(default=DEFAULT_BASE_BACKOFF, ge=0.0)
    concurrency_bound: int = Field(default=4, ge=1)
    timeout: float = Field(default=DEFAULT_TIMEOUT, gt=0.0)
    transcript: Optional[Path] = None


class EmbedderConfig(BaseModel):
    """Embedding provider settings; the stub is the seeded hash embedder."""
    model_config = ConfigDict(extra="forbid", protected_namespaces=())

    provider: ProviderKind = ProviderKind.STUB
    endpoint: str = DEFAULT_ENDPOINT
    api_key_env: str = Field(default=API_KEY_ENV, pattern=_ENV_NAME)
    model_name: str = DEFAULT_EMBED_MODEL
    dim: int = Field(default=DEFAULT_EMBED_DIM, ge=1)
    seed: int = 0
    max_attempts: int = Field(default=DEFAULT_MAX_ATTEMPTS, ge=1)
    base_backoff: float = Field(default=DEFAULT_BASE_BACKOFF, ge=0.0)
    concurrency_bound: int = Field(default=4, ge=1)
    timeout: float = Field(default=DEFAULT_TIMEOUT, gt=0.0)
