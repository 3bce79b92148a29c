"""
Completion Request/Response Types
=================================
Shared by the client, the cache and every backend.
"""

from typing import Protocol

from pydantic import BaseModel, ConfigDict, Field, field_validator

from ..io_utils import canonical_json, hex_digest


class LlmRequest(BaseModel):
    model_config = ConfigDict(frozen=True, protected_namespaces=())

    model: str
    prompt: str
    temperature: float = Field(default=0.0, ge=0)
    max_output_tokens: int = Field(default=1024, ge=1)

    @field_validator('prompt')
    @classmethod
    def _non_empty(cls, v: str) -> str:
        if not v:
            raise ValueError('prompt must be non-empty')
        return v


class LlmResponse(BaseModel):
    model_config = ConfigDict(frozen=True)

    text: str
    backend: str
    cached: bool = False
    latency_ms: int = Field(default=0, ge=0)


class TransientBackendError(Exception):
    """Network failure, timeout or HTTP 408/429/5xx: worth retrying."""


class PermanentBackendError(Exception):
    """Any other backend refusal: retrying will not help."""

    def __init__(self, message: str, status: int = 0):
        self.status = status
        super().__init__(message)


class LlmBackend(Protocol):
    """Anything that turns a request into completion text."""

    name: str

    def generate(self, request: LlmRequest) -> str:
        ...


def cache_key(request: LlmRequest) -> str:
    """
    32-hex key over (model, prompt, temperature with 6 decimals, max_output_tokens).

    The digest input is the compact JSON array
    ["<model>","<prompt>","<t.tttttt>",<max_output_tokens>].
    """
    payload = [
        request.model,
        request.prompt,
        f"{request.temperature:.6f}",
        request.max_output_tokens,
    ]
    return hex_digest(canonical_json(payload))
