"""
Live Chat-Completion Backend
============================
HTTP JSON backend for OpenAI-compatible chat-completion endpoints.

Request  POST {base_url}/chat/completions
    {"model": <model>, "messages": [{"role": "user", "content": <prompt>}],
     "temperature": <temperature>, "max_tokens": <max_output_tokens>}
    Authorization: Bearer $CHRONOWEAVE_API_KEY
Response choices[0].message.content (string)
"""

import logging
import os
from typing import Optional

import httpx

from ..errors import ConfigError, ProtocolError
from .base import LlmRequest, PermanentBackendError, TransientBackendError
from .mock_backend import MockBackend

logger = logging.getLogger(__name__)

API_KEY_ENV = 'CHRONOWEAVE_API_KEY'
DEFAULT_BASE_URL = 'https://api.openai.com/v1'
DEFAULT_TIMEOUT_S = 60.0
TRANSIENT_STATUSES = frozenset({408, 429})


def is_transient_status(status: int) -> bool:
    return status in TRANSIENT_STATUSES or 500 <= status < 600


class LiveBackend:
    """Chat-completion endpoint client (one POST per request)."""

    name = 'live'

    def __init__(self, base_url: str = DEFAULT_BASE_URL, api_key: Optional[str] = None,
                 timeout: float = DEFAULT_TIMEOUT_S,
                 transport: Optional[httpx.BaseTransport] = None):
        api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV)
        if not api_key:
            raise ConfigError(f"live backend needs an API key in ${API_KEY_ENV}")
        self.base_url = base_url.rstrip('/')
        self._client = httpx.Client(
            transport=transport,
            timeout=timeout,
            headers={'Authorization': f'Bearer {api_key}', 'Content-Type': 'application/json'},
        )

    def close(self) -> None:
        self._client.close()

    def generate(self, request: LlmRequest) -> str:
        payload = {
            'model': request.model,
            'messages': [{'role': 'user', 'content': request.prompt}],
            'temperature': request.temperature,
            'max_tokens': request.max_output_tokens,
        }

        logger.debug(f"POST {self.base_url}/chat/completions model={request.model} "
                     f"prompt_chars={len(request.prompt)}")
        try:
            response = self._client.post(f"{self.base_url}/chat/completions", json=payload)
        except httpx.TransportError as e:
            # connect/read failures and timeouts
            raise TransientBackendError(f"{type(e).__name__}: {e}") from e

        if is_transient_status(response.status_code):
            raise TransientBackendError(f"HTTP {response.status_code}")
        if not 200 <= response.status_code < 300:
            raise PermanentBackendError(f"HTTP {response.status_code}: {response.text[:200]}",
                                        status=response.status_code)

        try:
            data = response.json()
            content = data['choices'][0]['message']['content']
        except (ValueError, KeyError, IndexError, TypeError) as e:
            raise ProtocolError(f"unexpected chat-completion payload: {e}") from e
        if content is None:
            content = ''
        if not isinstance(content, str):
            raise ProtocolError(f"message content is {type(content).__name__}, expected string")
        return content


def get_backend(name: str, **kwargs):
    """
    Factory for backends by name.

    Args:
        name: 'mock' or 'live'
        kwargs: Passed to LiveBackend (base_url, timeout, transport, api_key)
    """
    if name == 'mock':
        return MockBackend()
    if name == 'live':
        return LiveBackend(**kwargs)
    raise ValueError(f"Unknown backend: {name}. Choose from ['live', 'mock']")
