# Completion backends, cache and client
from .base import LlmRequest, LlmResponse, TransientBackendError, cache_key
from .cache import ResponseCache
from .client import ClientStats, LlmClient, RetryPolicy, complete
from .live_backend import LiveBackend, get_backend
from .mock_backend import MockBackend, mock_complete

__all__ = [
    'ClientStats', 'LiveBackend', 'LlmClient', 'LlmRequest', 'LlmResponse',
    'MockBackend', 'ResponseCache', 'RetryPolicy', 'TransientBackendError',
    'cache_key', 'complete', 'get_backend', 'mock_complete',
]
