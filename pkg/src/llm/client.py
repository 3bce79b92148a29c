"""
Completion Client
=================
Cache-first completion with bounded retries and a cap on in-flight backend
calls. Safe for concurrent callers: concurrent misses on the same key wait
on that key's lock and then read the stored response (single-flight).
"""

import logging
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

from tenacity import (RetryCallState, Retrying, retry_if_exception_type,
                      stop_after_attempt, wait_random_exponential)

from ..errors import BackendError, ProtocolError
from .base import (LlmBackend, LlmRequest, LlmResponse, PermanentBackendError,
                   TransientBackendError, cache_key)
from .cache import ResponseCache

logger = logging.getLogger(__name__)

DEFAULT_MAX_IN_FLIGHT = 4


@dataclass(frozen=True)
class RetryPolicy:
    """
    Full-jitter exponential backoff: the n-th retry sleeps
    uniform(0, base_delay_s * factor ** (n - 1)).
    """

    max_retries: int = 3
    base_delay_s: float = 1.0
    factor: float = 2.0
    max_delay_s: float = 30.0


@dataclass
class ClientStats:
    backend_calls: int = 0
    cache_hits: int = 0
    retries: int = 0
    failures: int = 0
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    def bump(self, name: str, amount: int = 1) -> None:
        with self._lock:
            setattr(self, name, getattr(self, name) + amount)

    def to_dict(self) -> dict:
        return {
            'backend_calls': self.backend_calls,
            'cache_hits': self.cache_hits,
            'retries': self.retries,
            'failures': self.failures,
        }


class LlmClient:
    """
    Backend + cache + retry policy.

    Args:
        backend: Live or mock backend
        cache: Response cache (holds the single-flight locks)
        max_in_flight: Cap on concurrent backend calls
        retry: Backoff settings
        sleep: Sleep function used between retries (tests pass a no-op)
    """

    def __init__(self, backend: LlmBackend, cache: ResponseCache,
                 max_in_flight: int = DEFAULT_MAX_IN_FLIGHT,
                 retry: Optional[RetryPolicy] = None,
                 sleep: Callable[[float], None] = time.sleep):
        if max_in_flight < 1:
            raise ValueError('max_in_flight must be at least 1')
        self.backend = backend
        self.cache = cache
        self.retry = retry or RetryPolicy()
        self.stats = ClientStats()
        self._sleep = sleep
        self._in_flight = threading.BoundedSemaphore(max_in_flight)

    def _on_retry(self, state: RetryCallState) -> None:
        self.stats.bump('retries')
        exc = state.outcome.exception() if state.outcome else None
        logger.warning(f"Transient backend failure (attempt {state.attempt_number}): {exc}")

    def _call_backend(self, request: LlmRequest) -> str:
        retrying = Retrying(
            stop=stop_after_attempt(self.retry.max_retries + 1),
            wait=wait_random_exponential(multiplier=self.retry.base_delay_s,
                                         exp_base=self.retry.factor,
                                         max=self.retry.max_delay_s),
            retry=retry_if_exception_type(TransientBackendError),
            before_sleep=self._on_retry,
            sleep=self._sleep,
            reraise=True,
        )
        attempts = 0
        try:
            for attempt in retrying:
                with attempt:
                    attempts += 1
                    self.stats.bump('backend_calls')
                    with self._in_flight:
                        text = self.backend.generate(request)
                    if not isinstance(text, str):
                        raise ProtocolError(f"backend {self.backend.name} returned {type(text).__name__}")
                    return text
        except TransientBackendError as e:
            self.stats.bump('failures')
            raise BackendError(
                f"backend {self.backend.name} failed after {attempts} attempts: {e}", cause=e
            ) from e
        except PermanentBackendError as e:
            self.stats.bump('failures')
            raise BackendError(f"backend {self.backend.name} refused the request: {e}", cause=e) from e
        except ProtocolError:
            self.stats.bump('failures')
            raise
        raise BackendError(f"backend {self.backend.name} produced no result")

    def complete(self, request: LlmRequest) -> LlmResponse:
        """
        Return the completion for `request`, from cache when possible.

        Raises:
            BackendError: retries exhausted or permanent refusal
            ProtocolError: malformed backend payload
        """
        key = cache_key(request)
        with self.cache.lock(key):
            entry = self.cache.get(key)
            if entry is not None:
                self.stats.bump('cache_hits')
                return LlmResponse(
                    text=entry['response']['text'],
                    backend=entry['response'].get('backend', self.backend.name),
                    cached=True,
                    latency_ms=0,
                )

            started = time.perf_counter()
            text = self._call_backend(request)
            latency_ms = int((time.perf_counter() - started) * 1000)
            self.cache.put(key, request, text, self.backend.name)

        return LlmResponse(text=text, backend=self.backend.name, cached=False, latency_ms=latency_ms)


def complete(request: LlmRequest, backend: LlmBackend, cache: ResponseCache) -> LlmResponse:
    """One-off completion with a fresh client (default retry policy)."""
    return LlmClient(backend, cache).complete(request)
