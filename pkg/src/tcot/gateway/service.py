"""Gateway wrapping a backend with retries, rate limiting and caching.

The gateway is safe to share across threads: the cache and rate limiter
serialize internally, and concurrent requests for the same cache key are
coalesced into a single backend call.
"""

from __future__ import annotations

import logging
import math
import random
import threading
import time
from pathlib import Path
from typing import Callable, Sequence

from ..errors import BackendUnavailable, ItemTooLong
from .cache import ResponseCache
from .ratelimit import RateLimiter
from .types import (
    ChatBackend,
    ChatRequest,
    ChatResponse,
    EmbeddingBackend,
    Part,
    RetryPolicy,
    TextPart,
    TransientBackendError,
    hash_request,
)

logger = logging.getLogger(__name__)


def estimate_text_tokens(text: str) -> int:
    """Fallback token estimate at 4 characters per token, rounded up."""
    return math.ceil(len(text) / 4)


class VlmGateway:
    def __init__(
        self,
        backend: ChatBackend,
        model_id: str,
        embedding_backend: EmbeddingBackend | None = None,
        cache_dir: Path | str | None = None,
        retry: RetryPolicy = RetryPolicy(),
        requests_per_minute: int | None = None,
        sleep: Callable[[float], None] = time.sleep,
        backoff_seed: int = 0,
    ):
        self.backend = backend
        self.model_id = model_id
        self.embedding_backend = embedding_backend
        self.cache = ResponseCache(cache_dir) if cache_dir is not None else None
        self.retry = retry
        self.limiter = (
            RateLimiter(requests_per_minute, sleep=sleep)
            if requests_per_minute
            else None
        )
        self._sleep = sleep
        self._jitter = random.Random(backoff_seed)
        self._locks_guard = threading.Lock()
        self._key_locks: dict[str, threading.Lock] = {}
        self.backend_calls = 0
        self.cache_hits = 0

    def request(
        self,
        parts: Sequence[Part],
        temperature: float = 0.0,
        max_output_tokens: int = 1024,
        seed: int | None = None,
    ) -> ChatRequest:
        """Build a request against this gateway's configured model."""
        return ChatRequest(
            model_id=self.model_id,
            parts=tuple(parts),
            temperature=temperature,
            max_output_tokens=max_output_tokens,
            seed=seed,
        )

    def complete_chat(self, request: ChatRequest) -> ChatResponse:
        """Complete a chat call, via cache when enabled."""
        if self.cache is None:
            return self._call_with_retry(request)

        key = hash_request(request)
        with self._key_lock(key):
            cached = self.cache.load(key)
            if cached is not None:
                self.cache_hits += 1
                return cached
            response = self._call_with_retry(request)
            self.cache.store(key, response)
            return response

    def embed(self, items: Sequence[Part]) -> list[list[float]]:
        """Embed text/image items into L2-normalized vectors."""
        if not items:
            raise ValueError("items must be non-empty")
        backend = self.embedding_backend
        if backend is None:
            raise BackendUnavailable("no embedding backend configured")
        limit = backend.text_token_limit
        if limit is not None:
            for item in items:
                if isinstance(item, TextPart) and estimate_text_tokens(item.text) > limit:
                    raise ItemTooLong(
                        f"text item of ~{estimate_text_tokens(item.text)} tokens "
                        f"exceeds the backend limit of {limit}"
                    )
        vectors = backend.embed(items)
        out = []
        for vec in vectors:
            norm = math.sqrt(sum(x * x for x in vec))
            if norm == 0.0:
                raise ValueError("embedding backend returned a zero vector")
            out.append([x / norm for x in vec])
        return out

    # Internals ---------------------------------------------------------

    def _key_lock(self, key: str) -> threading.Lock:
        with self._locks_guard:
            lock = self._key_locks.get(key)
            if lock is None:
                lock = self._key_locks[key] = threading.Lock()
            return lock

    def _call_with_retry(self, request: ChatRequest) -> ChatResponse:
        last: TransientBackendError | None = None
        for attempt in range(self.retry.max_attempts):
            if self.limiter is not None:
                self.limiter.acquire()
            try:
                self.backend_calls += 1
                return self.backend.complete(request)
            except TransientBackendError as exc:
                if exc.kind not in self.retry.retryable:
                    raise
                last = exc
                if attempt + 1 < self.retry.max_attempts:
                    backoff = self.retry.base_backoff_ms * (2**attempt)
                    backoff += self._jitter.uniform(0, self.retry.base_backoff_ms)
                    logger.warning(
                        "retryable backend error (%s), attempt %d/%d, backing off %.0f ms: %s",
                        exc.kind,
                        attempt + 1,
                        self.retry.max_attempts,
                        backoff,
                        exc,
                    )
                    self._sleep(backoff / 1000.0)
        raise BackendUnavailable(
            f"backend failed after {self.retry.max_attempts} attempts: {last}"
        ) from last
