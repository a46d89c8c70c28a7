"""Wire-level types shared by all chat and embedding backends."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol, Sequence, runtime_checkable

from ..errors import GatewayError


@dataclass(frozen=True)
class TextPart:
    text: str


@dataclass(frozen=True)
class ImagePart:
    """Image payload reference, tagged with the frame id it came from."""

    path: Path
    frame_id: int

    def read_bytes(self) -> bytes:
        return self.path.read_bytes()


Part = TextPart | ImagePart


@dataclass(frozen=True)
class ChatRequest:
    """One chat-with-images call.

    Temperature stays at 0 unless a strategy explicitly overrides it
    (self-consistency runs at 0.7). ``seed`` is forwarded to the backend
    and participates in the cache key, so repeated sampling does not
    collapse into one cached response.
    """

    model_id: str
    parts: tuple[Part, ...]
    temperature: float = 0.0
    max_output_tokens: int = 1024
    seed: int | None = None

    def __post_init__(self) -> None:
        if not self.parts:
            raise ValueError("request must contain at least one part")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")

    def text(self) -> str:
        """Concatenated text content (prompt text without image bytes)."""
        return "".join(p.text for p in self.parts if isinstance(p, TextPart))

    def image_parts(self) -> list[ImagePart]:
        return [p for p in self.parts if isinstance(p, ImagePart)]

    def presented_frame_ids(self) -> list[int]:
        return [p.frame_id for p in self.image_parts()]


@dataclass(frozen=True)
class TokenUsage:
    """Backend-reported token counts; None when the backend does not report."""

    prompt_tokens: int | None = None
    completion_tokens: int | None = None


@dataclass
class ChatResponse:
    text: str
    usage: TokenUsage = field(default_factory=TokenUsage)
    backend_latency_ms: int = 0
    # Bookkeeping for call records; never persisted in the response cache.
    cache_hit: bool = False


@dataclass(frozen=True)
class RetryPolicy:
    """Exponential backoff with bounded jitter over retryable error kinds."""

    max_attempts: int = 3
    base_backoff_ms: int = 250
    retryable: frozenset[str] = frozenset({"timeout", "rate_limited", "server_error"})

    def __post_init__(self) -> None:
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")


class TransientBackendError(GatewayError):
    """Failure the gateway may retry; ``kind`` matches RetryPolicy.retryable."""

    def __init__(self, kind: str, message: str):
        super().__init__(message)
        self.kind = kind


@runtime_checkable
class ChatBackend(Protocol):
    def complete(self, request: ChatRequest) -> ChatResponse: ...


@runtime_checkable
class EmbeddingBackend(Protocol):
    # Token limit for text items, estimated at 4 chars/token; None = unlimited.
    text_token_limit: int | None

    def embed(self, items: Sequence[Part]) -> list[list[float]]: ...


def hash_request(request: ChatRequest) -> str:
    """Content-addressed cache key for a chat request.

    The digest covers model id, ordered part contents (image bytes hashed,
    paths ignored), temperature, seed and max_output_tokens. Re-encoding an
    image to different bytes therefore changes the key.
    """
    h = hashlib.sha256()
    h.update(request.model_id.encode("utf-8"))
    h.update(b"\x00")
    for part in request.parts:
        if isinstance(part, TextPart):
            h.update(b"t")
            h.update(part.text.encode("utf-8"))
        else:
            h.update(b"i")
            h.update(hashlib.sha256(part.read_bytes()).digest())
        h.update(b"\x00")
    h.update(f"{request.temperature!r}|{request.seed!r}|{request.max_output_tokens}".encode())
    return h.hexdigest()
