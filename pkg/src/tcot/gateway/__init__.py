"""Uniform access to chat-with-images and embedding backends."""

from .cache import ResponseCache
from .mock import MockChatBackend, MockEmbeddingBackend, MockScript, ScriptBook, ScriptEntry
from .ratelimit import RateLimiter
from .service import VlmGateway, estimate_text_tokens
from .types import (
    ChatBackend,
    ChatRequest,
    ChatResponse,
    EmbeddingBackend,
    ImagePart,
    Part,
    RetryPolicy,
    TextPart,
    TokenUsage,
    TransientBackendError,
    hash_request,
)

__all__ = [
    "ChatBackend",
    "ChatRequest",
    "ChatResponse",
    "EmbeddingBackend",
    "ImagePart",
    "MockChatBackend",
    "MockEmbeddingBackend",
    "MockScript",
    "Part",
    "RateLimiter",
    "ResponseCache",
    "RetryPolicy",
    "ScriptBook",
    "ScriptEntry",
    "TextPart",
    "TokenUsage",
    "TransientBackendError",
    "VlmGateway",
    "estimate_text_tokens",
    "hash_request",
]
