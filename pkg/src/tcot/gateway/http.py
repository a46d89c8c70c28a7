"""OpenAI-compatible HTTP backends for chat and embeddings.

One wire dialect covers hosted and locally served models alike; images go
over as base64 data URLs in the standard ``/chat/completions`` content
layout. Errors are mapped onto the gateway taxonomy so the retry policy
can tell transient failures from fatal ones.
"""

from __future__ import annotations

import base64
import logging
import os
import time
from typing import Sequence

import httpx

from ..errors import AuthError, BackendUnavailable, GatewayError, PayloadTooLarge
from .types import ChatRequest, ChatResponse, ImagePart, Part, TextPart, TokenUsage, TransientBackendError

logger = logging.getLogger(__name__)


def _api_key(env_var: str) -> str:
    key = os.environ.get(env_var, "")
    if not key:
        raise AuthError(f"API key environment variable {env_var!r} is not set")
    return key


def _raise_for_status(response: httpx.Response) -> None:
    code = response.status_code
    if code < 400:
        return
    body = response.text[:2000]
    if code in (401, 403):
        raise AuthError(f"backend returned {code}: {body}")
    if code == 413 or "context_length" in body or "maximum context" in body.lower():
        raise PayloadTooLarge(f"backend rejected context size ({code}): {body}")
    if code == 429:
        raise TransientBackendError("rate_limited", f"backend rate limited: {body}")
    if code >= 500:
        raise TransientBackendError("server_error", f"backend returned {code}: {body}")
    raise GatewayError(f"backend returned {code}: {body}")


class OpenAIChatBackend:
    def __init__(
        self,
        base_url: str,
        api_key_env: str = "OPENAI_API_KEY",
        timeout_s: float = 120.0,
        client: httpx.Client | None = None,
    ):
        self.base_url = base_url.rstrip("/")
        self._headers = {"Authorization": f"Bearer {_api_key(api_key_env)}"}
        self._client = client or httpx.Client(timeout=timeout_s)

    def complete(self, request: ChatRequest) -> ChatResponse:
        content: list[dict] = []
        for part in request.parts:
            if isinstance(part, TextPart):
                content.append({"type": "text", "text": part.text})
            else:
                encoded = base64.b64encode(part.read_bytes()).decode("ascii")
                content.append(
                    {
                        "type": "image_url",
                        "image_url": {"url": f"data:image/jpeg;base64,{encoded}"},
                    }
                )
        body = {
            "model": request.model_id,
            "messages": [{"role": "user", "content": content}],
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
        }
        if request.seed is not None:
            body["seed"] = request.seed

        started = time.monotonic()
        try:
            response = self._client.post(
                f"{self.base_url}/chat/completions", headers=self._headers, json=body
            )
        except httpx.TimeoutException as exc:
            raise TransientBackendError("timeout", f"backend timed out: {exc}") from exc
        except httpx.HTTPError as exc:
            raise TransientBackendError("server_error", f"transport error: {exc}") from exc
        _raise_for_status(response)

        data = response.json()
        try:
            text = data["choices"][0]["message"]["content"] or ""
        except (KeyError, IndexError, TypeError) as exc:
            raise BackendUnavailable(f"malformed completion payload: {data!r}") from exc
        usage = data.get("usage") or {}
        return ChatResponse(
            text=text,
            usage=TokenUsage(
                prompt_tokens=usage.get("prompt_tokens"),
                completion_tokens=usage.get("completion_tokens"),
            ),
            backend_latency_ms=int((time.monotonic() - started) * 1000),
        )


class OpenAIEmbeddingBackend:
    """Text embeddings via ``/embeddings``; image items are not supported."""

    def __init__(
        self,
        base_url: str,
        model_id: str,
        api_key_env: str = "OPENAI_API_KEY",
        text_token_limit: int | None = None,
        timeout_s: float = 60.0,
        client: httpx.Client | None = None,
    ):
        self.base_url = base_url.rstrip("/")
        self.model_id = model_id
        self.text_token_limit = text_token_limit
        self._headers = {"Authorization": f"Bearer {_api_key(api_key_env)}"}
        self._client = client or httpx.Client(timeout=timeout_s)

    def embed(self, items: Sequence[Part]) -> list[list[float]]:
        if any(isinstance(item, ImagePart) for item in items):
            raise GatewayError(
                "the HTTP embedding backend embeds text only; "
                "use caption-based similarity or an image-capable backend"
            )
        texts = [item.text for item in items if isinstance(item, TextPart)]
        try:
            response = self._client.post(
                f"{self.base_url}/embeddings",
                headers=self._headers,
                json={"model": self.model_id, "input": texts},
            )
        except httpx.TimeoutException as exc:
            raise TransientBackendError("timeout", f"backend timed out: {exc}") from exc
        except httpx.HTTPError as exc:
            raise TransientBackendError("server_error", f"transport error: {exc}") from exc
        _raise_for_status(response)
        data = response.json()
        rows = sorted(data["data"], key=lambda row: row["index"])
        return [row["embedding"] for row in rows]
