"""Content-addressed response cache.

Responses are stored as ``<cache_dir>/<first2>/<key>.json`` keyed by the
request digest. Wall-clock fields never enter the cache, so cached and
fresh responses differ only in bookkeeping.
"""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

from .types import ChatResponse, TokenUsage


class ResponseCache:
    def __init__(self, cache_dir: Path | str):
        self.cache_dir = Path(cache_dir)

    def _path(self, key: str) -> Path:
        return self.cache_dir / key[:2] / f"{key}.json"

    def load(self, key: str) -> ChatResponse | None:
        path = self._path(key)
        if not path.exists():
            return None
        data = json.loads(path.read_text(encoding="utf-8"))
        usage = data.get("usage", {})
        return ChatResponse(
            text=data["text"],
            usage=TokenUsage(
                prompt_tokens=usage.get("prompt_tokens"),
                completion_tokens=usage.get("completion_tokens"),
            ),
            backend_latency_ms=0,
            cache_hit=True,
        )

    def store(self, key: str, response: ChatResponse) -> None:
        path = self._path(key)
        path.parent.mkdir(parents=True, exist_ok=True)
        payload = {
            "request_digest": key,
            "text": response.text,
            "usage": {
                "prompt_tokens": response.usage.prompt_tokens,
                "completion_tokens": response.usage.completion_tokens,
            },
        }
        # Atomic write so a crashed run never leaves a torn cache entry.
        fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                json.dump(payload, fh, sort_keys=True)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
