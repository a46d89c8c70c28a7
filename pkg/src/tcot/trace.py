"""Per-question run traces: every backend call, the final context, totals.

Traces are the unit of persistence (one JSON object per line of a run's
``traces.jsonl``) and the substrate for all cost accounting. Visual tokens
are always counted as frames times tokens-per-frame; text tokens use the
backend-reported usage when available and a flagged character-based
estimate otherwise. Wall-clock fields are deliberately absent so traces
stay byte-reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

from .frames import ContextSet

TRACE_SCHEMA = 1

CALL_ROLES = ("select", "answer", "caption", "judge", "vote", "segment_answer", "aggregate")


@dataclass(frozen=True)
class CallRecord:
    role: str
    presented: tuple[int, ...]
    visual_tokens: int
    text_tokens: int
    text_tokens_estimated: bool
    cache_hit: bool
    segment_index: int | None = None
    failed: bool = False

    def __post_init__(self) -> None:
        if self.role not in CALL_ROLES:
            raise ValueError(f"unknown call role {self.role!r}")

    @property
    def total_tokens(self) -> int:
        return self.visual_tokens + self.text_tokens

    def to_dict(self) -> dict:
        return {
            "role": self.role,
            "segment_index": self.segment_index,
            "presented": list(self.presented),
            "visual_tokens": self.visual_tokens,
            "text_tokens": self.text_tokens,
            "text_tokens_estimated": self.text_tokens_estimated,
            "cache_hit": self.cache_hit,
            "failed": self.failed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CallRecord":
        return cls(
            role=data["role"],
            presented=tuple(data["presented"]),
            visual_tokens=data["visual_tokens"],
            text_tokens=data["text_tokens"],
            text_tokens_estimated=data["text_tokens_estimated"],
            cache_hit=data["cache_hit"],
            segment_index=data.get("segment_index"),
            failed=data.get("failed", False),
        )


@dataclass
class RunTrace:
    question_id: str
    strategy: str
    config: dict
    calls: list[CallRecord] = field(default_factory=list)
    selected_ids_initial: list[int] = field(default_factory=list)
    final_context: ContextSet = field(default_factory=lambda: ContextSet((), ()))
    answer: dict = field(default_factory=dict)

    @property
    def total_tokens(self) -> int:
        return sum(c.total_tokens for c in self.calls)

    @property
    def context_tokens_max(self) -> int:
        return max((c.total_tokens for c in self.calls), default=0)

    def select_calls(self) -> list[CallRecord]:
        return [c for c in self.calls if c.role == "select"]

    def selection_pool_size(self) -> int | None:
        """Distinct frames presented to selection calls; None without selection."""
        selects = self.select_calls()
        if not selects:
            return None
        pool: set[int] = set()
        for call in selects:
            pool.update(call.presented)
        return len(pool)

    def to_dict(self) -> dict:
        return {
            "trace_schema": TRACE_SCHEMA,
            "question_id": self.question_id,
            "strategy": self.strategy,
            "config": self.config,
            "calls": [c.to_dict() for c in self.calls],
            "selected_ids_initial": list(self.selected_ids_initial),
            "final_context": self.final_context.to_dict(),
            "answer": self.answer,
            "totals": {
                "context_tokens_max": self.context_tokens_max,
                "total_tokens": self.total_tokens,
            },
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RunTrace":
        trace = cls(
            question_id=data["question_id"],
            strategy=data["strategy"],
            config=data["config"],
            calls=[CallRecord.from_dict(c) for c in data["calls"]],
            selected_ids_initial=list(data["selected_ids_initial"]),
            final_context=ContextSet.from_dict(data["final_context"]),
            answer=data["answer"],
        )
        totals = data.get("totals", {})
        if totals and totals.get("total_tokens") != trace.total_tokens:
            raise ValueError(
                f"trace {trace.question_id}: stored total_tokens "
                f"{totals.get('total_tokens')} != recomputed {trace.total_tokens}"
            )
        return trace


def presented_within(calls: Sequence[CallRecord], roles: Sequence[str], limit: int) -> bool:
    """True when every call with one of the roles presents at most ``limit`` frames."""
    return all(
        len(c.presented) <= limit for c in calls if c.role in roles
    )
