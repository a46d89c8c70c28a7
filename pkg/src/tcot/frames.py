"""Deterministic frame-index arithmetic.

Everything here is pure integer math over 1-based frame ids: uniform
sampling, segment partitioning, token-to-frame budgeting, context merging
and neighbourhood expansion. Strategies compose these primitives; none of
them touch image bytes except :class:`FrameStore`, which resolves ids to
files on disk.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Literal, Sequence

from .errors import BudgetTooSmall, InvalidPartition

logger = logging.getLogger(__name__)

FRAME_FILENAME = "{:06d}.jpg"
MANIFEST_NAME = "manifest.json"

Provenance = Literal["selected", "uniform"]


@dataclass(frozen=True)
class FrameStore:
    """Indexed universe of 1-fps frames for one video.

    Frame ids are exactly the integers ``1..frame_count`` and resolve to
    ``<frames_dir>/%06d.jpg``.
    """

    video_id: str
    frame_count: int
    frames_dir: Path

    def __post_init__(self) -> None:
        if self.frame_count < 1:
            raise ValueError(f"frame_count must be >= 1, got {self.frame_count}")

    def frame_path(self, frame_id: int) -> Path:
        if not 1 <= frame_id <= self.frame_count:
            raise ValueError(
                f"frame id {frame_id} outside 1..{self.frame_count} for {self.video_id}"
            )
        return self.frames_dir / FRAME_FILENAME.format(frame_id)

    def read_payload(self, frame_id: int) -> bytes:
        return self.frame_path(frame_id).read_bytes()

    @classmethod
    def open(cls, frames_root: Path | str, video_id: str) -> "FrameStore":
        """Open a video's frame directory.

        A ``manifest.json`` with ``{"video_id", "frame_count"}`` takes
        precedence; otherwise the directory is scanned for ``%06d.jpg``
        files. The first and last frames are checked for existence.
        """
        frames_dir = Path(frames_root) / video_id
        manifest = frames_dir / MANIFEST_NAME
        if manifest.exists():
            meta = json.loads(manifest.read_text())
            frame_count = int(meta["frame_count"])
        else:
            frame_count = sum(
                1 for p in frames_dir.glob("*.jpg") if p.stem.isdigit()
            )
            if frame_count == 0:
                raise FileNotFoundError(f"no frames found under {frames_dir}")
        store = cls(video_id=video_id, frame_count=frame_count, frames_dir=frames_dir)
        for probe in (1, frame_count):
            path = store.frame_path(probe)
            if not path.exists():
                raise FileNotFoundError(f"frame {probe} missing: {path}")
        return store


@dataclass(frozen=True)
class Segment:
    """One contiguous slice of a partition, 1-based inclusive bounds."""

    index: int
    first: int
    last: int

    @property
    def size(self) -> int:
        return self.last - self.first + 1

    def frame_ids(self) -> list[int]:
        return list(range(self.first, self.last + 1))


@dataclass(frozen=True)
class TokenBudget:
    """Token budget of the answering model, expressed as a frame budget.

    The default reserve of 1808 tokens makes a 32768-token limit at 258
    tokens per frame come out at exactly 120 frames.
    """

    context_token_limit: int = 32768
    tokens_per_frame: int = 258
    question_reserve_tokens: int = 1808

    def __post_init__(self) -> None:
        if self.tokens_per_frame < 1:
            raise ValueError("tokens_per_frame must be >= 1")
        if not 0 <= self.question_reserve_tokens < self.context_token_limit:
            raise ValueError(
                "question_reserve_tokens must be in [0, context_token_limit)"
            )

    @property
    def frame_budget_k(self) -> int:
        return frames_for_budget(self)


@dataclass(frozen=True)
class ContextSet:
    """Curated answer context: ascending unique frame ids with provenance.

    ``provenance`` is parallel to ``frame_ids``; an id contributed by both
    the selection and the uniform fill is tagged ``selected``.
    """

    frame_ids: tuple[int, ...]
    provenance: tuple[Provenance, ...] = field(default=())

    def __post_init__(self) -> None:
        if len(self.frame_ids) != len(self.provenance):
            raise ValueError("frame_ids and provenance must be parallel")
        if any(b <= a for a, b in zip(self.frame_ids, self.frame_ids[1:])):
            raise ValueError("frame_ids must be strictly ascending")

    def __len__(self) -> int:
        return len(self.frame_ids)

    def selected_ids(self) -> list[int]:
        return [f for f, p in zip(self.frame_ids, self.provenance) if p == "selected"]

    def uniform_ids(self) -> list[int]:
        return [f for f, p in zip(self.frame_ids, self.provenance) if p == "uniform"]

    def to_dict(self) -> dict:
        return {"frame_ids": list(self.frame_ids), "provenance": list(self.provenance)}

    @classmethod
    def from_dict(cls, data: dict) -> "ContextSet":
        return cls(tuple(data["frame_ids"]), tuple(data["provenance"]))

    @classmethod
    def all_uniform(cls, frame_ids: Sequence[int]) -> "ContextSet":
        return cls(tuple(frame_ids), ("uniform",) * len(frame_ids))


def uniform_sample(frame_count: int, n: int) -> list[int]:
    """Sample ``n`` ids from ``1..frame_count`` by the center-of-bin rule.

    id_i = 1 + floor((i - 0.5) * N / n), evaluated in exact integer
    arithmetic. ``n`` larger than the frame count clamps (logged, not an
    error: short videos with large budgets are common); ``n == 0`` yields
    an empty list. Strictly ascending, idempotent at n == N.
    """
    if frame_count < 1:
        raise ValueError(f"frame_count must be >= 1, got {frame_count}")
    if n <= 0:
        return []
    if n > frame_count:
        logger.debug(
            "clamping sample count %d to frame count %d", n, frame_count
        )
        n = frame_count
    return [1 + ((2 * i - 1) * frame_count) // (2 * n) for i in range(1, n + 1)]


def partition_segments(frame_count: int, segment_count: int) -> list[Segment]:
    """Split ``1..frame_count`` into contiguous segments of near-equal size.

    When the count does not divide evenly, the first ``N mod l`` segments
    hold one extra frame, so sizes never differ by more than 1.
    """
    if segment_count < 1 or segment_count > frame_count:
        raise InvalidPartition(
            f"segment count {segment_count} invalid for {frame_count} frames"
        )
    base, extra = divmod(frame_count, segment_count)
    segments = []
    first = 1
    for i in range(1, segment_count + 1):
        size = base + (1 if i <= extra else 0)
        segments.append(Segment(index=i, first=first, last=first + size - 1))
        first += size
    return segments


def frames_for_budget(budget: TokenBudget) -> int:
    """Number of frames that fit the context limit after the question reserve."""
    k = (budget.context_token_limit - budget.question_reserve_tokens) // (
        budget.tokens_per_frame
    )
    if k < 1:
        raise BudgetTooSmall(
            f"{budget.context_token_limit} tokens minus reserve "
            f"{budget.question_reserve_tokens} fits no frame at "
            f"{budget.tokens_per_frame} tokens/frame"
        )
    return k


def subsample_to_limit(ids: Sequence[int], m: int) -> list[int]:
    """Reduce an ascending id list to at most ``m`` entries.

    Uniform sampling is applied over the *positions* of the list, so the
    result is a subset preserving relative order.
    """
    if m < 0:
        raise ValueError(f"limit must be >= 0, got {m}")
    if len(ids) <= m:
        return list(ids)
    if m == 0:
        return []
    positions = uniform_sample(len(ids), m)
    return [ids[p - 1] for p in positions]


def merge_context(
    selected: Iterable[int], frame_count: int, budget_k: int, u: int
) -> ContextSet:
    """Merge selected frames with uniform context under the frame budget.

    The selected ids are sorted, deduplicated, subsampled to ``budget_k - u``
    positions, then unioned with ``u`` uniformly sampled frames. Ids present
    on both sides appear once, tagged ``selected``.
    """
    if not 0 <= u <= budget_k:
        raise ValueError(f"u={u} must satisfy 0 <= u <= budget_k={budget_k}")
    unique = sorted(set(selected))
    if unique and (unique[0] < 1 or unique[-1] > frame_count):
        raise ValueError("selected ids outside 1..frame_count")
    kept = set(subsample_to_limit(unique, budget_k - u))
    uniform = set(uniform_sample(frame_count, u)) if u > 0 else set()
    merged = sorted(kept | uniform)
    provenance = tuple(
        "selected" if f in kept else "uniform" for f in merged
    )
    return ContextSet(tuple(merged), provenance)


def expand_neighborhood(ids: Iterable[int], radius: int, frame_count: int) -> list[int]:
    """Union of clamped windows ``[i - radius, i + radius]`` around each id."""
    if radius < 0:
        raise ValueError(f"radius must be >= 0, got {radius}")
    out: set[int] = set()
    for i in ids:
        if not 1 <= i <= frame_count:
            raise ValueError(f"id {i} outside 1..{frame_count}")
        out.update(range(max(1, i - radius), min(frame_count, i + radius) + 1))
    return sorted(out)
