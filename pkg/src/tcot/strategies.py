"""Inference strategies: from (frames, question) to (answer, trace).

The context-curating strategies share one skeleton: gather a relevant
frame subset with the model itself (or an embedding ranker), merge it with
uniform context under the frame budget, then answer from the curated
context only. Baselines cover plain uniform sampling, self-consistency
voting and per-window answering with a final aggregation call.

Every backend call is recorded in the question's RunTrace. Segment and
vote loops run sequentially within a question (the runner parallelizes
across questions); the concatenation order of per-segment selections is
segment order by construction. If a curated context comes out empty with
u = 0, the answer call falls back to a single uniformly placed frame,
since the answering prompt needs at least one image.
"""

from __future__ import annotations

import logging
import math
import random
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable

from .dataset import QARecord
from .errors import BackendUnavailable
from .frames import (
    ContextSet,
    FrameStore,
    TokenBudget,
    expand_neighborhood,
    merge_context,
    partition_segments,
    subsample_to_limit,
    uniform_sample,
)
from .gateway import ImagePart, Part, TextPart, VlmGateway, estimate_text_tokens
from .gateway.types import ChatResponse
from .prompting import (
    AnswerOutput,
    SelectionOutput,
    parse_final_answer,
    parse_selection_response,
    render_aggregate_prompt,
    render_answer_prompt,
    render_caption_prompt,
    render_segment_answer_prompt,
    render_selection_prompt,
    render_selection_prompt_from_captions,
)
from .trace import CallRecord, RunTrace

logger = logging.getLogger(__name__)

_ABSTAIN = re.compile(r"\bABSTAIN\b")


@dataclass(frozen=True)
class StrategyConfig:
    """Shared knobs for all strategies.

    ``segment_count`` and ``frames_per_segment`` drive the segmented
    strategies (defaults 12 and 64); ``u`` adds uniform context to the
    curated answer input. ``neighborhood_radius`` and ``max_iterations``
    apply to the hierarchical variant, the voting fields to
    self-consistency.
    """

    budget: TokenBudget = field(default_factory=TokenBudget)
    u: int = 0
    segment_count: int = 12
    frames_per_segment: int = 64
    neighborhood_radius: int = 8
    max_iterations: int = 3
    n_votes: int = 9
    sc_temperature: float = 0.7
    rng_seed: int = 0
    answer_dialect: str = "digit_paren"

    def __post_init__(self) -> None:
        k = self.budget.frame_budget_k
        if not 0 <= self.u <= k:
            raise ValueError(f"u={self.u} must be within 0..{k}")
        if self.segment_count < 1:
            raise ValueError("segment_count must be >= 1")
        if self.frames_per_segment < 1:
            raise ValueError("frames_per_segment must be >= 1")
        if self.neighborhood_radius < 0:
            raise ValueError("neighborhood_radius must be >= 0")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.n_votes < 1 or self.n_votes % 2 == 0:
            raise ValueError("n_votes must be odd and >= 1")
        if self.answer_dialect not in ("digit_paren", "bare_letter"):
            raise ValueError(f"unknown answer dialect {self.answer_dialect!r}")

    def to_dict(self) -> dict:
        return {
            "context_token_limit": self.budget.context_token_limit,
            "tokens_per_frame": self.budget.tokens_per_frame,
            "question_reserve_tokens": self.budget.question_reserve_tokens,
            "u": self.u,
            "segment_count": self.segment_count,
            "frames_per_segment": self.frames_per_segment,
            "neighborhood_radius": self.neighborhood_radius,
            "max_iterations": self.max_iterations,
            "n_votes": self.n_votes,
            "sc_temperature": self.sc_temperature,
            "rng_seed": self.rng_seed,
            "answer_dialect": self.answer_dialect,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "StrategyConfig":
        data = dict(data)
        budget = TokenBudget(
            context_token_limit=data.pop("context_token_limit", 32768),
            tokens_per_frame=data.pop("tokens_per_frame", 258),
            question_reserve_tokens=data.pop("question_reserve_tokens", 1808),
        )
        return cls(budget=budget, **data)


class _TraceBuilder:
    """Accumulates call records while a strategy runs one question."""

    def __init__(
        self,
        gateway: VlmGateway,
        store: FrameStore,
        qa: QARecord,
        cfg: StrategyConfig,
        strategy: str,
    ):
        self.gateway = gateway
        self.store = store
        self.qa = qa
        self.cfg = cfg
        self.trace = RunTrace(
            question_id=qa.question_id, strategy=strategy, config=cfg.to_dict()
        )

    def chat(
        self,
        parts: list[Part],
        role: str,
        segment_index: int | None = None,
        temperature: float = 0.0,
        seed: int | None = None,
    ) -> ChatResponse:
        request = self.gateway.request(parts, temperature=temperature, seed=seed)
        presented = tuple(request.presented_frame_ids())
        visual = len(presented) * self.cfg.budget.tokens_per_frame
        try:
            response = self.gateway.complete_chat(request)
        except Exception:
            self.trace.calls.append(
                CallRecord(
                    role=role,
                    presented=presented,
                    visual_tokens=visual,
                    text_tokens=estimate_text_tokens(request.text()),
                    text_tokens_estimated=True,
                    cache_hit=False,
                    segment_index=segment_index,
                    failed=True,
                )
            )
            raise
        if response.usage.prompt_tokens is not None:
            text_tokens = max(0, response.usage.prompt_tokens - visual)
            text_tokens += response.usage.completion_tokens or 0
            estimated = False
        else:
            text_tokens = estimate_text_tokens(request.text())
            text_tokens += estimate_text_tokens(response.text)
            estimated = True
        self.trace.calls.append(
            CallRecord(
                role=role,
                presented=presented,
                visual_tokens=visual,
                text_tokens=text_tokens,
                text_tokens_estimated=estimated,
                cache_hit=response.cache_hit,
                segment_index=segment_index,
            )
        )
        return response

    def select(
        self, presented: list[int], segment_index: int | None = None
    ) -> SelectionOutput:
        parts, local_to_global = render_selection_prompt(
            self.store, presented, self.qa.question, self.qa.options
        )
        response = self.chat(parts, "select", segment_index=segment_index)
        return parse_selection_response(response.text, presented, local_to_global)

    def answer(self, context: ContextSet, role: str = "answer") -> tuple[AnswerOutput, ContextSet]:
        if len(context) == 0:
            fallback = uniform_sample(self.store.frame_count, 1)
            logger.warning(
                "%s: empty context for %s, answering over a single uniform frame",
                self.trace.strategy,
                self.qa.question_id,
            )
            context = ContextSet.all_uniform(fallback)
        dialect = "open_ended" if self.qa.is_open_ended else self.cfg.answer_dialect
        parts = render_answer_prompt(
            self.store, context, self.qa.question, self.qa.options, dialect
        )
        response = self.chat(parts, role)
        if dialect == "open_ended":
            answer = AnswerOutput(None, response.text, "open_ended")
        else:
            answer = parse_final_answer(response.text, len(self.qa.options), dialect)
        return answer, context

    def caption(self, frame_id: int, style: str) -> str:
        parts: list[Part] = [
            TextPart(render_caption_prompt(style) + "\n"),
            ImagePart(self.store.frame_path(frame_id), frame_id),
        ]
        try:
            return self.chat(parts, "caption").text
        except BackendUnavailable:
            logger.warning("caption call failed for frame %d, using empty caption", frame_id)
            return ""

    def finish(
        self,
        answer: AnswerOutput,
        context: ContextSet,
        selected_initial: list[int],
    ) -> tuple[AnswerOutput, RunTrace]:
        self.trace.selected_ids_initial = list(selected_initial)
        self.trace.final_context = context
        self.trace.answer = answer.to_dict()
        return answer, self.trace


def _segment_sample(first: int, last: int, n: int) -> list[int]:
    size = last - first + 1
    return [first - 1 + j for j in uniform_sample(size, min(n, size))]


def run_baseline(
    store: FrameStore, qa: QARecord, cfg: StrategyConfig, gateway: VlmGateway
) -> tuple[AnswerOutput, RunTrace]:
    """Plain inference over uniformly sampled frames, no context curation."""
    builder = _TraceBuilder(gateway, store, qa, cfg, "baseline")
    k = cfg.budget.frame_budget_k
    context = ContextSet.all_uniform(uniform_sample(store.frame_count, k))
    answer, context = builder.answer(context)
    return builder.finish(answer, context, [])


def run_single_step(
    store: FrameStore, qa: QARecord, cfg: StrategyConfig, gateway: VlmGateway
) -> tuple[AnswerOutput, RunTrace]:
    """One selection call over a uniform sample, then answer from the merge."""
    builder = _TraceBuilder(gateway, store, qa, cfg, "single_step")
    k = cfg.budget.frame_budget_k
    presented = uniform_sample(store.frame_count, k)
    selection = builder.select(presented)
    context = merge_context(selection.frame_ids, store.frame_count, k, cfg.u)
    answer, context = builder.answer(context)
    return builder.finish(answer, context, list(selection.frame_ids))


def run_dynamic_segment(
    store: FrameStore, qa: QARecord, cfg: StrategyConfig, gateway: VlmGateway
) -> tuple[AnswerOutput, RunTrace]:
    """Partitioned selection: sample within each segment, select, concatenate.

    Each selection call presents at most ``frames_per_segment`` frames, so
    the per-call context stays bounded regardless of video length. A
    segment whose call fails after retries contributes all its presented
    frames; only a failed answer call aborts the question.
    """
    builder = _TraceBuilder(gateway, store, qa, cfg, "dynamic_segment")
    n = store.frame_count
    k = cfg.budget.frame_budget_k
    segment_count = min(cfg.segment_count, n)
    if segment_count < cfg.segment_count:
        logger.debug("clamping segment count %d to %d frames", cfg.segment_count, n)
    gathered: list[int] = []
    for segment in partition_segments(n, segment_count):
        presented = _segment_sample(segment.first, segment.last, cfg.frames_per_segment)
        try:
            selection = builder.select(presented, segment_index=segment.index)
            gathered.extend(selection.frame_ids)
        except BackendUnavailable as exc:
            logger.warning(
                "segment %d selection failed (%s), keeping all presented frames",
                segment.index,
                exc,
            )
            gathered.extend(presented)
    context = merge_context(gathered, n, k, cfg.u)
    answer, context = builder.answer(context)
    return builder.finish(answer, context, gathered)


def run_hierarchical(
    store: FrameStore, qa: QARecord, cfg: StrategyConfig, gateway: VlmGateway
) -> tuple[AnswerOutput, RunTrace]:
    """Iterated selection, zooming into neighbourhoods of previous picks.

    Stops at a fixed point (two consecutive identical selections) or after
    ``max_iterations`` selection calls; with ``max_iterations = 1`` this is
    exactly the single-step strategy.
    """
    builder = _TraceBuilder(gateway, store, qa, cfg, "hierarchical")
    n = store.frame_count
    k = cfg.budget.frame_budget_k
    presented = uniform_sample(n, k)
    selection: tuple[int, ...] = ()
    previous: tuple[int, ...] | None = None
    for iteration in range(cfg.max_iterations):
        try:
            current = builder.select(presented).frame_ids
        except BackendUnavailable as exc:
            logger.warning("selection iteration %d failed (%s)", iteration, exc)
            current = tuple(presented)
        selection = current
        if previous is not None and current == previous:
            break
        previous = current
        if iteration + 1 < cfg.max_iterations:
            neighborhood = expand_neighborhood(current, cfg.neighborhood_radius, n)
            if not neighborhood:
                break
            presented = subsample_to_limit(neighborhood, k)
    context = merge_context(selection, n, k, cfg.u)
    answer, context = builder.answer(context)
    return builder.finish(answer, context, list(selection))


def majority_vote(indices: list[int | None]) -> int | None:
    """Most frequent parsed index; ties break to the smallest option index."""
    parsed = [i for i in indices if i is not None]
    if not parsed:
        return None
    counts = Counter(parsed)
    top = max(counts.values())
    return min(i for i, c in counts.items() if c == top)


def run_self_consistency(
    store: FrameStore, qa: QARecord, cfg: StrategyConfig, gateway: VlmGateway
) -> tuple[AnswerOutput, RunTrace]:
    """Majority vote over repeated sampled-frame answer calls at temperature.

    Each vote draws its frames without replacement from a RNG seeded by
    (rng_seed, vote index), so runs replay exactly against the mock even
    at elevated temperature. Failed votes are skipped unless all fail;
    unparsed votes are excluded from the tally.
    """
    if qa.is_open_ended:
        raise ValueError("self-consistency voting requires answer options")
    builder = _TraceBuilder(gateway, store, qa, cfg, "self_consistency")
    n = store.frame_count
    k = cfg.budget.frame_budget_k
    votes: list[AnswerOutput] = []
    last_context: ContextSet | None = None
    failures = 0
    for vote_index in range(cfg.n_votes):
        rng = random.Random(f"{cfg.rng_seed}:{vote_index}")
        ids = sorted(rng.sample(range(1, n + 1), min(k, n)))
        context = ContextSet.all_uniform(ids)
        parts = render_answer_prompt(
            store, context, qa.question, qa.options, cfg.answer_dialect
        )
        try:
            response = builder.chat(
                parts,
                "vote",
                temperature=cfg.sc_temperature,
                seed=cfg.rng_seed * 100003 + vote_index,
            )
        except BackendUnavailable as exc:
            logger.warning("vote %d failed (%s), skipping", vote_index, exc)
            failures += 1
            continue
        votes.append(parse_final_answer(response.text, len(qa.options), cfg.answer_dialect))
        last_context = context
    if failures == cfg.n_votes:
        raise BackendUnavailable(f"all {cfg.n_votes} votes failed")
    winner = majority_vote([v.choice_index for v in votes])
    if winner is None:
        answer = AnswerOutput(None, votes[-1].raw_text, "unparsed")
    else:
        first = next(v for v in votes if v.choice_index == winner)
        answer = AnswerOutput(winner, first.raw_text, first.parse_path)
    assert last_context is not None
    return builder.finish(answer, last_context, [])


def run_similarity_select(
    store: FrameStore,
    qa: QARecord,
    cfg: StrategyConfig,
    gateway: VlmGateway,
    mode: str = "question_to_frames",
) -> tuple[AnswerOutput, RunTrace]:
    """Nearest-neighbour frame retrieval by question-embedding similarity.

    The candidate pool matches the segmented strategies (segment_count
    times frames_per_segment uniform frames) so cost comparisons line up.
    Score ties resolve in ascending frame-id order.
    """
    if mode not in ("question_to_frames", "question_to_captions"):
        raise ValueError(f"unknown similarity mode {mode!r}")
    name = "similarity_frames" if mode == "question_to_frames" else "similarity_captions"
    builder = _TraceBuilder(gateway, store, qa, cfg, name)
    n = store.frame_count
    k = cfg.budget.frame_budget_k
    pool = uniform_sample(n, min(cfg.segment_count * cfg.frames_per_segment, n))
    items: list[Part] = [TextPart(qa.question)]
    if mode == "question_to_frames":
        items += [ImagePart(store.frame_path(f), f) for f in pool]
    else:
        items += [TextPart(builder.caption(f, "concise")) for f in pool]
    vectors = gateway.embed(items)
    question_vec = vectors[0]
    scores = [
        sum(a * b for a, b in zip(question_vec, vec)) for vec in vectors[1:]
    ]
    ranked = sorted(zip(pool, scores), key=lambda item: (-item[1], item[0]))
    top = sorted(fid for fid, _ in ranked[: max(k - cfg.u, 0)])
    context = merge_context(top, n, k, cfg.u)
    answer, context = builder.answer(context)
    return builder.finish(answer, context, top)


def run_caption_select(
    store: FrameStore,
    qa: QARecord,
    cfg: StrategyConfig,
    gateway: VlmGateway,
    style: str = "concise",
) -> tuple[AnswerOutput, RunTrace]:
    """Segmented selection over frame captions instead of raw frames.

    Captioning costs one call per presented frame (cached across runs);
    answering still sees the selected frames as images.
    """
    builder = _TraceBuilder(gateway, store, qa, cfg, f"caption_select_{style}")
    n = store.frame_count
    k = cfg.budget.frame_budget_k
    segment_count = min(cfg.segment_count, n)
    gathered: list[int] = []
    for segment in partition_segments(n, segment_count):
        presented = _segment_sample(segment.first, segment.last, cfg.frames_per_segment)
        captions = [builder.caption(f, style) for f in presented]
        parts, local_to_global = render_selection_prompt_from_captions(
            captions, presented, qa.question, qa.options
        )
        try:
            response = builder.chat(parts, "select", segment_index=segment.index)
            selection = parse_selection_response(response.text, presented, local_to_global)
            gathered.extend(selection.frame_ids)
        except BackendUnavailable as exc:
            logger.warning(
                "segment %d caption selection failed (%s), keeping presented frames",
                segment.index,
                exc,
            )
            gathered.extend(presented)
    context = merge_context(gathered, n, k, cfg.u)
    answer, context = builder.answer(context)
    return builder.finish(answer, context, gathered)


def run_independent_segments(
    store: FrameStore,
    qa: QARecord,
    cfg: StrategyConfig,
    gateway: VlmGateway,
    high_confidence: bool = False,
) -> tuple[AnswerOutput, RunTrace]:
    """Answer per window, then aggregate the proposals in a final call.

    Windows are fixed-length (``frames_per_segment``), the last one may be
    shorter. With ``high_confidence`` the window prompt permits abstention;
    abstaining and unparseable windows contribute no proposal.
    """
    if qa.is_open_ended:
        raise ValueError("independent-segment aggregation requires answer options")
    name = "independent_segments_hc" if high_confidence else "independent_segments"
    builder = _TraceBuilder(gateway, store, qa, cfg, name)
    n = store.frame_count
    k = cfg.budget.frame_budget_k
    s = cfg.frames_per_segment
    proposals: list[tuple[int, int, str]] = []
    for index in range(math.ceil(n / s)):
        first = index * s + 1
        last = min((index + 1) * s, n)
        presented = subsample_to_limit(list(range(first, last + 1)), k)
        parts = render_segment_answer_prompt(
            store, presented, qa.question, qa.options, high_confidence
        )
        try:
            response = builder.chat(parts, "segment_answer", segment_index=index + 1)
        except BackendUnavailable as exc:
            logger.warning("window %d answer failed (%s), skipping", index + 1, exc)
            continue
        if _ABSTAIN.search(response.text):
            continue
        parsed = parse_final_answer(response.text, len(qa.options), "digit_paren")
        if parsed.choice_index is None:
            logger.debug("window %d produced no parseable answer", index + 1)
            continue
        proposals.append((index + 1, parsed.choice_index, parsed.raw_text))
    parts = render_aggregate_prompt(proposals, qa.question, qa.options)
    response = builder.chat(parts, "aggregate")
    answer = parse_final_answer(response.text, len(qa.options), "digit_paren")
    return builder.finish(answer, ContextSet((), ()), [])


def _with_mode(fn: Callable, **kwargs) -> Callable:
    def runner(store, qa, cfg, gateway):
        return fn(store, qa, cfg, gateway, **kwargs)

    return runner


STRATEGIES: dict[str, Callable] = {
    "baseline": run_baseline,
    "single_step": run_single_step,
    "dynamic_segment": run_dynamic_segment,
    "hierarchical": run_hierarchical,
    "self_consistency": run_self_consistency,
    "similarity_frames": _with_mode(run_similarity_select, mode="question_to_frames"),
    "similarity_captions": _with_mode(run_similarity_select, mode="question_to_captions"),
    "caption_select_concise": _with_mode(run_caption_select, style="concise"),
    "caption_select_long": _with_mode(run_caption_select, style="long"),
    "independent_segments": _with_mode(run_independent_segments, high_confidence=False),
    "independent_segments_hc": _with_mode(run_independent_segments, high_confidence=True),
}
