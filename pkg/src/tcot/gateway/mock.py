"""Deterministic scripted backends for offline pipeline testing.

The mock chat backend plays the role of a VLM reading the rendered prompt:
it routes each request on the instruction text (selection, captioning,
judging, answer aggregation, answering), matches the per-question script
entry via the prompt's ``Question:`` line, and answers in the same id space
a real model would see. For selection calls that means the ``FrameID n:``
labels of the prompt (falling back to the image parts' frame-id tags when
a request carries no labels), so the full local-to-global mapping logic is
exercised end to end.

All randomness is derived from the script's seed and the request digest,
so identical (request, script, seed) triples produce byte-identical output.
"""

from __future__ import annotations

import hashlib
import json
import logging
import random
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .types import (
    ChatRequest,
    ChatResponse,
    ImagePart,
    Part,
    TextPart,
    TokenUsage,
    hash_request,
)

logger = logging.getLogger(__name__)

# Instruction markers mirroring the prompt texts rendered by tcot.prompting;
# kept literal here to avoid a module cycle and pinned by tests.
SELECTION_MARKER = "Return the frame ids which can answer the given question."
CAPTION_MARKERS = (
    "Write a concise description of the image in a sentence",
    "Write a paragraph describing the image in detail",
)
JUDGE_MARKER = "reply with a single integer score from 1 to 5"
AGGREGATE_MARKER = "answers proposed independently for separate windows"
ABSTAIN_MARKER = 'reply exactly "ABSTAIN"'

MALFORMED_TEXT = "I looked at the frames but cannot produce the requested JSON output."

_FRAMEID_LABEL = re.compile(r"FrameID (\d+):\s*$")
_CAPTION_LINE = re.compile(r"FrameID (\d+): (.*)")
_FRAME_TOKEN = re.compile(r"frame (\d{6})")
_WINDOW_PROPOSAL = re.compile(r"Window \d+: Final Answer: \((\d+)\)")


@dataclass(frozen=True)
class MockScript:
    """One scripted behaviour: a mode name plus its parameters."""

    mode: str
    params: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, data: dict) -> "MockScript":
        data = dict(data)
        mode = data.pop("mode")
        return cls(mode=mode, params=data)


@dataclass(frozen=True)
class ScriptEntry:
    """Per-question behaviours, one optional script per call role."""

    question: str | None = None
    selection: MockScript | None = None
    answer: MockScript | None = None
    caption: MockScript | None = None
    judge: MockScript | None = None

    @classmethod
    def from_dict(cls, data: dict) -> "ScriptEntry":
        def script(key: str) -> MockScript | None:
            raw = data.get(key)
            return MockScript.from_dict(raw) if raw else None

        return cls(
            question=data.get("question"),
            selection=script("selection"),
            answer=script("answer"),
            caption=script("caption"),
            judge=script("judge"),
        )


@dataclass(frozen=True)
class ScriptBook:
    """All scripted behaviours for one benchmark run."""

    entries: dict[str, ScriptEntry] = field(default_factory=dict)
    default: ScriptEntry = field(default_factory=ScriptEntry)

    @classmethod
    def from_dict(cls, data: dict) -> "ScriptBook":
        entries = {
            qid: ScriptEntry.from_dict(raw)
            for qid, raw in data.get("questions", {}).items()
        }
        default = ScriptEntry.from_dict(data.get("default", {}))
        return cls(entries=entries, default=default)

    @classmethod
    def load(cls, path: Path | str) -> "ScriptBook":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def match(self, prompt_text: str) -> ScriptEntry:
        question = _question_line(prompt_text)
        if question is not None:
            for entry in self.entries.values():
                if entry.question == question:
                    return entry
        return self.default


def _question_line(text: str) -> str | None:
    for line in text.splitlines():
        if line.startswith("Question: "):
            return line[len("Question: "):]
    return None


def _labelled_images(request: ChatRequest) -> list[tuple[int, int]]:
    """(label, global id) pairs for the request's presented frames.

    The label is the integer of the ``FrameID n:`` text immediately before
    an image part, as a model would read it; requests without labels fall
    back to the image's own frame-id tag.
    """
    pairs: list[tuple[int, int]] = []
    previous_text = ""
    for part in request.parts:
        if isinstance(part, TextPart):
            previous_text = part.text
        else:
            m = _FRAMEID_LABEL.search(previous_text)
            label = int(m.group(1)) if m else part.frame_id
            pairs.append((label, part.frame_id))
            previous_text = ""
    return pairs


def _captioned_frames(text: str) -> list[tuple[int, int]]:
    """(label, global id) pairs recovered from caption lines in a text prompt.

    Captions produced by the mock captioner embed a ``frame NNNNNN`` token;
    lines without one cannot be matched against relevant ids and are skipped.
    """
    pairs = []
    for m in _CAPTION_LINE.finditer(text):
        token = _FRAME_TOKEN.search(m.group(2))
        if token:
            pairs.append((int(m.group(1)), int(token.group(1))))
    return pairs


class MockChatBackend:
    """Scripted stand-in for a chat-with-images VLM."""

    def __init__(self, book: ScriptBook | None = None):
        self.book = book or ScriptBook()
        self.calls = 0

    def complete(self, request: ChatRequest) -> ChatResponse:
        self.calls += 1
        text = request.text()
        entry = self.book.match(text)
        if SELECTION_MARKER in text:
            out = self._selection(request, text, entry)
        elif any(marker in text for marker in CAPTION_MARKERS):
            out = self._caption(request, entry)
        elif JUDGE_MARKER in text:
            out = self._judge(text, entry)
        elif AGGREGATE_MARKER in text:
            out = self._aggregate(text)
        else:
            out = self._answer(request, text, entry)
        return ChatResponse(text=out, usage=TokenUsage(), backend_latency_ms=0)

    # Role handlers ----------------------------------------------------

    def _selection(self, request: ChatRequest, text: str, entry: ScriptEntry) -> str:
        script = entry.selection or self.book.default.selection
        if script is None:
            return _selection_json([])
        if script.mode == "fixed_text":
            return script.params["text"]

        pairs = _labelled_images(request) or _captioned_frames(text)
        relevant = set(script.params.get("relevant_ids", []))
        if script.mode == "oracle_select":
            labels = [label for label, gid in pairs if gid in relevant]
            return _selection_json(labels)
        if script.mode == "noisy_select":
            rng = _request_rng(script.params.get("seed", 0), request)
            labels = []
            for label, gid in pairs:
                if gid in relevant:
                    if rng.random() >= script.params.get("fn_rate", 0.0):
                        labels.append(label)
                elif rng.random() < script.params.get("fp_rate", 0.0):
                    labels.append(label)
            return _selection_json(labels)
        if script.mode == "malformed_json":
            rng = _request_rng(script.params.get("seed", 0), request)
            if rng.random() < script.params.get("probability", 1.0):
                return MALFORMED_TEXT
            labels = [label for label, gid in pairs if gid in relevant]
            return _selection_json(labels)
        raise ValueError(f"unknown selection mode {script.mode!r}")

    def _answer(self, request: ChatRequest, text: str, entry: ScriptEntry) -> str:
        script = entry.answer or self.book.default.answer
        if script is None:
            return "Final Answer: (1)"
        if script.mode == "fixed_text":
            return script.params["text"]
        if script.mode == "needle_answer":
            relevant = set(script.params["relevant_ids"])
            presented = set(request.presented_frame_ids())
            fraction = len(presented & relevant) / len(relevant) if relevant else 0.0
            if fraction >= script.params.get("required_fraction", 1.0):
                choice = script.params["correct_index"]
                seen = "show"
            elif ABSTAIN_MARKER in text:
                return "ABSTAIN: this window does not show the queried moment."
            else:
                choice = script.params["distractor_index"]
                seen = "do not show"
            # choice indices are 0-based in scripts; prompts number options from 1
            return (
                f"The presented frames {seen} the queried moment. "
                f"Final Answer: ({choice + 1})"
            )
        raise ValueError(f"unknown answer mode {script.mode!r}")

    def _caption(self, request: ChatRequest, entry: ScriptEntry) -> str:
        script = entry.caption or self.book.default.caption
        images = request.image_parts()
        frame_id = images[0].frame_id if images else 0
        if script is None:
            return f"a still image, frame {frame_id:06d}"
        if script.mode == "fixed_text":
            return script.params["text"].format(frame_id=frame_id)
        raise ValueError(f"unknown caption mode {script.mode!r}")

    def _judge(self, text: str, entry: ScriptEntry) -> str:
        script = entry.judge or self.book.default.judge
        if script is not None and script.mode == "fixed_score":
            return f"Score: {script.params['score']}"
        truth = _field_line(text, "Ground truth: ")
        prediction = _field_line(text, "Prediction: ")
        same = (
            truth is not None
            and prediction is not None
            and truth.strip().casefold() == prediction.strip().casefold()
        )
        return f"Score: {5 if same else 1}"

    def _aggregate(self, text: str) -> str:
        digits = [int(d) for d in _WINDOW_PROPOSAL.findall(text)]
        if not digits:
            return "No window proposed an answer. Final Answer: (1)"
        counts = Counter(digits)
        best = max(counts.items(), key=lambda kv: (kv[1], -kv[0]))[0]
        return f"The windows agree. Final Answer: ({best})"


def _selection_json(labels: Sequence[int]) -> str:
    return json.dumps(
        {"frame_ids": sorted(labels), "justification": "scripted oracle selection"},
        sort_keys=True,
    )


def _field_line(text: str, prefix: str) -> str | None:
    for line in text.splitlines():
        if line.startswith(prefix):
            return line[len(prefix):]
    return None


def _request_rng(seed: int, request: ChatRequest) -> random.Random:
    return random.Random(f"{seed}:{hash_request(request)}")


class MockEmbeddingBackend:
    """Seeded pseudo-random unit vectors keyed by content hash.

    ``pinned`` maps a content key (the exact text, or ``sha256:<hex>`` of
    image bytes) to an explicit vector, letting tests construct known
    similarity orderings.
    """

    def __init__(
        self,
        seed: int = 0,
        dim: int = 64,
        text_token_limit: int | None = None,
        pinned: dict[str, Sequence[float]] | None = None,
    ):
        self.seed = seed
        self.dim = dim
        self.text_token_limit = text_token_limit
        self.pinned = dict(pinned or {})

    def embed(self, items: Sequence[Part]) -> list[list[float]]:
        out = []
        for item in items:
            if isinstance(item, TextPart):
                key = item.text
            else:
                key = "sha256:" + hashlib.sha256(item.read_bytes()).hexdigest()
            if key in self.pinned:
                vec = [float(x) for x in self.pinned[key]]
            else:
                rng = random.Random(f"{self.seed}:{key}")
                vec = [rng.gauss(0.0, 1.0) for _ in range(self.dim)]
            norm = sum(x * x for x in vec) ** 0.5
            if norm == 0.0:
                vec, norm = [1.0] + [0.0] * (len(vec) - 1), 1.0
            out.append([x / norm for x in vec])
        return out
