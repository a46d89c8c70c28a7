"""Prompt rendering and response parsing.

Selection prompts label frames with *local* ids 1..n and the parser maps
them back to global ids, so the model never sees absolute positions it was
not shown. Answer prompts leave frames unlabeled. All parsers are total:
they never raise on arbitrary model output, and a selection response that
fails JSON extraction degrades to the documented select-everything
fallback.

The exact prompt texts are pinned byte-for-byte by golden files under
``prompts/`` in the repository root. The window-answer and aggregation
templates are this project's own wording; the rest follow the upstream
protocol verbatim.
"""

from __future__ import annotations

import ast
import json
import logging
import re
import warnings
from dataclasses import dataclass, field
from typing import Literal, Mapping, Sequence

from .errors import JudgeParseFailure, UnknownStyle
from .frames import ContextSet, FrameStore
from .gateway.types import ImagePart, Part, TextPart

logger = logging.getLogger(__name__)

Dialect = Literal["digit_paren", "bare_letter", "open_ended"]

SELECTION_INSTRUCTION = (
    "Return the frame ids which can answer the given question.\n\n"
    "Please use the following JSON format for your output:\n"
    "{'frame_ids': [List of integer frame IDs],\n"
    "'justification': Justification about your output}"
)

ANSWER_DIGIT_INSTRUCTION = (
    "After explaining your reasoning, output the final answer in the format. "
    '"Final Answer: (X)" where X is the correct digit choice. Never say '
    '"unknown" or "unsure", or "None", instead provide your most likely guess.'
)

ANSWER_LETTER_INSTRUCTION = (
    "Carefully watch the video and pay attention to the cause and sequence of "
    "events, the detail and movement of objects and the action and pose of "
    "persons. Based on your observations, select the best option that "
    "accurately addresses the question."
)

ANSWER_LETTER_SUFFIX = (
    "Answer with the option's letter from the given choices directly and only "
    "give the best option."
)

ANSWER_OPEN_ENDED_INSTRUCTION = (
    "You will be given a question about a video.You will be provided frames "
    "from the video, retrieved by an intelligent agent. It is crucial that "
    "you imagine the visual scene as vividly as possible to enhance the "
    "accuracy of your response."
)

CAPTION_PROMPTS = {
    "concise": "Write a concise description of the image in a sentence",
    "long": "Write a paragraph describing the image in detail",
}

# Local templates for the independent-window baseline; not upstream wording.
SEGMENT_ANSWER_INSTRUCTION = (
    "After explaining your reasoning, output the final answer in the format. "
    '"Final Answer: (X)" where X is the correct digit choice.'
)
SEGMENT_ABSTAIN_SUFFIX = (
    "If this window does not contain enough information to answer "
    'confidently, reply exactly "ABSTAIN" instead of guessing.'
)
AGGREGATE_HEADER = (
    "You will be given a question about a video and {count} possible answer "
    "options, together with answers proposed independently for separate "
    "windows of the video."
)
AGGREGATE_INSTRUCTION = (
    "Considering the proposals above, output the final answer in the format. "
    '"Final Answer: (X)" where X is the correct digit choice.'
)
NO_PROPOSALS_LINE = "No window produced a confident answer."

_COUNT_WORDS = {
    2: "two", 3: "three", 4: "four", 5: "five",
    6: "six", 7: "seven", 8: "eight", 9: "nine", 10: "ten",
}

_FINAL_ANSWER = re.compile(
    r"final answer[:\s]*\(?\s*([A-Ea-e]|[0-9]+)\s*\)?", re.IGNORECASE
)
_BARE_OPTION = re.compile(r"^\(?([A-Ea-e]|[0-9]+)\)?\.?$")


@dataclass(frozen=True)
class RepairFlags:
    """What the selection parser had to fix; fallback_all marks a full miss."""

    sorted: bool = False
    deduped: bool = False
    clamped: bool = False
    fallback_all: bool = False
    empty: bool = False

    def to_dict(self) -> dict:
        return {
            "sorted": self.sorted,
            "deduped": self.deduped,
            "clamped": self.clamped,
            "fallback_all": self.fallback_all,
            "empty": self.empty,
        }


@dataclass(frozen=True)
class SelectionOutput:
    """Validated frame selection in global id space."""

    frame_ids: tuple[int, ...]
    justification: str
    repaired: RepairFlags = field(default_factory=RepairFlags)


@dataclass(frozen=True)
class AnswerOutput:
    """Parsed multiple-choice answer; choice_index is 0-based or None."""

    choice_index: int | None
    raw_text: str
    parse_path: str  # final_answer_pattern | bare_option | fallback_first_option | unparsed | open_ended

    def to_dict(self) -> dict:
        return {
            "choice_index": self.choice_index,
            "raw_text": self.raw_text,
            "parse_path": self.parse_path,
        }


@dataclass(frozen=True)
class JudgeScore:
    raw: int
    normalized: float

    @classmethod
    def from_raw(cls, raw: int) -> "JudgeScore":
        if not 1 <= raw <= 5:
            raise ValueError(f"raw score must be in 1..5, got {raw}")
        return cls(raw=raw, normalized=(raw - 1) / 4 * 100.0)


def _options_header(count: int) -> str:
    word = _COUNT_WORDS.get(count, str(count))
    return f"You will be given a question about a video and {word} possible answer options."


def _choices_digit(options: Sequence[str]) -> str:
    return " ".join(f"({i}) {opt}" for i, opt in enumerate(options, start=1))


def _choices_letter(options: Sequence[str]) -> str:
    return " ".join(f"{chr(ord('A') + i)}. {opt}" for i, opt in enumerate(options))


def parts_text(parts: Sequence[Part]) -> str:
    """Canonical text form of a parts list, images rendered as ``{frame}``."""
    return "".join(
        p.text if isinstance(p, TextPart) else "{frame}" for p in parts
    )


def _image(store: FrameStore, frame_id: int) -> ImagePart:
    return ImagePart(path=store.frame_path(frame_id), frame_id=frame_id)


def render_selection_prompt(
    store: FrameStore,
    frame_ids: Sequence[int],
    question: str,
    options: Sequence[str],
) -> tuple[list[Part], dict[int, int]]:
    """Render the frame-selection prompt over the presented frames.

    Returns the parts plus the local-to-global id map needed to translate
    the model's answer back to absolute frame ids.
    """
    if not frame_ids:
        raise ValueError("must present at least one frame")
    header = (
        _options_header(len(options))
        if options
        else "You will be given a question about a video."
    )
    parts: list[Part] = [TextPart(header + "\n\n")]
    for local, frame_id in enumerate(frame_ids, start=1):
        prefix = "" if local == 1 else ","
        parts.append(TextPart(f"{prefix}FrameID {local}:"))
        parts.append(_image(store, frame_id))
    tail = f"\nQuestion: {question}\n"
    if options:
        tail += f"Possible answer choices: {_choices_digit(options)}\n"
    tail += f"\n{SELECTION_INSTRUCTION}"
    parts.append(TextPart(tail))
    local_to_global = {local: fid for local, fid in enumerate(frame_ids, start=1)}
    return parts, local_to_global


def render_selection_prompt_from_captions(
    captions: Sequence[str],
    frame_ids: Sequence[int],
    question: str,
    options: Sequence[str],
) -> tuple[list[Part], dict[int, int]]:
    """Selection prompt variant presenting one caption line per frame."""
    if len(captions) != len(frame_ids) or not frame_ids:
        raise ValueError("captions and frame_ids must be parallel and non-empty")
    header = (
        _options_header(len(options))
        if options
        else "You will be given a question about a video."
    )
    lines = "\n".join(
        f"FrameID {local}: {_single_line(cap)}"
        for local, cap in enumerate(captions, start=1)
    )
    text = f"{header}\n\n{lines}\nQuestion: {question}\n"
    if options:
        text += f"Possible answer choices: {_choices_digit(options)}\n"
    text += f"\n{SELECTION_INSTRUCTION}"
    local_to_global = {local: fid for local, fid in enumerate(frame_ids, start=1)}
    return [TextPart(text)], local_to_global


def render_answer_prompt(
    store: FrameStore,
    context: ContextSet,
    question: str,
    options: Sequence[str],
    dialect: Dialect,
) -> list[Part]:
    """Render the answering prompt; frames appear unlabeled, in id order."""
    if len(context) == 0:
        raise ValueError("answer context must contain at least one frame")
    frame_parts: list[Part] = []
    for i, fid in enumerate(context.frame_ids):
        if i > 0:
            frame_parts.append(TextPart(", "))
        frame_parts.append(_image(store, fid))

    if dialect == "digit_paren":
        header = (
            _options_header(len(options))
            + " You are provided frames from the video, retrieved by an intelligent agent."
        )
        parts: list[Part] = [TextPart(header + "\n\nFrames: ")]
        parts += frame_parts
        parts.append(
            TextPart(
                f"\nQuestion: {question}\n"
                f"Possible answer choices: {_choices_digit(options)}\n\n"
                f"{ANSWER_DIGIT_INSTRUCTION}"
            )
        )
        return parts
    if dialect == "bare_letter":
        parts = [TextPart("Frames: ")]
        parts += frame_parts
        parts.append(
            TextPart(
                f"\n\n{ANSWER_LETTER_INSTRUCTION}\n"
                f"Question: {question}\n"
                f"Options: {_choices_letter(options)}\n"
                f"{ANSWER_LETTER_SUFFIX}"
            )
        )
        return parts
    if dialect == "open_ended":
        parts = [TextPart("Frames: ")]
        parts += frame_parts
        parts.append(
            TextPart(f"\n\n{ANSWER_OPEN_ENDED_INSTRUCTION}\nQuestion: {question}\n")
        )
        return parts
    raise ValueError(f"unknown dialect {dialect!r}")


def render_caption_prompt(style: str) -> str:
    """Verbatim captioning prompt for ``concise`` or ``long`` style."""
    try:
        return CAPTION_PROMPTS[style]
    except KeyError:
        raise UnknownStyle(f"caption style must be one of {sorted(CAPTION_PROMPTS)}, got {style!r}")


def render_segment_answer_prompt(
    store: FrameStore,
    frame_ids: Sequence[int],
    question: str,
    options: Sequence[str],
    high_confidence: bool = False,
) -> list[Part]:
    """Per-window answer prompt for the independent-segment baseline."""
    if not frame_ids:
        raise ValueError("must present at least one frame")
    header = (
        _options_header(len(options))
        + " You are provided frames from one window of a longer video."
    )
    parts: list[Part] = [TextPart(header + "\n\nFrames: ")]
    for i, fid in enumerate(frame_ids):
        if i > 0:
            parts.append(TextPart(", "))
        parts.append(_image(store, fid))
    tail = (
        f"\nQuestion: {question}\n"
        f"Possible answer choices: {_choices_digit(options)}\n\n"
        f"{SEGMENT_ANSWER_INSTRUCTION}"
    )
    if high_confidence:
        tail += f"\n{SEGMENT_ABSTAIN_SUFFIX}"
    parts.append(TextPart(tail))
    return parts


def render_aggregate_prompt(
    proposals: Sequence[tuple[int, int, str]],
    question: str,
    options: Sequence[str],
) -> list[Part]:
    """Final aggregation prompt over (window index, 0-based choice, justification)."""
    count = _COUNT_WORDS.get(len(options), str(len(options)))
    if proposals:
        lines = "\n".join(
            f"Window {w}: Final Answer: ({c + 1}). Justification: {_single_line(j)}"
            for w, c, j in proposals
        )
    else:
        lines = NO_PROPOSALS_LINE
    text = (
        AGGREGATE_HEADER.format(count=count)
        + f"\n\nQuestion: {question}\n"
        + f"Possible answer choices: {_choices_digit(options)}\n\n"
        + f"Proposed window answers:\n{lines}\n\n"
        + AGGREGATE_INSTRUCTION
    )
    return [TextPart(text)]


def _single_line(text: str) -> str:
    return " ".join(text.split())


# Parsing ----------------------------------------------------------------


def _extract_first_object(text: str) -> dict | None:
    """First JSON-ish object in the text, tolerating fences and prose.

    Strict JSON is tried first; a balanced-brace span is then offered to
    ``ast.literal_eval`` to accept the single-quoted dict style the
    selection instruction itself displays.
    """
    decoder = json.JSONDecoder()
    pos = text.find("{")
    attempts = 0
    while pos != -1 and attempts < 200:
        try:
            obj, _ = decoder.raw_decode(text, pos)
            if isinstance(obj, dict):
                return obj
        except ValueError:
            pass
        end = _balanced_end(text, pos)
        if end != -1:
            try:
                # malformed escapes in garbage input raise compile-time
                # warnings; they are expected here, not actionable
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore")
                    obj = ast.literal_eval(text[pos : end + 1])
                if isinstance(obj, dict):
                    return obj
            except Exception:
                pass
        attempts += 1
        pos = text.find("{", pos + 1)
    return None


def _balanced_end(text: str, start: int, max_span: int = 20000) -> int:
    depth = 0
    for j in range(start, min(len(text), start + max_span)):
        if text[j] == "{":
            depth += 1
        elif text[j] == "}":
            depth -= 1
            if depth == 0:
                return j
    return -1


def _coerce_int(value) -> int | None:
    if isinstance(value, bool):
        return None
    if isinstance(value, int):
        return value
    if isinstance(value, str):
        s = value.strip()
        if s.lstrip("-").isdigit():
            return int(s)
    return None


def parse_selection_response(
    text: str,
    presented: Sequence[int],
    local_to_global: Mapping[int, int],
) -> SelectionOutput:
    """Parse a selection response into global frame ids, repairing or falling back.

    Mildly malformed id lists are repaired (sorted, deduplicated, out-of-range
    locals dropped); only a full extraction or schema failure triggers the
    select-everything fallback. An empty-but-valid list stays empty: an
    irrelevant window is allowed to contribute nothing.
    """
    obj = _extract_first_object(text or "")
    raw_ids = obj.get("frame_ids") if isinstance(obj, dict) else None
    if not isinstance(raw_ids, list):
        logger.debug("selection parse failed, falling back to all presented frames")
        return SelectionOutput(
            frame_ids=tuple(presented),
            justification="",
            repaired=RepairFlags(fallback_all=True),
        )
    coerced = [_coerce_int(x) for x in raw_ids]
    ints = [x for x in coerced if x is not None]
    valid = [x for x in ints if x in local_to_global]
    clamped = len(valid) != len(raw_ids)
    deduped = len(set(valid)) != len(valid)
    out_of_order = valid != sorted(valid)
    global_ids = tuple(sorted({local_to_global[x] for x in valid}))
    justification = obj.get("justification", "")
    if not isinstance(justification, str):
        justification = str(justification)
    return SelectionOutput(
        frame_ids=global_ids,
        justification=justification,
        repaired=RepairFlags(
            sorted=out_of_order,
            deduped=deduped,
            clamped=clamped,
            empty=not global_ids,
        ),
    )


def _token_to_index(token: str, option_count: int, dialect: str) -> int | None:
    if dialect == "digit_paren":
        if token.isdigit():
            value = int(token)
            if 1 <= value <= option_count:
                return value - 1
        return None
    if token.isalpha() and len(token) == 1:
        index = ord(token.upper()) - ord("A")
        if 0 <= index < option_count:
            return index
    return None


def parse_final_answer(text: str, option_count: int, dialect: str = "digit_paren") -> AnswerOutput:
    """Parse a multiple-choice answer via the documented ladder.

    (1) last valid ``Final Answer: (X)`` / ``Final Answer: X`` occurrence,
    (2) a bare option token on the last non-empty line, (3) unparsed.
    Unparsed is a value, not an error; scoring counts it as incorrect.
    """
    text = text or ""
    for match in reversed(list(_FINAL_ANSWER.finditer(text))):
        index = _token_to_index(match.group(1), option_count, dialect)
        if index is not None:
            return AnswerOutput(index, text, "final_answer_pattern")
    lines = [line.strip() for line in text.splitlines() if line.strip()]
    if lines:
        match = _BARE_OPTION.match(lines[-1])
        if match:
            index = _token_to_index(match.group(1), option_count, dialect)
            if index is not None:
                return AnswerOutput(index, text, "bare_option")
    return AnswerOutput(None, text, "unparsed")


def parse_judge_score(text: str) -> JudgeScore:
    """First integer in 1..5 found in the judge response, normalized to 0-100."""
    for match in re.finditer(r"\d+", text or ""):
        value = int(match.group(0))
        if 1 <= value <= 5:
            return JudgeScore.from_raw(value)
    raise JudgeParseFailure(f"no score in 1..5 found in {text[:200]!r}")
