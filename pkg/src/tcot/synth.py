"""Synthetic needle benchmark: planted relevant spans plus a scripted backend.

Generates real frame files (tiny solid-colour JPEGs whose colour encodes
the frame index), a dataset whose reference spans are the planted needles,
and a mock script wiring oracle selection and needle-gated answering to
those spans. Everything derives from one seed, so output bytes are
identical across runs; this is the offline surrogate for long videos whose
relevant moments uniform sampling tends to miss.
"""

from __future__ import annotations

import json
import logging
import random
from dataclasses import dataclass, field
from pathlib import Path

from PIL import Image

from .dataset import QARecord
from .errors import ConfigError
from .frames import FRAME_FILENAME, MANIFEST_NAME

logger = logging.getLogger(__name__)

DEFAULT_QUESTION_TEMPLATE = (
    "Which banner is shown during highlighted moment {ordinal} of video {video_id}?"
)

OPTION_TEXTS = [
    "a red banner",
    "a blue banner",
    "a green banner",
    "a yellow banner",
    "a purple banner",
]

CAPTION_TEMPLATE = "a solid colour scene, frame {frame_id:06d}"


@dataclass(frozen=True)
class SynthSpec:
    n_videos: int = 50
    frames_per_video: int = 2000
    needles_per_video: int = 1
    needle_span_len: int = 5
    seed: int = 7
    n_distractors: int = 4
    question_templates: tuple[str, ...] = (DEFAULT_QUESTION_TEMPLATE,)
    # None means any single needle frame in context suffices for a correct answer
    required_needle_fraction: float | None = None

    def __post_init__(self) -> None:
        if self.n_videos < 1:
            raise ConfigError("n_videos must be >= 1")
        if self.frames_per_video < 1:
            raise ConfigError("frames_per_video must be >= 1")
        if self.needles_per_video < 1:
            raise ConfigError("needles_per_video must be >= 1")
        if self.needle_span_len < 1:
            raise ConfigError("needle_span_len must be >= 1")
        if self.needle_span_len > self.frames_per_video:
            raise ConfigError(
                f"needle span of {self.needle_span_len} frames does not fit a "
                f"{self.frames_per_video}-frame video"
            )
        if self.needles_per_video * self.needle_span_len > self.frames_per_video:
            raise ConfigError("needles do not fit the video without overlap")
        if not 1 <= self.n_distractors <= len(OPTION_TEXTS) - 1:
            raise ConfigError(
                f"n_distractors must be in 1..{len(OPTION_TEXTS) - 1}"
            )
        if not self.question_templates:
            raise ConfigError("question_templates must be non-empty")

    @classmethod
    def from_file(cls, path: Path | str) -> "SynthSpec":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        if "question_templates" in data:
            data["question_templates"] = tuple(data["question_templates"])
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(f"bad synth spec fields: {exc}") from exc


@dataclass(frozen=True)
class SynthPaths:
    dataset: Path
    frames_root: Path
    mock_script: Path


def _place_spans(
    rng: random.Random, frame_count: int, count: int, span_len: int
) -> list[tuple[int, int]]:
    spans: list[tuple[int, int]] = []
    for _ in range(count):
        for _attempt in range(10000):
            start = rng.randint(1, frame_count - span_len + 1)
            end = start + span_len - 1
            if all(end < s or start > e for s, e in spans):
                spans.append((start, end))
                break
        else:
            raise ConfigError(
                f"could not place {count} non-overlapping spans of {span_len} "
                f"frames in {frame_count} frames"
            )
    return sorted(spans)


def render_frame_image(frame_id: int, video_index: int = 0) -> Image.Image:
    """Tiny image whose bytes encode the frame index, JPEG-robustly.

    The index is written as base-13 digits into separate 8x8 blocks with
    grey steps of 19, which survive JPEG quantization, so every frame of a
    video has distinct bytes (required for content-addressed caching and
    content-keyed mock embeddings to tell frames apart). Covers indices up
    to 13^3 - 1 = 2196 per strip; longer videos extend the strip.
    """
    blocks = 3
    capacity = 13**blocks
    while frame_id >= capacity:
        blocks += 1
        capacity *= 13
    image = Image.new("RGB", (8 * blocks, 8))
    digits = frame_id
    for b in range(blocks):
        level = (digits % 13) * 19
        digits //= 13
        block = Image.new("RGB", (8, 8), (level, (level + video_index * 37) % 256, 255 - level))
        image.paste(block, (b * 8, 0))
    return image


def _write_frames(
    frames_dir: Path, video_id: str, frame_count: int, video_index: int
) -> None:
    frames_dir.mkdir(parents=True, exist_ok=True)
    for frame_id in range(1, frame_count + 1):
        image = render_frame_image(frame_id, video_index)
        image.save(frames_dir / FRAME_FILENAME.format(frame_id), format="JPEG", quality=70)
    manifest = {"video_id": video_id, "frame_count": frame_count}
    (frames_dir / MANIFEST_NAME).write_text(
        json.dumps(manifest, sort_keys=True) + "\n", encoding="utf-8"
    )


def generate_benchmark(spec: SynthSpec, out_dir: Path | str) -> SynthPaths:
    """Generate frames, dataset and mock script under ``out_dir``."""
    out = Path(out_dir)
    frames_root = out / "frames"
    out.mkdir(parents=True, exist_ok=True)
    rng = random.Random(spec.seed)
    options = OPTION_TEXTS[: spec.n_distractors + 1]

    records: list[QARecord] = []
    script_questions: dict[str, dict] = {}
    for video_index in range(spec.n_videos):
        video_id = f"video{video_index:04d}"
        _write_frames(
            frames_root / video_id,
            video_id,
            spec.frames_per_video,
            video_index,
        )
        spans = _place_spans(
            rng, spec.frames_per_video, spec.needles_per_video, spec.needle_span_len
        )
        for ordinal, (start, end) in enumerate(spans, start=1):
            question_id = f"{video_id}_q{ordinal}"
            template = spec.question_templates[(ordinal - 1) % len(spec.question_templates)]
            question = template.format(video_id=video_id, ordinal=ordinal)
            correct = rng.randrange(len(options))
            relevant = list(range(start, end + 1))
            required = (
                spec.required_needle_fraction
                if spec.required_needle_fraction is not None
                else 1.0 / len(relevant)
            )
            records.append(
                QARecord(
                    question_id=question_id,
                    video_id=video_id,
                    question=question,
                    options=tuple(options),
                    answer_index=correct,
                    question_type="needle",
                    # frame f covers seconds [f-1, f): span (start-1, end) maps
                    # back to exactly frames start..end
                    reference_spans=((float(start - 1), float(end)),),
                )
            )
            script_questions[question_id] = {
                "question": question,
                "selection": {"mode": "oracle_select", "relevant_ids": relevant},
                "answer": {
                    "mode": "needle_answer",
                    "relevant_ids": relevant,
                    "required_fraction": required,
                    "correct_index": correct,
                    "distractor_index": (correct + 1) % len(options),
                },
            }

    questions = [r.question for r in records]
    if len(set(questions)) != len(questions):
        raise ConfigError(
            "question templates must yield unique question texts per needle "
            "(include {video_id} and {ordinal})"
        )

    dataset_path = out / "dataset.jsonl"
    with dataset_path.open("w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record.to_dict(), sort_keys=True) + "\n")

    script = {
        "schema": 1,
        "default": {"caption": {"mode": "fixed_text", "text": CAPTION_TEMPLATE}},
        "questions": script_questions,
    }
    script_path = out / "mock_script.json"
    script_path.write_text(
        json.dumps(script, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    logger.info(
        "generated %d videos x %d frames, %d questions under %s",
        spec.n_videos,
        spec.frames_per_video,
        len(records),
        out,
    )
    return SynthPaths(dataset=dataset_path, frames_root=frames_root, mock_script=script_path)
