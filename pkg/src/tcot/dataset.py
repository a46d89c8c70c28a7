"""Dataset records and JSONL loading.

One record per line: ``{"question_id", "video_id", "question", "options"?,
"answer_index"?, "answer_text"?, "question_type"?, "reference_spans"?}``.
Empty or missing options mark a record open-ended; reference spans are
(start_s, end_s) pairs in seconds at 1 fps.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import SchemaError


@dataclass(frozen=True)
class QARecord:
    question_id: str
    video_id: str
    question: str
    options: tuple[str, ...] = ()
    answer_index: int | None = None
    answer_text: str | None = None
    question_type: str | None = None
    reference_spans: tuple[tuple[float, float], ...] | None = None

    @property
    def is_open_ended(self) -> bool:
        return not self.options

    def to_dict(self) -> dict:
        out: dict = {
            "question_id": self.question_id,
            "video_id": self.video_id,
            "question": self.question,
        }
        if self.options:
            out["options"] = list(self.options)
        if self.answer_index is not None:
            out["answer_index"] = self.answer_index
        if self.answer_text is not None:
            out["answer_text"] = self.answer_text
        if self.question_type is not None:
            out["question_type"] = self.question_type
        if self.reference_spans is not None:
            out["reference_spans"] = [list(span) for span in self.reference_spans]
        return out


def _validate_record(data: dict) -> QARecord:
    for key in ("question_id", "video_id", "question"):
        if not isinstance(data.get(key), str) or not data[key]:
            raise ValueError(f"missing or empty field {key!r}")
    options = data.get("options") or []
    if not isinstance(options, list) or not all(isinstance(o, str) for o in options):
        raise ValueError("options must be a list of strings")
    answer_index = data.get("answer_index")
    if options:
        if not 2 <= len(options) <= 5:
            raise ValueError(f"multiple choice needs 2..5 options, got {len(options)}")
        if not isinstance(answer_index, int) or isinstance(answer_index, bool):
            raise ValueError("multiple choice requires an integer answer_index")
        if not 0 <= answer_index < len(options):
            raise ValueError(
                f"answer_index {answer_index} out of range for {len(options)} options"
            )
    else:
        if not isinstance(data.get("answer_text"), str):
            raise ValueError("open-ended record requires answer_text")
        answer_index = None
    spans = data.get("reference_spans")
    parsed_spans: tuple[tuple[float, float], ...] | None = None
    if spans is not None:
        parsed = []
        for span in spans:
            if not (isinstance(span, (list, tuple)) and len(span) == 2):
                raise ValueError(f"span {span!r} must be a [start, end] pair")
            start, end = float(span[0]), float(span[1])
            if not 0 <= start <= end:
                raise ValueError(f"span {span!r} must satisfy 0 <= start <= end")
            parsed.append((start, end))
        parsed_spans = tuple(parsed)
    return QARecord(
        question_id=data["question_id"],
        video_id=data["video_id"],
        question=data["question"],
        options=tuple(options),
        answer_index=answer_index,
        answer_text=data.get("answer_text"),
        question_type=data.get("question_type"),
        reference_spans=parsed_spans,
    )


def load_dataset(path: Path | str) -> list[QARecord]:
    """Load and validate a JSONL dataset.

    All malformed lines are reported together with their line numbers;
    duplicate question ids are rejected.
    """
    path = Path(path)
    records: list[QARecord] = []
    seen: dict[str, int] = {}
    problems: list[str] = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                data = json.loads(line)
                if not isinstance(data, dict):
                    raise ValueError("line is not a JSON object")
                record = _validate_record(data)
            except (ValueError, TypeError) as exc:
                problems.append(f"line {lineno}: {exc}")
                continue
            if record.question_id in seen:
                problems.append(
                    f"line {lineno}: duplicate question_id {record.question_id!r} "
                    f"(first seen on line {seen[record.question_id]})"
                )
                continue
            seen[record.question_id] = lineno
            records.append(record)
    if problems:
        raise SchemaError(f"{path}: " + "; ".join(problems))
    return records


def dataset_sha256(path: Path | str) -> str:
    import hashlib

    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
