"""Scoring and analysis over run traces.

Accuracy treats unparsed answers as incorrect. Selection precision and
recall compare the pre-refinement selected ids against the reference
spans, mapped to frame ids as floor(start)+1 .. ceil(end) at 1 fps; recall
is frame-level, with a span-level variant (a span counts as hit when at
least one selected frame falls inside it) reported alongside since either
granularity is defensible.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .dataset import QARecord
from .errors import MissingRecord, NoReferenceSpans
from .gateway import TextPart, VlmGateway
from .prompting import JudgeScore, parse_judge_score
from .trace import RunTrace

logger = logging.getLogger(__name__)

DEFAULT_JUDGE_TEMPLATE = (
    "You are grading answers to video questions. Compare the prediction to "
    "the ground truth and reply with a single integer score from 1 to 5, "
    "where 5 means the prediction fully matches the ground truth and 1 means "
    "it does not match at all.\n"
    "Question: {question}\n"
    "Ground truth: {ground_truth}\n"
    "Prediction: {prediction}\n"
    "Score:"
)

COST_COLUMNS = [
    "strategy",
    "config_hash",
    "n_questions",
    "accuracy",
    "context_tokens_max",
    "total_tokens_mean",
]


@dataclass
class MetricsReport:
    accuracy: float
    n_questions: int
    n_scored: int
    per_type_accuracy: dict[str, float] = field(default_factory=dict)
    mean_selected_fraction: float | None = None
    per_type_selected_fraction: dict[str, float] = field(default_factory=dict)
    mean_context_tokens: float = 0.0
    mean_total_tokens: float = 0.0
    mean_precision: float | None = None
    mean_recall: float | None = None
    mean_recall_span: float | None = None
    per_question_precision_recall: dict[str, tuple[float, float]] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "n_questions": self.n_questions,
            "n_scored": self.n_scored,
            "per_type_accuracy": self.per_type_accuracy,
            "mean_selected_fraction": self.mean_selected_fraction,
            "per_type_selected_fraction": self.per_type_selected_fraction,
            "mean_context_tokens": self.mean_context_tokens,
            "mean_total_tokens": self.mean_total_tokens,
            "mean_precision": self.mean_precision,
            "mean_recall": self.mean_recall,
            "mean_recall_span": self.mean_recall_span,
            "per_question_precision_recall": {
                qid: list(pr) for qid, pr in sorted(self.per_question_precision_recall.items())
            },
        }


def reference_frame_ids(spans: Sequence[tuple[float, float]]) -> set[int]:
    """Frame ids covered by second-level spans at 1 fps, inclusive both ends."""
    ids: set[int] = set()
    for start, end in spans:
        ids.update(range(math.floor(start) + 1, math.ceil(end) + 1))
    return ids


def selection_precision_recall(trace: RunTrace, record: QARecord) -> tuple[float, float]:
    """Frame-level precision/recall of the initial selection vs time references.

    An empty selection scores precision 1.0 (nothing wrongly selected);
    a degenerate reference set scores recall 1.0. Both cases are logged.
    """
    if not record.reference_spans:
        raise NoReferenceSpans(f"record {record.question_id} has no reference spans")
    reference = reference_frame_ids(record.reference_spans)
    selected = set(trace.selected_ids_initial)
    hits = len(selected & reference)
    if selected:
        precision = hits / len(selected)
    else:
        logger.debug("empty selection for %s, precision defined as 1.0", record.question_id)
        precision = 1.0
    if reference:
        recall = hits / len(reference)
    else:
        logger.debug("empty reference set for %s, recall defined as 1.0", record.question_id)
        recall = 1.0
    return precision, recall


def selection_span_recall(trace: RunTrace, record: QARecord) -> float:
    """Fraction of reference spans containing at least one selected frame."""
    if not record.reference_spans:
        raise NoReferenceSpans(f"record {record.question_id} has no reference spans")
    selected = set(trace.selected_ids_initial)
    hit = 0
    for span in record.reference_spans:
        if reference_frame_ids([span]) & selected:
            hit += 1
    return hit / len(record.reference_spans)


def selected_fraction(trace: RunTrace, pool_size: int) -> float:
    """Share of the considered pool the model initially selected."""
    if pool_size < 1:
        raise ValueError("pool_size must be >= 1")
    return len(trace.selected_ids_initial) / pool_size


def is_correct(trace: RunTrace, record: QARecord) -> bool:
    return (
        not record.is_open_ended
        and trace.answer.get("choice_index") == record.answer_index
    )


def _records_by_id(records: Iterable[QARecord]) -> dict[str, QARecord]:
    return {r.question_id: r for r in records}


def score_run(traces: Sequence[RunTrace], records: Iterable[QARecord]) -> MetricsReport:
    """Aggregate accuracy, token and selection metrics over one run."""
    by_id = _records_by_id(records)
    correct = 0
    scored = 0
    per_type: dict[str, list[bool]] = {}
    fractions: list[float] = []
    per_type_fraction: dict[str, list[float]] = {}
    precisions: list[float] = []
    recalls: list[float] = []
    span_recalls: list[float] = []
    per_question_pr: dict[str, tuple[float, float]] = {}
    for trace in traces:
        record = by_id.get(trace.question_id)
        if record is None:
            raise MissingRecord(f"no dataset record for trace {trace.question_id!r}")
        if not record.is_open_ended:
            scored += 1
            ok = is_correct(trace, record)
            correct += ok
            if record.question_type:
                per_type.setdefault(record.question_type, []).append(ok)
        pool = trace.selection_pool_size()
        if pool:
            fraction = selected_fraction(trace, pool)
            fractions.append(fraction)
            if record.question_type:
                per_type_fraction.setdefault(record.question_type, []).append(fraction)
            if record.reference_spans:
                p, r = selection_precision_recall(trace, record)
                precisions.append(p)
                recalls.append(r)
                span_recalls.append(selection_span_recall(trace, record))
                per_question_pr[trace.question_id] = (p, r)

    def mean(values: Sequence[float]) -> float | None:
        return sum(values) / len(values) if values else None

    return MetricsReport(
        accuracy=correct / scored if scored else 0.0,
        n_questions=len(traces),
        n_scored=scored,
        per_type_accuracy={t: sum(v) / len(v) for t, v in sorted(per_type.items())},
        mean_selected_fraction=mean(fractions),
        per_type_selected_fraction={
            t: sum(v) / len(v) for t, v in sorted(per_type_fraction.items())
        },
        mean_context_tokens=(
            sum(t.context_tokens_max for t in traces) / len(traces) if traces else 0.0
        ),
        mean_total_tokens=(
            sum(t.total_tokens for t in traces) / len(traces) if traces else 0.0
        ),
        mean_precision=mean(precisions),
        mean_recall=mean(recalls),
        mean_recall_span=mean(span_recalls),
        per_question_precision_recall=per_question_pr,
    )


def judge_open_ended(
    trace: RunTrace,
    record: QARecord,
    judge_gateway: VlmGateway,
    judge_prompt_template: str = DEFAULT_JUDGE_TEMPLATE,
) -> JudgeScore:
    """Score one open-ended prediction against the ground truth with a judge call."""
    if not record.is_open_ended:
        raise ValueError(f"record {record.question_id} is multiple choice")
    for placeholder in ("{question}", "{ground_truth}", "{prediction}"):
        if placeholder not in judge_prompt_template:
            raise ValueError(f"judge template is missing {placeholder}")
    prompt = judge_prompt_template.format(
        question=record.question,
        ground_truth=record.answer_text or "",
        prediction=trace.answer.get("raw_text", ""),
    )
    response = judge_gateway.complete_chat(judge_gateway.request([TextPart(prompt)]))
    return parse_judge_score(response.text)


def judge_dataset(
    traces: Sequence[RunTrace],
    records: Iterable[QARecord],
    judge_gateway: VlmGateway,
    judge_prompt_template: str = DEFAULT_JUDGE_TEMPLATE,
) -> tuple[float | None, dict[str, float]]:
    """Mean normalized judge score over open-ended items; failures are skipped."""
    by_id = _records_by_id(records)
    scores: dict[str, float] = {}
    for trace in traces:
        record = by_id.get(trace.question_id)
        if record is None or not record.is_open_ended:
            continue
        try:
            scores[trace.question_id] = judge_open_ended(
                trace, record, judge_gateway, judge_prompt_template
            ).normalized
        except Exception as exc:
            logger.warning("judge failed for %s: %s", trace.question_id, exc)
    mean = sum(scores.values()) / len(scores) if scores else None
    return mean, scores


def cost_report(
    grouped: Mapping[tuple[str, str], Sequence[RunTrace]],
    records: Iterable[QARecord],
) -> list[dict]:
    """Cost/accuracy rows per (strategy, config hash), cheapest first."""
    by_id = _records_by_id(records)
    rows = []
    for (strategy, config_hash), traces in grouped.items():
        if not traces:
            continue
        for trace in traces:
            if trace.question_id not in by_id:
                raise MissingRecord(f"no dataset record for trace {trace.question_id!r}")
        scored = [t for t in traces if not by_id[t.question_id].is_open_ended]
        correct = sum(is_correct(t, by_id[t.question_id]) for t in scored)
        rows.append(
            {
                "strategy": strategy,
                "config_hash": config_hash,
                "n_questions": len(traces),
                "accuracy": correct / len(scored) if scored else 0.0,
                "context_tokens_max": max(t.context_tokens_max for t in traces),
                "total_tokens_mean": sum(t.total_tokens for t in traces) / len(traces),
            }
        )
    rows.sort(key=lambda row: (row["total_tokens_mean"], row["strategy"]))
    return rows


def write_cost_report(rows: Sequence[dict], csv_path: Path, json_path: Path | None = None) -> None:
    """Emit cost rows as CSV (fixed column order) and JSON."""
    with csv_path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=COST_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow({col: row[col] for col in COST_COLUMNS})
    if json_path is not None:
        json_path.write_text(
            json.dumps(list(rows), indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
