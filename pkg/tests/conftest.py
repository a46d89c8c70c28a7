"""Shared fixtures: tiny frame stores and scripted gateways."""

from __future__ import annotations

from pathlib import Path

import pytest
from hypothesis import settings

from tcot.dataset import QARecord
from tcot.frames import FrameStore
from tcot.gateway import MockChatBackend, MockEmbeddingBackend, ScriptBook, VlmGateway
from tcot.synth import render_frame_image

settings.register_profile("ci", deadline=None)
settings.load_profile("ci")

OPTIONS4 = ("a red banner", "a blue banner", "a green banner", "a yellow banner")


@pytest.fixture(scope="session")
def store_factory(tmp_path_factory):
    """Build (and reuse) small frame stores keyed by frame count."""
    root = tmp_path_factory.mktemp("frames")
    built: dict[str, FrameStore] = {}

    def build(frame_count: int, video_id: str | None = None) -> FrameStore:
        vid = video_id or f"v{frame_count}"
        if vid in built:
            return built[vid]
        frames_dir = root / vid
        frames_dir.mkdir()
        for i in range(1, frame_count + 1):
            render_frame_image(i).save(
                frames_dir / f"{i:06d}.jpg", format="JPEG", quality=70
            )
        store = FrameStore(video_id=vid, frame_count=frame_count, frames_dir=frames_dir)
        built[vid] = store
        return store

    return build


def make_qa(
    question_id: str = "q1",
    video_id: str = "v200",
    question: str = "Which banner is shown during the highlighted moment?",
    options: tuple[str, ...] = OPTIONS4,
    answer_index: int | None = 1,
    **kwargs,
) -> QARecord:
    return QARecord(
        question_id=question_id,
        video_id=video_id,
        question=question,
        options=options,
        answer_index=answer_index if options else None,
        **kwargs,
    )


def make_gateway(
    questions: dict | None = None,
    default: dict | None = None,
    cache_dir: Path | None = None,
    embedding=None,
    embedding_seed: int = 0,
) -> tuple[VlmGateway, MockChatBackend]:
    book = ScriptBook.from_dict({"questions": questions or {}, "default": default or {}})
    backend = MockChatBackend(book)
    if embedding is None:
        embedding = MockEmbeddingBackend(seed=embedding_seed)
    gateway = VlmGateway(
        backend, model_id="mock-vlm", embedding_backend=embedding, cache_dir=cache_dir
    )
    return gateway, backend


def oracle_entry(question: str, relevant: list[int], correct: int = 1, n_options: int = 4) -> dict:
    """Script entry wiring oracle selection and needle answering for one question."""
    return {
        "question": question,
        "selection": {"mode": "oracle_select", "relevant_ids": relevant},
        "answer": {
            "mode": "needle_answer",
            "relevant_ids": relevant,
            "required_fraction": 1.0 / len(relevant) if relevant else 1.0,
            "correct_index": correct,
            "distractor_index": (correct + 1) % n_options,
        },
    }
