"""Prompt rendering against golden files; parser fixtures and fuzz."""

import json
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tcot.errors import JudgeParseFailure, UnknownStyle
from tcot.evaluation import DEFAULT_JUDGE_TEMPLATE
from tcot.frames import ContextSet
from tcot.gateway.mock import (
    ABSTAIN_MARKER,
    AGGREGATE_MARKER,
    CAPTION_MARKERS,
    JUDGE_MARKER,
    SELECTION_MARKER,
)
from tcot.prompting import (
    parse_final_answer,
    parse_judge_score,
    parse_selection_response,
    parts_text,
    render_aggregate_prompt,
    render_answer_prompt,
    render_caption_prompt,
    render_segment_answer_prompt,
    render_selection_prompt,
    render_selection_prompt_from_captions,
)

REPO = Path(__file__).resolve().parent.parent
PROMPTS = REPO / "prompts"
FIXTURES = REPO / "fixtures" / "parsing"

QUESTION = "What colour is the car?"
OPTIONS5 = ["red", "blue", "green", "yellow", "black"]
OPTIONS4 = ["red", "blue", "green", "yellow"]


@pytest.fixture()
def store3(store_factory):
    return store_factory(3, video_id="golden3")


def golden(name: str) -> str:
    return (PROMPTS / name).read_text(encoding="utf-8")


class TestGoldenPrompts:
    def test_selection_prompt(self, store3):
        parts, mapping = render_selection_prompt(store3, [1, 2, 3], QUESTION, OPTIONS5)
        assert parts_text(parts) == golden("selection.txt")
        assert mapping == {1: 1, 2: 2, 3: 3}
        text = parts_text(parts)
        assert "FrameID 1:" in text and "FrameID 2:" in text and "FrameID 3:" in text
        assert "'frame_ids'" in text and "'justification'" in text

    def test_selection_prompt_from_captions(self):
        parts, mapping = render_selection_prompt_from_captions(
            ["a red car", "an empty road"], [10, 20], QUESTION, OPTIONS4
        )
        assert parts_text(parts) == golden("selection_captions.txt")
        assert mapping == {1: 10, 2: 20}

    def test_answer_digit_paren(self, store3):
        context = ContextSet((1, 3), ("selected", "uniform"))
        parts = render_answer_prompt(store3, context, QUESTION, OPTIONS5, "digit_paren")
        text = parts_text(parts)
        assert text == golden("answer_digit_paren.txt")
        assert text.endswith("provide your most likely guess.")
        assert 'Never say "unknown"' in text
        assert "FrameID" not in text  # answer frames are unlabeled

    def test_answer_bare_letter(self, store3):
        context = ContextSet((1, 3), ("selected", "uniform"))
        parts = render_answer_prompt(store3, context, QUESTION, OPTIONS4, "bare_letter")
        text = parts_text(parts)
        assert text == golden("answer_bare_letter.txt")
        assert "Answer with the option's letter from the given choices directly" in text

    def test_answer_open_ended(self, store3):
        context = ContextSet((1, 3), ("selected", "uniform"))
        parts = render_answer_prompt(store3, context, QUESTION, [], "open_ended")
        text = parts_text(parts)
        assert text == golden("answer_open_ended.txt")
        assert "retrieved by an intelligent agent" in text
        assert "Possible answer choices" not in text

    def test_caption_prompts(self):
        assert render_caption_prompt("concise") == golden("caption_concise.txt")
        assert render_caption_prompt("long") == golden("caption_long.txt")
        with pytest.raises(UnknownStyle):
            render_caption_prompt("haiku")

    def test_segment_answer_prompts(self, store3):
        plain = render_segment_answer_prompt(store3, [1, 2], QUESTION, OPTIONS4, False)
        confident = render_segment_answer_prompt(store3, [1, 2], QUESTION, OPTIONS4, True)
        assert parts_text(plain) == golden("segment_answer.txt")
        assert parts_text(confident) == golden("segment_answer_high_confidence.txt")

    def test_aggregate_prompt(self):
        parts = render_aggregate_prompt(
            [(1, 2, "saw the car clearly"), (3, 2, "plate visible")], QUESTION, OPTIONS4
        )
        assert parts_text(parts) == golden("aggregate_answer.txt")

    def test_frame_ordering_and_local_map_offset(self, store_factory):
        store = store_factory(500, video_id="offsets")
        frames = list(range(341, 405))
        parts, mapping = render_selection_prompt(store, frames, QUESTION, OPTIONS4)
        assert mapping == {local: 340 + local for local in range(1, 65)}
        presented = [p.frame_id for p in parts if hasattr(p, "frame_id")]
        assert presented == frames


class TestMockMarkersMatchPrompts:
    """The scripted backend routes on literal snippets of these prompts."""

    def test_selection_marker(self):
        assert SELECTION_MARKER in golden("selection.txt")

    def test_caption_markers(self):
        assert set(CAPTION_MARKERS) == {
            render_caption_prompt("concise"),
            render_caption_prompt("long"),
        }

    def test_judge_marker(self):
        assert JUDGE_MARKER in DEFAULT_JUDGE_TEMPLATE

    def test_aggregate_marker(self):
        assert AGGREGATE_MARKER in golden("aggregate_answer.txt")

    def test_abstain_marker(self):
        assert ABSTAIN_MARKER in golden("segment_answer_high_confidence.txt")
        assert ABSTAIN_MARKER not in golden("segment_answer.txt")


class TestParseSelection:
    @pytest.mark.parametrize(
        "case",
        json.loads((FIXTURES / "selection_cases.json").read_text()),
        ids=lambda case: case["name"],
    )
    def test_fixture(self, case):
        presented = case["presented"]
        mapping = {local: fid for local, fid in enumerate(presented, start=1)}
        output = parse_selection_response(case["text"], presented, mapping)
        assert list(output.frame_ids) == case["expected_ids"]
        assert output.repaired.to_dict() == case["expected_flags"]

    @given(st.data())
    @settings(max_examples=300)
    def test_round_trip_recovers_exact_ids(self, data):
        n = data.draw(st.integers(1, 40))
        presented = sorted(data.draw(st.sets(st.integers(1, 10_000), min_size=n, max_size=n)))
        mapping = {local: fid for local, fid in enumerate(presented, start=1)}
        locals_chosen = sorted(data.draw(st.sets(st.integers(1, n), max_size=n)))
        text = json.dumps({"frame_ids": locals_chosen, "justification": "x"})
        output = parse_selection_response(text, presented, mapping)
        assert list(output.frame_ids) == [mapping[l] for l in locals_chosen]
        assert not output.repaired.fallback_all

    @given(st.text(max_size=300))
    @settings(max_examples=500)
    def test_never_raises_never_out_of_range(self, text):
        presented = [10, 20, 30]
        mapping = {1: 10, 2: 20, 3: 30}
        output = parse_selection_response(text, presented, mapping)
        ids = list(output.frame_ids)
        assert ids == sorted(set(ids))
        assert set(ids) <= set(presented)
        if "{" not in text:
            assert output.repaired.fallback_all
            assert ids == presented


class TestParseFinalAnswer:
    @pytest.mark.parametrize(
        "case",
        json.loads((FIXTURES / "final_answer_cases.json").read_text()),
        ids=lambda case: case["name"],
    )
    def test_fixture(self, case):
        output = parse_final_answer(case["text"], case["option_count"], case["dialect"])
        assert output.choice_index == case["expected_index"]
        assert output.parse_path == case["expected_path"]

    @given(st.text(max_size=300), st.integers(2, 5), st.sampled_from(["digit_paren", "bare_letter"]))
    @settings(max_examples=500)
    def test_never_raises_in_range_or_unparsed(self, text, option_count, dialect):
        output = parse_final_answer(text, option_count, dialect)
        if output.choice_index is not None:
            assert 0 <= output.choice_index < option_count
        else:
            assert output.parse_path == "unparsed"


class TestParseJudgeScore:
    def test_top_of_scale(self):
        score = parse_judge_score("Score: 5")
        assert score.raw == 5 and score.normalized == 100.0

    def test_bottom_of_scale(self):
        score = parse_judge_score("1")
        assert score.raw == 1 and score.normalized == 0.0

    def test_out_of_range_tokens_skipped(self):
        assert parse_judge_score("confidence 10, score 4").raw == 4

    def test_failure(self):
        with pytest.raises(JudgeParseFailure):
            parse_judge_score("seven")
