"""Synthetic benchmark generator: structure, seeding, determinism."""

import json

import pytest

from tcot.dataset import load_dataset
from tcot.errors import ConfigError
from tcot.frames import FrameStore
from tcot.synth import SynthSpec, generate_benchmark, render_frame_image


SMALL = SynthSpec(n_videos=3, frames_per_video=60, needle_span_len=5, seed=7)


class TestSpecValidation:
    def test_span_must_fit(self):
        with pytest.raises(ConfigError):
            SynthSpec(frames_per_video=4, needle_span_len=5)

    def test_needles_must_fit_without_overlap(self):
        with pytest.raises(ConfigError):
            SynthSpec(frames_per_video=10, needles_per_video=3, needle_span_len=4)

    def test_from_file(self, tmp_path):
        path = tmp_path / "spec.json"
        path.write_text(json.dumps({"n_videos": 2, "frames_per_video": 30}))
        spec = SynthSpec.from_file(path)
        assert spec.n_videos == 2
        path.write_text(json.dumps({"bogus_field": 1}))
        with pytest.raises(ConfigError):
            SynthSpec.from_file(path)


@pytest.fixture(scope="module")
def bench(tmp_path_factory):
    out = tmp_path_factory.mktemp("bench")
    return generate_benchmark(SMALL, out), out


class TestGeneratedBenchmark:
    def test_one_record_per_needle_with_spans(self, bench):
        paths, _ = bench
        records = load_dataset(paths.dataset)
        assert len(records) == 3
        for record in records:
            (span,) = record.reference_spans
            start, end = span
            assert end - start == 5.0
            assert 0.0 <= start and end <= 60.0
            assert record.answer_index is not None

    def test_frames_and_manifest_exist(self, bench):
        paths, _ = bench
        store = FrameStore.open(paths.frames_root, "video0000")
        assert store.frame_count == 60
        assert store.read_payload(60)

    def test_frame_bytes_unique_within_video(self, bench):
        paths, _ = bench
        store = FrameStore.open(paths.frames_root, "video0001")
        blobs = {store.read_payload(i) for i in range(1, 61)}
        assert len(blobs) == 60

    def test_script_wires_oracle_to_spans(self, bench):
        paths, _ = bench
        script = json.loads(paths.mock_script.read_text())
        records = load_dataset(paths.dataset)
        for record in records:
            entry = script["questions"][record.question_id]
            assert entry["question"] == record.question
            start, end = record.reference_spans[0]
            expected = list(range(int(start) + 1, int(end) + 1))
            assert entry["selection"]["relevant_ids"] == expected
            assert entry["answer"]["relevant_ids"] == expected
            assert entry["answer"]["correct_index"] == record.answer_index
            assert entry["answer"]["distractor_index"] != record.answer_index

    def test_deterministic_bytes(self, tmp_path):
        a = generate_benchmark(SMALL, tmp_path / "a")
        b = generate_benchmark(SMALL, tmp_path / "b")
        assert a.dataset.read_bytes() == b.dataset.read_bytes()
        assert a.mock_script.read_bytes() == b.mock_script.read_bytes()
        probe = "video0002/000033.jpg"
        assert (a.frames_root / probe).read_bytes() == (b.frames_root / probe).read_bytes()

    def test_different_seed_moves_needles(self, tmp_path):
        a = generate_benchmark(SMALL, tmp_path / "a")
        other = SynthSpec(n_videos=3, frames_per_video=60, needle_span_len=5, seed=8)
        b = generate_benchmark(other, tmp_path / "b")
        assert a.dataset.read_bytes() != b.dataset.read_bytes()


class TestFrameImageEncoding:
    def test_large_indices_get_wider_strips(self):
        small = render_frame_image(5)
        large = render_frame_image(13**3 + 1)
        assert small.size == (24, 8)
        assert large.size[0] > 24
