"""Frame arithmetic: worked examples and oracle spot checks."""

import json

import pytest

from oracles import oracle_merge, oracle_partition, oracle_subsample, oracle_uniform_sample
from tcot.errors import BudgetTooSmall, InvalidPartition
from tcot.frames import (
    ContextSet,
    FrameStore,
    TokenBudget,
    expand_neighborhood,
    frames_for_budget,
    merge_context,
    partition_segments,
    subsample_to_limit,
    uniform_sample,
)


class TestUniformSample:
    def test_center_of_bin_examples(self):
        assert uniform_sample(10, 5) == [2, 4, 6, 8, 10]
        assert uniform_sample(7, 7) == [1, 2, 3, 4, 5, 6, 7]

    def test_340_frames_64_samples(self):
        ids = uniform_sample(340, 64)
        assert ids == oracle_uniform_sample(340, 64)
        assert len(ids) == 64
        assert ids[0] == 3 and ids[-1] == 338
        assert ids == sorted(set(ids))
        assert all(1 <= i <= 340 for i in ids)

    def test_clamps_oversampling(self):
        assert uniform_sample(5, 100) == [1, 2, 3, 4, 5]

    def test_zero_count_is_empty(self):
        assert uniform_sample(10, 0) == []

    def test_rejects_bad_frame_count(self):
        with pytest.raises(ValueError):
            uniform_sample(0, 3)


class TestPartitionSegments:
    def test_even_partition_matches_arithmetic(self):
        segments = partition_segments(4080, 12)
        assert len(segments) == 12
        for segment in segments:
            assert segment.size == 340
            assert segment.first == (segment.index - 1) * 340 + 1
            assert segment.last == segment.index * 340

    def test_single_segment_identity(self):
        (segment,) = partition_segments(10, 1)
        assert (segment.first, segment.last) == (1, 10)

    def test_remainder_goes_to_front(self):
        bounds = [(s.first, s.last) for s in partition_segments(11, 3)]
        assert bounds == [(1, 4), (5, 8), (9, 11)]
        assert bounds == oracle_partition(11, 3)

    @pytest.mark.parametrize("n,l", [(1, 2), (10, 0), (5, -1)])
    def test_invalid_partition(self, n, l):
        with pytest.raises(InvalidPartition):
            partition_segments(n, l)


class TestFramesForBudget:
    def test_reference_budget(self):
        assert frames_for_budget(TokenBudget(32768, 258, 1808)) == 120

    def test_single_frame_budget(self):
        assert frames_for_budget(TokenBudget(258, 258, 0)) == 1

    def test_small_model_budget(self):
        assert frames_for_budget(TokenBudget(22000, 85, 750)) == 250

    def test_budget_too_small(self):
        with pytest.raises(BudgetTooSmall):
            frames_for_budget(TokenBudget(200, 258, 0))

    def test_invalid_reserve(self):
        with pytest.raises(ValueError):
            TokenBudget(1000, 10, 1000)


class TestSubsampleToLimit:
    def test_under_limit_identity(self):
        assert subsample_to_limit([5, 6, 7], 10) == [5, 6, 7]

    def test_positions_compose_with_uniform_sample(self):
        ids = list(range(101, 301))
        expected = [ids[p - 1] for p in uniform_sample(200, 100)]
        assert subsample_to_limit(ids, 100) == expected
        assert subsample_to_limit(ids, 100) == oracle_subsample(ids, 100)

    def test_zero_budget(self):
        assert subsample_to_limit(list(range(1, 11)), 0) == []


class TestMergeContext:
    def test_fits_budget_no_uniform(self):
        context = merge_context([500, 501, 502, 503, 504], 2040, 120, 0)
        assert list(context.frame_ids) == [500, 501, 502, 503, 504]
        assert set(context.provenance) == {"selected"}

    def test_all_uniform_equals_full_video(self):
        context = merge_context([], 120, 120, 120)
        assert list(context.frame_ids) == list(range(1, 121))
        assert set(context.provenance) == {"uniform"}

    def test_overflow_subsamples_then_unions(self):
        selected = list(range(1000, 1200))
        context = merge_context(selected, 4080, 120, 32)
        assert len(context) <= 120
        assert len(context.selected_ids()) == 88
        assert len(context.uniform_ids()) <= 32
        ids, provenance = oracle_merge(selected, 4080, 120, 32)
        assert list(context.frame_ids) == ids
        assert list(context.provenance) == provenance

    def test_collision_tagged_selected(self):
        # uniform_sample(10, 2) = [3, 8]; select 3 so it collides
        context = merge_context([3], 10, 5, 2)
        tags = dict(zip(context.frame_ids, context.provenance))
        assert tags[3] == "selected"
        assert tags[8] == "uniform"

    def test_rejects_bad_u(self):
        with pytest.raises(ValueError):
            merge_context([], 10, 5, 6)

    def test_rejects_out_of_range_ids(self):
        with pytest.raises(ValueError):
            merge_context([0], 10, 5, 0)


class TestExpandNeighborhood:
    def test_disjoint_windows(self):
        assert expand_neighborhood({10, 50}, 3, 100) == list(range(7, 14)) + list(range(47, 54))

    def test_boundary_clamp(self):
        assert expand_neighborhood({1}, 5, 100) == [1, 2, 3, 4, 5, 6]

    def test_overlap_merges(self):
        assert expand_neighborhood({10, 12}, 2, 100) == list(range(8, 15))

    def test_zero_radius_identity(self):
        assert expand_neighborhood({4, 9}, 0, 10) == [4, 9]


class TestContextSet:
    def test_requires_ascending(self):
        with pytest.raises(ValueError):
            ContextSet((3, 2), ("uniform", "uniform"))

    def test_round_trip(self):
        context = ContextSet((1, 5), ("selected", "uniform"))
        assert ContextSet.from_dict(context.to_dict()) == context


class TestFrameStore:
    def test_open_scans_directory(self, store_factory):
        built = store_factory(7)
        store = FrameStore.open(built.frames_dir.parent, built.video_id)
        assert store.frame_count == 7
        assert store.read_payload(3) == built.frame_path(3).read_bytes()

    def test_manifest_overrides_scan(self, store_factory, tmp_path):
        built = store_factory(9, video_id="manifested")
        manifest = built.frames_dir / "manifest.json"
        manifest.write_text(json.dumps({"video_id": "manifested", "frame_count": 4}))
        store = FrameStore.open(built.frames_dir.parent, "manifested")
        assert store.frame_count == 4

    def test_out_of_range_id(self, store_factory):
        store = store_factory(5)
        with pytest.raises(ValueError):
            store.frame_path(6)

    def test_missing_directory(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            FrameStore.open(tmp_path, "absent")
