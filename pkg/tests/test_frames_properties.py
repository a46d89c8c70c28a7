"""Property tests for the frame arithmetic invariants."""

from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import oracle_merge, oracle_uniform_sample
from tcot.frames import (
    expand_neighborhood,
    merge_context,
    partition_segments,
    subsample_to_limit,
    uniform_sample,
)


@given(n_frames=st.integers(1, 10_000), n=st.integers(1, 10_000))
@settings(max_examples=300)
def test_uniform_sample_matches_oracle(n_frames, n):
    ids = uniform_sample(n_frames, n)
    assert ids == oracle_uniform_sample(n_frames, n)
    assert len(ids) == min(n, n_frames)
    assert all(1 <= i <= n_frames for i in ids)
    assert all(b > a for a, b in zip(ids, ids[1:]))
    assert ids == uniform_sample(n_frames, n)


@given(data=st.data(), n_frames=st.integers(1, 5_000))
@settings(max_examples=300)
def test_partition_covers_exactly(data, n_frames):
    segment_count = data.draw(st.integers(1, n_frames))
    segments = partition_segments(n_frames, segment_count)
    covered = [f for s in segments for f in range(s.first, s.last + 1)]
    assert covered == list(range(1, n_frames + 1))
    sizes = [s.size for s in segments]
    assert max(sizes) - min(sizes) <= 1
    assert [s.index for s in segments] == list(range(1, segment_count + 1))


@given(ids=st.lists(st.integers(1, 10_000), unique=True).map(sorted), m=st.integers(0, 200))
@settings(max_examples=300)
def test_subsample_is_an_ordered_subset(ids, m):
    out = subsample_to_limit(ids, m)
    assert len(out) == min(len(ids), m)
    assert set(out) <= set(ids)
    assert out == sorted(out)
    positions = [ids.index(x) for x in out]
    assert positions == sorted(positions)


@given(data=st.data(), n_frames=st.integers(1, 3_000))
@settings(max_examples=300)
def test_merge_context_invariants(data, n_frames):
    budget_k = data.draw(st.integers(1, 200))
    u = data.draw(st.integers(0, budget_k))
    selected = data.draw(st.lists(st.integers(1, n_frames), max_size=300))
    context = merge_context(selected, n_frames, budget_k, u)
    assert len(context) <= budget_k
    ids = list(context.frame_ids)
    assert ids == sorted(set(ids))
    assert set(uniform_sample(n_frames, u)) <= set(ids)
    expected_ids, expected_provenance = oracle_merge(selected, n_frames, budget_k, u)
    assert ids == expected_ids
    assert list(context.provenance) == expected_provenance


@given(data=st.data(), n_frames=st.integers(1, 2_000), radius=st.integers(0, 50))
@settings(max_examples=200)
def test_expand_neighborhood_is_monotone(data, n_frames, radius):
    larger = data.draw(st.sets(st.integers(1, n_frames), max_size=30))
    smaller = data.draw(st.sets(st.sampled_from(sorted(larger)), max_size=30)) if larger else set()
    small_out = expand_neighborhood(smaller, radius, n_frames)
    large_out = expand_neighborhood(larger, radius, n_frames)
    assert set(small_out) <= set(large_out)
    assert small_out == sorted(set(small_out))
    assert all(1 <= f <= n_frames for f in large_out)
