"""Independent brute-force re-implementations of the frame arithmetic.

These stay deliberately separate from the package code paths: the
sampling rule is evaluated as a float guess corrected against the exact
defining inequality, partitioning uses closed-form boundary formulas, and
merging is plain set algebra.
"""

from __future__ import annotations


def oracle_uniform_sample(frame_count: int, n: int) -> list[int]:
    """id_i is the unique integer with id-1 <= (i-0.5)*N/n < id.

    A float estimate seeds the search; the exact cross-multiplied
    inequality (id-1)*2n <= (2i-1)*N < id*2n settles it.
    """
    n = min(n, frame_count)
    if n <= 0:
        return []
    out = []
    for i in range(1, n + 1):
        numerator = (2 * i - 1) * frame_count
        candidate = 1 + int((i - 0.5) * frame_count / n)
        while (candidate - 1) * 2 * n > numerator:
            candidate -= 1
        while candidate * 2 * n <= numerator:
            candidate += 1
        out.append(candidate)
    return out


def oracle_partition(frame_count: int, segment_count: int) -> list[tuple[int, int]]:
    base, extra = divmod(frame_count, segment_count)
    bounds = []
    for i in range(1, segment_count + 1):
        first = (i - 1) * base + min(i - 1, extra) + 1
        size = base + (1 if i <= extra else 0)
        bounds.append((first, first + size - 1))
    return bounds


def oracle_subsample(ids: list[int], m: int) -> list[int]:
    if len(ids) <= m:
        return list(ids)
    return [ids[p - 1] for p in oracle_uniform_sample(len(ids), m)]


def oracle_merge(
    selected: list[int], frame_count: int, budget_k: int, u: int
) -> tuple[list[int], list[str]]:
    unique = sorted(set(selected))
    kept = set(oracle_subsample(unique, budget_k - u))
    uniform = set(oracle_uniform_sample(frame_count, u))
    merged = sorted(kept | uniform)
    provenance = ["selected" if f in kept else "uniform" for f in merged]
    return merged, provenance
