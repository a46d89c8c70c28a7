"""Context-curating inference strategies for long-video question answering."""

from .dataset import QARecord, load_dataset
from .frames import (
    ContextSet,
    FrameStore,
    Segment,
    TokenBudget,
    expand_neighborhood,
    frames_for_budget,
    merge_context,
    partition_segments,
    subsample_to_limit,
    uniform_sample,
)
from .strategies import STRATEGIES, StrategyConfig
from .trace import CallRecord, RunTrace

__all__ = [
    "CallRecord",
    "ContextSet",
    "FrameStore",
    "QARecord",
    "RunTrace",
    "STRATEGIES",
    "Segment",
    "StrategyConfig",
    "TokenBudget",
    "expand_neighborhood",
    "frames_for_budget",
    "load_dataset",
    "merge_context",
    "partition_segments",
    "subsample_to_limit",
    "uniform_sample",
]

__version__ = "0.1.0"
