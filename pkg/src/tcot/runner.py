"""Experiment runner: configuration, run directories, resumability, merging.

A run directory is self-describing: ``config.resolved.json`` plus the
dataset suffice to reproduce it. Traces stream to ``traces.jsonl`` one
JSON object per question as they complete (crash-safe append); wall-clock
timings go to a separate ``timings.jsonl`` sidecar so trace bytes stay
reproducible. Re-running skips questions that already have a trace unless
forced. With the mock backend, fixed seeds and ``parallelism = 1`` two
runs produce byte-identical traces and reports.
"""

from __future__ import annotations

import hashlib
import json
import logging
import threading
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from pathlib import Path

from .dataset import QARecord, dataset_sha256, load_dataset
from .errors import BackendUnavailable, ConfigError, DatasetMismatch, MissingTraces
from .evaluation import (
    DEFAULT_JUDGE_TEMPLATE,
    cost_report,
    judge_dataset,
    score_run,
    write_cost_report,
)
from .frames import FrameStore
from .gateway import MockChatBackend, MockEmbeddingBackend, ScriptBook, VlmGateway
from .gateway.http import OpenAIChatBackend, OpenAIEmbeddingBackend
from .strategies import STRATEGIES, StrategyConfig
from .trace import RunTrace

logger = logging.getLogger(__name__)

TRACES_NAME = "traces.jsonl"
TIMINGS_NAME = "timings.jsonl"
FAILURES_NAME = "failures.jsonl"
RESOLVED_CONFIG_NAME = "config.resolved.json"
REPORT_JSON_NAME = "report.json"
REPORT_CSV_NAME = "report.csv"


@dataclass(frozen=True)
class BackendSpec:
    kind: str  # "mock" | "http"
    model_id: str = "mock-vlm"
    base_url: str | None = None
    api_key_env: str = "OPENAI_API_KEY"
    script: Path | None = None
    requests_per_minute: int | None = None
    timeout_s: float = 120.0

    def __post_init__(self) -> None:
        if self.kind not in ("mock", "http"):
            raise ConfigError(f"backend kind must be 'mock' or 'http', got {self.kind!r}")
        if self.kind == "http" and not self.base_url:
            raise ConfigError("http backend requires base_url")
        if self.kind == "mock" and self.script is None:
            raise ConfigError("mock backend requires a script path")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "model_id": self.model_id,
            "base_url": self.base_url,
            "api_key_env": self.api_key_env,
            "script": str(self.script) if self.script else None,
            "requests_per_minute": self.requests_per_minute,
            "timeout_s": self.timeout_s,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "BackendSpec":
        data = dict(data)
        if data.get("script"):
            data["script"] = Path(data["script"])
        return cls(**data)


@dataclass(frozen=True)
class EmbeddingSpec:
    kind: str = "mock"  # "mock" | "http"
    model_id: str = "mock-embed"
    base_url: str | None = None
    api_key_env: str = "OPENAI_API_KEY"
    seed: int = 0
    dim: int = 64
    text_token_limit: int | None = None

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "model_id": self.model_id,
            "base_url": self.base_url,
            "api_key_env": self.api_key_env,
            "seed": self.seed,
            "dim": self.dim,
            "text_token_limit": self.text_token_limit,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "EmbeddingSpec":
        return cls(**data)


@dataclass
class ExperimentConfig:
    dataset: Path
    frames_root: Path
    strategy: str
    output_dir: Path
    strategy_config: StrategyConfig = field(default_factory=StrategyConfig)
    backend: BackendSpec = field(default_factory=lambda: BackendSpec(kind="mock", script=Path("mock_script.json")))
    embedding: EmbeddingSpec | None = None
    cache_dir: Path | None = None
    parallelism: int = 1
    failure_threshold: float = 0.0
    judge: bool = False
    judge_template: Path | None = None

    def validate(self) -> None:
        if self.strategy not in STRATEGIES:
            raise ConfigError(
                f"unknown strategy {self.strategy!r}; valid strategies: "
                + ", ".join(sorted(STRATEGIES))
            )
        if not self.dataset.exists():
            raise ConfigError(f"dataset not found: {self.dataset}")
        if not self.frames_root.exists():
            raise ConfigError(f"frames_root not found: {self.frames_root}")
        if self.backend.kind == "mock" and not Path(self.backend.script).exists():
            raise ConfigError(f"mock script not found: {self.backend.script}")
        if self.parallelism < 1:
            raise ConfigError("parallelism must be >= 1")
        if not 0.0 <= self.failure_threshold <= 1.0:
            raise ConfigError("failure_threshold must be in [0, 1]")
        if self.judge_template is not None and not self.judge_template.exists():
            raise ConfigError(f"judge template not found: {self.judge_template}")

    @classmethod
    def from_file(cls, path: Path | str) -> "ExperimentConfig":
        path = Path(path)
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        base = path.parent

        def respath(key: str, default: str | None = None) -> Path | None:
            value = data.get(key, default)
            if value is None:
                return None
            p = Path(value)
            return p if p.is_absolute() else base / p

        try:
            strategy_config = StrategyConfig.from_dict(data.get("strategy_config", {}))
            backend_raw = dict(data.get("backend", {}))
            if backend_raw.get("script"):
                script = Path(backend_raw["script"])
                backend_raw["script"] = script if script.is_absolute() else base / script
            backend = BackendSpec.from_dict(backend_raw) if backend_raw else BackendSpec(
                kind="mock", script=base / "mock_script.json"
            )
            embedding = (
                EmbeddingSpec.from_dict(data["embedding"]) if data.get("embedding") else None
            )
            config = cls(
                dataset=respath("dataset"),  # type: ignore[arg-type]
                frames_root=respath("frames_root"),  # type: ignore[arg-type]
                strategy=data.get("strategy", ""),
                output_dir=respath("output_dir"),  # type: ignore[arg-type]
                strategy_config=strategy_config,
                backend=backend,
                embedding=embedding,
                cache_dir=respath("cache_dir"),
                parallelism=int(data.get("parallelism", 1)),
                failure_threshold=float(data.get("failure_threshold", 0.0)),
                judge=bool(data.get("judge", False)),
                judge_template=respath("judge_template"),
            )
        except (TypeError, ValueError, KeyError) as exc:
            raise ConfigError(f"bad config {path}: {exc}") from exc
        for key in ("dataset", "frames_root", "output_dir"):
            if data.get(key) is None:
                raise ConfigError(f"config {path} is missing required field {key!r}")
        config.validate()
        return config

    def config_hash(self, dataset_hash: str) -> str:
        """Hash identifying the logical experiment (paths excluded)."""
        payload = json.dumps(
            {
                "strategy": self.strategy,
                "strategy_config": self.strategy_config.to_dict(),
                "backend_kind": self.backend.kind,
                "model_id": self.backend.model_id,
                "dataset_hash": dataset_hash,
            },
            sort_keys=True,
        )
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()

    def to_resolved_dict(self, dataset_hash: str) -> dict:
        return {
            "dataset": str(self.dataset.resolve()),
            "dataset_hash": dataset_hash,
            "frames_root": str(self.frames_root.resolve()),
            "strategy": self.strategy,
            "strategy_config": self.strategy_config.to_dict(),
            "backend": self.backend.to_dict(),
            "embedding": self.embedding.to_dict() if self.embedding else None,
            "cache_dir": str(self.cache_dir.resolve()) if self.cache_dir else None,
            "parallelism": self.parallelism,
            "failure_threshold": self.failure_threshold,
            "judge": self.judge,
            "judge_template": str(self.judge_template) if self.judge_template else None,
            "output_dir": str(self.output_dir.resolve()),
            "config_hash": self.config_hash(dataset_hash),
        }


def build_gateway(config: ExperimentConfig) -> VlmGateway:
    if config.backend.kind == "mock":
        try:
            backend = MockChatBackend(ScriptBook.load(config.backend.script))
        except (OSError, ValueError, KeyError) as exc:
            raise BackendUnavailable(
                f"cannot load mock script {config.backend.script}: {exc}"
            ) from exc
    else:
        backend = OpenAIChatBackend(
            base_url=config.backend.base_url,
            api_key_env=config.backend.api_key_env,
            timeout_s=config.backend.timeout_s,
        )
    embedding = None
    if config.embedding is not None:
        if config.embedding.kind == "mock":
            embedding = MockEmbeddingBackend(
                seed=config.embedding.seed,
                dim=config.embedding.dim,
                text_token_limit=config.embedding.text_token_limit,
            )
        else:
            embedding = OpenAIEmbeddingBackend(
                base_url=config.embedding.base_url,
                model_id=config.embedding.model_id,
                api_key_env=config.embedding.api_key_env,
                text_token_limit=config.embedding.text_token_limit,
            )
    return VlmGateway(
        backend=backend,
        model_id=config.backend.model_id,
        embedding_backend=embedding,
        cache_dir=config.cache_dir,
        requests_per_minute=config.backend.requests_per_minute,
    )


@dataclass
class RunResult:
    run_dir: Path
    n_questions: int
    n_new: int
    n_failed: int


def _existing_question_ids(traces_path: Path) -> set[str]:
    done: set[str] = set()
    if not traces_path.exists():
        return done
    with traces_path.open(encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                done.add(json.loads(line)["question_id"])
    return done


def load_traces(traces_path: Path) -> list[RunTrace]:
    if not traces_path.exists():
        raise MissingTraces(f"no trace file at {traces_path}")
    traces = []
    with traces_path.open(encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                traces.append(RunTrace.from_dict(json.loads(line)))
    return traces


def trace_line(trace: RunTrace) -> str:
    return json.dumps(trace.to_dict(), sort_keys=True, separators=(",", ":")) + "\n"


class _StoreCache:
    def __init__(self, frames_root: Path):
        self.frames_root = frames_root
        self._stores: dict[str, FrameStore] = {}
        self._lock = threading.Lock()

    def get(self, video_id: str) -> FrameStore:
        with self._lock:
            store = self._stores.get(video_id)
            if store is None:
                store = FrameStore.open(self.frames_root, video_id)
                self._stores[video_id] = store
            return store


def run_experiment(config: ExperimentConfig, force: bool = False) -> RunResult:
    config.validate()
    run_dir = config.output_dir
    run_dir.mkdir(parents=True, exist_ok=True)
    records = load_dataset(config.dataset)
    dataset_hash = dataset_sha256(config.dataset)

    traces_path = run_dir / TRACES_NAME
    if force:
        for name in (TRACES_NAME, TIMINGS_NAME, FAILURES_NAME, REPORT_JSON_NAME, REPORT_CSV_NAME):
            (run_dir / name).unlink(missing_ok=True)
    (run_dir / RESOLVED_CONFIG_NAME).write_text(
        json.dumps(config.to_resolved_dict(dataset_hash), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )

    done = _existing_question_ids(traces_path)
    pending = [r for r in records if r.question_id not in done]
    logger.info(
        "run %s: %d questions, %d already traced, %d to run",
        config.strategy,
        len(records),
        len(done),
        len(pending),
    )

    gateway = build_gateway(config)
    stores = _StoreCache(config.frames_root)
    strategy_fn = STRATEGIES[config.strategy]
    write_lock = threading.Lock()
    failures: list[tuple[str, str]] = []

    def process(record: QARecord) -> None:
        started = time.monotonic()
        answer, trace = strategy_fn(
            stores.get(record.video_id), record, config.strategy_config, gateway
        )
        wall_ms = int((time.monotonic() - started) * 1000)
        with write_lock:
            with traces_path.open("a", encoding="utf-8") as fh:
                fh.write(trace_line(trace))
            with (run_dir / TIMINGS_NAME).open("a", encoding="utf-8") as fh:
                fh.write(
                    json.dumps(
                        {"question_id": record.question_id, "wall_ms": wall_ms},
                        sort_keys=True,
                    )
                    + "\n"
                )

    if config.parallelism == 1:
        for record in pending:
            try:
                process(record)
            except Exception as exc:
                logger.error("question %s failed: %s", record.question_id, exc)
                failures.append((record.question_id, str(exc)))
    else:
        with ThreadPoolExecutor(max_workers=config.parallelism) as pool:
            futures = {pool.submit(process, r): r for r in pending}
            for future in as_completed(futures):
                record = futures[future]
                try:
                    future.result()
                except Exception as exc:
                    logger.error("question %s failed: %s", record.question_id, exc)
                    failures.append((record.question_id, str(exc)))

    if failures:
        with (run_dir / FAILURES_NAME).open("a", encoding="utf-8") as fh:
            for question_id, error in failures:
                fh.write(json.dumps({"question_id": question_id, "error": error}) + "\n")

    traces = load_traces(traces_path)
    write_report(run_dir, config, traces, records, dataset_hash, gateway)
    return RunResult(
        run_dir=run_dir,
        n_questions=len(records),
        n_new=len(pending) - len(failures),
        n_failed=len(failures),
    )


def write_report(
    run_dir: Path,
    config: ExperimentConfig,
    traces: list[RunTrace],
    records: list[QARecord],
    dataset_hash: str,
    gateway: VlmGateway | None = None,
) -> None:
    metrics = score_run(traces, records)
    config_hash = config.config_hash(dataset_hash)
    rows = cost_report({(config.strategy, config_hash): traces}, records)
    report = {
        "strategy": config.strategy,
        "config_hash": config_hash,
        "dataset_hash": dataset_hash,
        "metrics": metrics.to_dict(),
        "cost": rows,
    }
    if config.judge and gateway is not None:
        template = (
            config.judge_template.read_text(encoding="utf-8")
            if config.judge_template
            else DEFAULT_JUDGE_TEMPLATE
        )
        mean, per_question = judge_dataset(traces, records, gateway, template)
        report["judge"] = {"mean_normalized": mean, "per_question": per_question}
    (run_dir / REPORT_JSON_NAME).write_text(
        json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    write_cost_report(rows, run_dir / REPORT_CSV_NAME)


def merge_runs(run_dirs: list[Path], allow_mixed: bool = False) -> list[dict]:
    """Combine cost/accuracy rows across run directories.

    Runs over different datasets are refused unless ``allow_mixed``;
    duplicate (strategy, config hash) pairs are dropped with a warning.
    """
    if not run_dirs:
        raise MissingTraces("no run directories given")
    rows: list[dict] = []
    seen: set[tuple[str, str]] = set()
    dataset_hashes: set[str] = set()
    for run_dir in run_dirs:
        resolved_path = run_dir / RESOLVED_CONFIG_NAME
        if not resolved_path.exists():
            raise MissingTraces(f"{run_dir} has no {RESOLVED_CONFIG_NAME}")
        resolved = json.loads(resolved_path.read_text(encoding="utf-8"))
        traces = load_traces(run_dir / TRACES_NAME)
        dataset_hashes.add(resolved["dataset_hash"])
        if len(dataset_hashes) > 1 and not allow_mixed:
            raise DatasetMismatch(
                "runs cover different datasets; pass --allow-mixed to merge anyway"
            )
        key = (resolved["strategy"], resolved["config_hash"])
        if key in seen:
            logger.warning("skipping duplicate run %s for %s", run_dir, key)
            continue
        seen.add(key)
        records = load_dataset(Path(resolved["dataset"]))
        rows.extend(cost_report({key: traces}, records))
    rows.sort(key=lambda row: (row["total_tokens_mean"], row["strategy"]))
    return rows
