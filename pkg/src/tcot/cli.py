"""Command-line interface: run experiments, generate benchmarks, merge reports.

Exit codes: 0 success, 1 configuration error, 2 backend error, 3 more
per-question failures than the configured threshold.
"""

from __future__ import annotations

import logging
import sys
from pathlib import Path

import click

from .errors import (
    AuthError,
    BackendUnavailable,
    ConfigError,
    DatasetMismatch,
    GatewayError,
    MissingTraces,
    SchemaError,
    TcotError,
)
from .evaluation import write_cost_report
from .runner import ExperimentConfig, merge_runs, run_experiment
from .synth import SynthSpec, generate_benchmark

EXIT_CONFIG = 1
EXIT_BACKEND = 2
EXIT_PARTIAL = 3


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Enable debug logging.")
def main(verbose: bool) -> None:
    """Long-video QA inference with curated frame contexts."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )


@main.command("run")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--force", is_flag=True, help="Discard existing traces and rerun everything.")
def run_cmd(config_path: Path, force: bool) -> None:
    """Run one experiment from a JSON config into its output directory."""
    try:
        config = ExperimentConfig.from_file(config_path)
    except (ConfigError, SchemaError) as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    try:
        result = run_experiment(config, force=force)
    except (ConfigError, SchemaError) as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    except (AuthError, BackendUnavailable, GatewayError) as exc:
        click.echo(f"backend error: {exc}", err=True)
        sys.exit(EXIT_BACKEND)
    click.echo(
        f"run complete: {result.n_questions} questions, {result.n_new} new traces, "
        f"{result.n_failed} failures -> {result.run_dir}"
    )
    if result.n_questions and result.n_failed / result.n_questions > config.failure_threshold:
        click.echo(
            f"failure rate {result.n_failed}/{result.n_questions} exceeds threshold "
            f"{config.failure_threshold}",
            err=True,
        )
        sys.exit(EXIT_PARTIAL)


@main.command("synth")
@click.option("--spec", "spec_path", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--out", "out_dir", required=True, type=click.Path(path_type=Path))
def synth_cmd(spec_path: Path, out_dir: Path) -> None:
    """Generate a synthetic needle benchmark (frames, dataset, mock script)."""
    try:
        spec = SynthSpec.from_file(spec_path)
        paths = generate_benchmark(spec, out_dir)
    except (ConfigError, OSError, ValueError) as exc:
        click.echo(f"synth error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    click.echo(f"dataset: {paths.dataset}")
    click.echo(f"frames: {paths.frames_root}")
    click.echo(f"mock script: {paths.mock_script}")


@main.command("report")
@click.argument("run_dirs", nargs=-1, required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--allow-mixed", is_flag=True, help="Merge runs over different datasets.")
@click.option("--out", "out_path", required=True, type=click.Path(path_type=Path))
def report_cmd(run_dirs: tuple[Path, ...], allow_mixed: bool, out_path: Path) -> None:
    """Merge run directories into one cost/accuracy table (CSV plus JSON)."""
    try:
        rows = merge_runs(list(run_dirs), allow_mixed=allow_mixed)
    except (MissingTraces, DatasetMismatch, SchemaError, TcotError, OSError, ValueError) as exc:
        click.echo(f"report error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    write_cost_report(rows, out_path, out_path.with_suffix(".json"))
    click.echo(f"{len(rows)} rows -> {out_path}")


if __name__ == "__main__":
    main()
