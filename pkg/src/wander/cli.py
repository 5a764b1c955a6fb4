"""Command-line entry points: run, resume, report, ablate, qdaif.

Exit codes: 0 success, 2 bad configuration or usage, 3 provider failure
after retries, 4 corrupt or locked run store.
"""

from __future__ import annotations

import csv
import functools
import io
import json
import statistics
import sys
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path

import click

from . import evolve, qdaif as qd
from .emitters import SelectionStrategy
from .errors import ConfigError, ProviderError, StoreError, WanderError
from .evolve import RunConfig
from .metrics import matrix_to_csv, similarity_matrix
from .providers import from_config
from .runstore import (
    RunStore,
    load_run,
    open_for_resume,
    pool_at_generation,
    write_json_atomic,
)

METRIC_COLUMNS = (
    "generation",
    "pool_size",
    "vendi",
    "mean_pairwise_distance",
    "min_novelty",
    "relevance",
    "cumulative_tokens",
    "lpips",
)


def _exit_codes(command):
    """Map error classes onto the documented exit codes."""

    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except ConfigError as exc:
            _fail(2, exc)
        except ProviderError as exc:
            _fail(3, exc)
        except StoreError as exc:
            _fail(4, exc)
        except WanderError as exc:
            _fail(2, exc)

    return wrapper


def _fail(code: int, exc: Exception) -> None:
    click.echo(f"error: {exc}", err=True)
    sys.exit(code)


def _load_json_file(path: str) -> dict:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    return data


def _default_run_dir(prefix: str) -> Path:
    stamp = datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%SZ")
    base = Path("runs")
    candidate = base / f"{prefix}-{stamp}"
    suffix = 1
    while candidate.exists():
        suffix += 1
        candidate = base / f"{prefix}-{stamp}-{suffix}"
    return candidate


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _metrics_csv(rows: list[dict]) -> str:
    out = io.StringIO()
    writer = csv.writer(out)
    writer.writerow(METRIC_COLUMNS)
    for row in rows:
        writer.writerow([_cell(row.get(column)) for column in METRIC_COLUMNS])
    return out.getvalue()


def _metrics_table(rows: list[dict]) -> str:
    headers = ("gen", "size", "vendi", "pairwise", "min novelty", "relevance", "tokens")
    lines = ["  ".join(f"{h:>12}" for h in headers)]
    for row in rows:
        cells = (
            row["generation"],
            row["pool_size"],
            f"{row['vendi']:.4f}",
            f"{row['mean_pairwise_distance']:.4f}",
            "-" if row["min_novelty"] is None else f"{row['min_novelty']:.4f}",
            f"{row['relevance']:.4f}",
            row["cumulative_tokens"],
        )
        lines.append("  ".join(f"{str(c):>12}" for c in cells))
    return "\n".join(lines)


def _echo_final_row(metrics: list[dict]) -> None:
    final = metrics[-1]
    click.echo(
        f"generation {final['generation']}: pool {final['pool_size']}, "
        f"vendi {final['vendi']:.4f}, relevance {final['relevance']:.4f}, "
        f"tokens {final['cumulative_tokens']}"
    )


@click.group()
def main() -> None:
    """Evolve diverse prompt pools by novelty search."""


@main.command(name="run")
@click.option("--config", "config_path", required=True, help="Path to a run config JSON file.")
@click.option("--seed", type=int, default=None, help="Override the config seed.")
@click.option("--out", "out_dir", default=None, help="Run directory (default: under ./runs).")
@_exit_codes
def run_command(config_path: str, seed: int | None, out_dir: str | None) -> None:
    """Start a new evolution run."""
    config = RunConfig.from_json_dict(_load_json_file(config_path))
    if seed is not None:
        config = replace(config, seed=seed)
    provider = from_config(config.provider, default_seed=config.seed)
    directory = Path(out_dir) if out_dir is not None else _default_run_dir("run")
    with RunStore.create(directory, config) as store:
        click.echo(f"run {store.manifest['run_id']} -> {directory}")
        result = evolve.run(config, provider, store=store)
    _echo_final_row(result.metrics)


@main.command()
@click.argument("run_dir")
@_exit_codes
def resume(run_dir: str) -> None:
    """Continue an interrupted run to completion."""
    store, loaded = open_for_resume(run_dir)
    with store:
        if loaded.complete:
            click.echo(f"run {loaded.run_id} is already complete")
            _echo_final_row(loaded.metrics)
            return
        click.echo(
            f"resuming run {loaded.run_id} at generation {loaded.resume.next_generation}"
        )
        provider = from_config(loaded.config.provider, default_seed=loaded.config.seed)
        result = evolve.run(loaded.config, provider, store=store, resume=loaded.resume)
    _echo_final_row(result.metrics)


@main.command()
@click.argument("run_dir")
@click.option("--csv", "as_csv", is_flag=True, help="Emit the metric series as CSV.")
@click.option(
    "--similarity-matrix",
    "matrix_generation",
    type=int,
    default=None,
    help="Emit the pool similarity matrix after this generation as CSV.",
)
@_exit_codes
def report(run_dir: str, as_csv: bool, matrix_generation: int | None) -> None:
    """Summarize a stored run."""
    loaded = load_run(run_dir)
    if matrix_generation is not None:
        pool = pool_at_generation(loaded, matrix_generation)
        matrix = similarity_matrix([m.embedding for m in pool.members])
        click.echo(matrix_to_csv(matrix), nl=False)
        return
    if as_csv:
        click.echo(_metrics_csv(loaded.metrics), nl=False)
        return
    click.echo(f"run {loaded.run_id} ({'complete' if loaded.complete else 'interrupted'})")
    click.echo(f"prompt: {loaded.config.initial_prompt}")
    click.echo(
        f"strategy: {loaded.config.strategy.kind}, "
        f"pool {loaded.config.pool_capacity}, k={loaded.config.k}, "
        f"{loaded.config.generations}x{loaded.config.mutations_per_generation} steps"
    )
    click.echo(_metrics_table(loaded.metrics))


def _ablation_strategies(tokens: list[str], config: RunConfig, runs: int):
    """Expand strategy tokens into per-run strategy lists. The bare 'fixed'
    token cycles the fixed emitter across the registry, one per run, so no
    single directive's luck dominates the average."""
    registry = config.registry()
    expanded: list[tuple[str, list[SelectionStrategy]]] = []
    for token in tokens:
        token = token.strip()
        if token == "fixed":
            per_run = [
                SelectionStrategy(kind="fixed", fixed_id=registry[r % len(registry)].id)
                for r in range(runs)
            ]
        else:
            per_run = [SelectionStrategy.parse(token)] * runs
        expanded.append((token, per_run))
    return expanded


@main.command()
@click.option("--config", "config_path", required=True, help="Path to a run config JSON file.")
@click.option(
    "--strategies",
    default="none,fixed,random,bandit",
    help="Comma-separated emitter selection strategies to compare.",
)
@click.option("--runs", default=10, show_default=True, help="Runs (seeds) per strategy.")
@_exit_codes
def ablate(config_path: str, strategies: str, runs: int) -> None:
    """Compare emitter selection strategies on final pool diversity."""
    if runs < 1:
        raise ConfigError("--runs must be >= 1")
    base = RunConfig.from_json_dict(_load_json_file(config_path))
    tokens = [t for t in strategies.split(",") if t.strip()]
    if not tokens:
        raise ConfigError("--strategies must name at least one strategy")

    results: dict[str, list[float]] = {}
    for token, per_run in _ablation_strategies(tokens, base, runs):
        finals: list[float] = []
        for index, strategy in enumerate(per_run):
            config = replace(base, strategy=strategy, seed=base.seed + index)
            provider = from_config(config.provider, default_seed=config.seed)
            result = evolve.run(config, provider)
            finals.append(result.metrics[-1]["vendi"])
        results[token] = finals

    low = min(min(v) for v in results.values())
    high = max(max(v) for v in results.values())
    span = high - low

    click.echo(f"{'strategy':>10}  {'vendi':>8}  {'std':>8}  {'normalized':>10}")
    for token in [t.strip() for t in tokens]:
        finals = results[token]
        mean = statistics.fmean(finals)
        std = statistics.stdev(finals) if len(finals) > 1 else 0.0
        normalized = 0.0 if span == 0 else (mean - low) / span
        click.echo(f"{token:>10}  {mean:8.4f}  {std:8.4f}  {normalized:10.4f}")


@main.command(name="qdaif")
@click.option("--config", "config_path", required=True, help="Path to a grid run config JSON file.")
@click.option("--out", "out_dir", default=None, help="Run directory (default: under ./runs).")
@_exit_codes
def qdaif_command(config_path: str, out_dir: str | None) -> None:
    """Run the grid-archive baseline."""
    config = qd.QdaifConfig.from_json_dict(_load_json_file(config_path))
    provider = from_config(config.provider, default_seed=config.seed)
    directory = Path(out_dir) if out_dir is not None else _default_run_dir("qdaif")
    templates = {"directed": qd.DIRECTED_TEMPLATE}
    with RunStore.create(directory, config, kind="qdaif", templates=templates) as store:
        click.echo(f"run {store.manifest['run_id']} -> {directory}")
        result = qd.qdaif_run(config, provider, store=store)
        write_json_atomic(directory / "grid.json", qd.grid_to_record(result.grid))
        (directory / "grid.csv").write_text(qd.grid_quality_csv(result.grid), encoding="utf-8")
        write_json_atomic(
            directory / "artifacts.json", qd.grid_artifact_manifest(result.grid)
        )
    final = result.metrics[-1]
    click.echo(
        f"step {final['step']}: coverage {final['coverage']:.2f}, "
        f"qd score {final['qd_score']:.3f}, vendi {final['vendi']:.4f}, "
        f"tokens {final['cumulative_tokens']}"
    )


if __name__ == "__main__":
    main()
