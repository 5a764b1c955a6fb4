"""Quality-diversity baseline: a two-axis elite grid filled by directed mutation.

Each step aims a mutation at a target cell (empty cells first, to spread
coverage), generates and rates the result, then keeps it only if it beats
the current elite of whatever cell the rater actually assigned. The rater
is part of the provider surface, so hermetic runs rate deterministically.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace

import numpy as np

from .core import Individual, as_embedding
from .errors import ConfigError, DomainError, ProviderError
from .evolve import clean_mutator_output, step_rng, utc_now_iso
from .metrics import vendi_score
from .providers import DIRECTED, MutationContext
from .providers.protocol import RateAxis, TokenUsage

NEW_ELITE = "new_elite"
DISPLACED = "displaced"
DISCARDED = "discarded"
REJECTED = "rejected"

DEFAULT_AXIS_LABELS = ("very low", "low", "medium", "high", "very high")

DIRECTED_TEMPLATE = """Rewrite the image prompt below into one new image prompt.
Aim for an image with <<AXIS1_NAME>>: <<AXIS1_LABEL>> and <<AXIS2_NAME>>: <<AXIS2_LABEL>>.
Return only the new prompt, on a single line, with no explanation or quotes.

Prompt: <<PROMPT>>"""


@dataclass(frozen=True)
class AxisSpec:
    """One grid axis: a name plus ordered bin labels."""

    name: str
    bins: tuple[str, ...] = DEFAULT_AXIS_LABELS

    def __post_init__(self):
        if not self.name.strip():
            raise ConfigError("axis name must be non-empty")
        if len(self.bins) < 2:
            raise ConfigError(f"axis {self.name!r} needs at least 2 bins")
        if len(set(self.bins)) != len(self.bins):
            raise ConfigError(f"axis {self.name!r} has duplicate bin labels")

    @property
    def size(self) -> int:
        return len(self.bins)


@dataclass(frozen=True)
class Rating:
    """Rater output: overall quality plus a bin along each axis."""

    quality: float
    axis1_bin: int
    axis2_bin: int

    def __post_init__(self):
        if not 0.0 <= self.quality <= 1.0:
            raise DomainError(f"quality must lie in [0, 1], got {self.quality}")
        if self.axis1_bin < 0 or self.axis2_bin < 0:
            raise DomainError("bin indices must be >= 0")


@dataclass(frozen=True)
class Elite:
    individual: Individual
    rating: Rating


@dataclass
class Grid:
    """At most one elite per (axis1, axis2) cell; displacement is
    strictly-better-quality only, so per-cell quality never decreases."""

    axis1: AxisSpec
    axis2: AxisSpec
    cells: dict[tuple[int, int], Elite] = field(default_factory=dict)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.axis1.size, self.axis2.size)

    @property
    def cell_count(self) -> int:
        return self.axis1.size * self.axis2.size

    def all_cells(self) -> list[tuple[int, int]]:
        return [(i, j) for i in range(self.axis1.size) for j in range(self.axis2.size)]

    def empty_cells(self) -> list[tuple[int, int]]:
        return [cell for cell in self.all_cells() if cell not in self.cells]

    def coverage(self) -> float:
        return len(self.cells) / self.cell_count

    def qd_score(self) -> float:
        return float(sum(elite.rating.quality for elite in self.cells.values()))

    def elites(self) -> list[Elite]:
        return [self.cells[cell] for cell in self.all_cells() if cell in self.cells]


def pick_target_cell(grid: Grid, rng: np.random.Generator) -> tuple[int, int]:
    """Uniform over empty cells while any remain, else uniform over all."""
    candidates = grid.empty_cells() or grid.all_cells()
    return candidates[int(rng.integers(len(candidates)))]


def archive_insert(grid: Grid, individual: Individual, rating: Rating) -> str:
    """Offer a rated individual to its cell; strictly higher quality wins."""
    if rating.axis1_bin >= grid.axis1.size or rating.axis2_bin >= grid.axis2.size:
        raise DomainError(
            f"rating bins ({rating.axis1_bin}, {rating.axis2_bin}) "
            f"outside grid shape {grid.shape}"
        )
    cell = (rating.axis1_bin, rating.axis2_bin)
    incumbent = grid.cells.get(cell)
    if incumbent is None:
        grid.cells[cell] = Elite(individual=individual, rating=rating)
        return NEW_ELITE
    if rating.quality > incumbent.rating.quality:
        grid.cells[cell] = Elite(individual=individual, rating=rating)
        return DISPLACED
    return DISCARDED


def cell_center(index: int, bins: int) -> float:
    """Center of bin `index` when [-1, 1] is split into `bins` equal parts."""
    return -1.0 + (2 * index + 1) / bins


@dataclass(frozen=True)
class QdaifConfig:
    """A grid-search run: steps of directed mutation toward grid cells."""

    initial_prompt: str
    steps: int = 500
    axis1: AxisSpec = AxisSpec(name="detail")
    axis2: AxisSpec = AxisSpec(name="image style")
    seed: int = 0
    provider: dict = field(default_factory=lambda: {"kind": "synthetic"})

    def __post_init__(self):
        if not self.initial_prompt.strip():
            raise ConfigError("initial_prompt must be non-empty")
        if self.steps < 1:
            raise ConfigError("steps must be >= 1")
        if not -(2**63) <= self.seed < 2**64:
            raise ConfigError("seed must fit in 64 bits")

    def to_json_dict(self) -> dict:
        return {
            "initial_prompt": self.initial_prompt,
            "steps": self.steps,
            "axis1": {"name": self.axis1.name, "bins": list(self.axis1.bins)},
            "axis2": {"name": self.axis2.name, "bins": list(self.axis2.bins)},
            "seed": self.seed,
            "provider": self.provider,
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "QdaifConfig":
        if not isinstance(data, dict):
            raise ConfigError("grid run config must be a JSON object")
        known = {"initial_prompt", "steps", "axis1", "axis2", "seed", "provider"}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown grid run config fields: {sorted(unknown)}")
        if "initial_prompt" not in data:
            raise ConfigError("grid run config needs initial_prompt")
        kwargs = dict(data)
        for key in ("axis1", "axis2"):
            raw = kwargs.get(key)
            if isinstance(raw, dict):
                try:
                    kwargs[key] = AxisSpec(name=raw["name"], bins=tuple(raw["bins"]))
                except (KeyError, TypeError) as exc:
                    raise ConfigError(f"bad {key} spec: {exc}") from None
            elif raw is not None:
                raise ConfigError(f"{key} must be an object with name and bins")
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise ConfigError(f"bad grid run config: {exc}") from None


@dataclass(frozen=True)
class QdaifEvent:
    """Audit record for one directed-mutation step."""

    step: int
    target_cell: tuple[int, int]
    parent_cell: tuple[int, int] | None  # None when seeded from the initial prompt
    instruction: str
    outcome: str
    child_prompt: str | None = None
    artifact_ref: str | None = None
    digest: str | None = None
    quality: float | None = None
    rated_cell: tuple[int, int] | None = None
    usage: TokenUsage | None = None
    error: str | None = None
    started_at: str = ""
    finished_at: str = ""


@dataclass
class QdaifResult:
    config: QdaifConfig
    grid: Grid
    events: list[QdaifEvent]
    metrics: list[dict]


def render_directed_instruction(parent_prompt: str, grid: Grid, cell: tuple[int, int]) -> str:
    return (
        DIRECTED_TEMPLATE.replace("<<AXIS1_NAME>>", grid.axis1.name)
        .replace("<<AXIS1_LABEL>>", grid.axis1.bins[cell[0]])
        .replace("<<AXIS2_NAME>>", grid.axis2.name)
        .replace("<<AXIS2_LABEL>>", grid.axis2.bins[cell[1]])
        .replace("<<PROMPT>>", parent_prompt)
    )


def _rate(provider, artifact_ref: str, grid: Grid) -> Rating:
    axes = (
        RateAxis(name=grid.axis1.name, bins=grid.axis1.size),
        RateAxis(name=grid.axis2.name, bins=grid.axis2.size),
    )
    response = provider.rate(artifact_ref, axes)
    return Rating(
        quality=response.quality,
        axis1_bin=response.bins[0],
        axis2_bin=response.bins[1],
    )


def qdaif_step(
    grid: Grid,
    config: QdaifConfig,
    provider,
    *,
    step: int,
    clock=utc_now_iso,
) -> QdaifEvent:
    """One directed step: pick a target cell, mutate a parent toward it,
    generate, rate, and offer to the rated cell. Provider failures degrade
    to a rejected event that leaves the grid untouched."""
    rng = step_rng(config.seed, 1, step)
    started_at = clock()

    target = pick_target_cell(grid, rng)
    filled = [cell for cell in grid.all_cells() if cell in grid.cells]
    if filled:
        parent_cell = filled[int(rng.integers(len(filled)))]
        parent_prompt = grid.cells[parent_cell].individual.prompt
    else:
        parent_cell = None
        parent_prompt = config.initial_prompt
    instruction = render_directed_instruction(parent_prompt, grid, target)
    coords = (
        cell_center(target[0], grid.axis1.size),
        cell_center(target[1], grid.axis2.size),
    )
    context = MutationContext(
        kind=DIRECTED, parent_prompts=(parent_prompt,), target_coords=coords
    )

    base = QdaifEvent(
        step=step,
        target_cell=target,
        parent_cell=parent_cell,
        instruction=instruction,
        outcome=REJECTED,
        started_at=started_at,
    )
    usage = None
    try:
        mutated = provider.mutate(instruction, context, rng)
        usage = mutated.usage
        child_prompt = clean_mutator_output(mutated.text)
        if not child_prompt:
            raise ProviderError("mutator returned an empty prompt", retryable=False)
        gen_seed = int(rng.integers(2**31))
        artifact = provider.generate(child_prompt, gen_seed)
        embedding = provider.embed_artifact(artifact.artifact_ref)
        rating = _rate(provider, artifact.artifact_ref, grid)
    except ProviderError as exc:
        return _finished(base, usage=usage, error=str(exc), finished_at=clock())

    individual = Individual(
        id=f"s{step}",
        prompt=child_prompt,
        artifact_ref=artifact.artifact_ref,
        embedding=as_embedding(embedding),
        born_generation=step,
    )
    outcome = archive_insert(grid, individual, rating)
    return _finished(
        base,
        outcome=outcome,
        child_prompt=child_prompt,
        artifact_ref=artifact.artifact_ref,
        digest=artifact.digest,
        quality=rating.quality,
        rated_cell=(rating.axis1_bin, rating.axis2_bin),
        usage=usage,
        finished_at=clock(),
    )


def _finished(base: QdaifEvent, **updates) -> QdaifEvent:
    return replace(base, **updates)


def grid_metrics_row(grid: Grid, *, step: int, cumulative_tokens: int) -> dict:
    elites = grid.elites()
    embeddings = [e.individual.embedding for e in elites]
    return {
        "step": step,
        "filled_cells": len(grid.cells),
        "coverage": grid.coverage(),
        "qd_score": grid.qd_score(),
        "vendi": vendi_score(embeddings) if len(embeddings) >= 2 else 1.0,
        "cumulative_tokens": cumulative_tokens,
    }


def qdaif_run(
    config: QdaifConfig,
    provider,
    *,
    store=None,
    clock=utc_now_iso,
) -> QdaifResult:
    """Run the full grid search; one metrics row per step."""
    grid = Grid(axis1=config.axis1, axis2=config.axis2)
    events: list[QdaifEvent] = []
    metrics: list[dict] = []
    cumulative_tokens = 0
    for step in range(config.steps):
        event = qdaif_step(grid, config, provider, step=step, clock=clock)
        if event.usage is not None:
            cumulative_tokens += event.usage.total
        events.append(event)
        row = grid_metrics_row(grid, step=step, cumulative_tokens=cumulative_tokens)
        metrics.append(row)
        if store is not None:
            store.append_record(qdaif_event_to_record(event))
            store.record_metrics(row)
    return QdaifResult(config=config, grid=grid, events=events, metrics=metrics)


def qdaif_event_to_record(event: QdaifEvent) -> dict:
    return {
        "type": "qdaif_step",
        "step": event.step,
        "target_cell": list(event.target_cell),
        "parent_cell": None if event.parent_cell is None else list(event.parent_cell),
        "instruction": event.instruction,
        "outcome": event.outcome,
        "child_prompt": event.child_prompt,
        "artifact_ref": event.artifact_ref,
        "digest": event.digest,
        "quality": event.quality,
        "rated_cell": None if event.rated_cell is None else list(event.rated_cell),
        "usage": None if event.usage is None else event.usage.to_wire(),
        "error": event.error,
        "started_at": event.started_at,
        "finished_at": event.finished_at,
    }


def grid_to_record(grid: Grid) -> dict:
    from .runstore import individual_to_record

    cells = {}
    for (i, j), elite in sorted(grid.cells.items()):
        cells[f"{i},{j}"] = {
            "individual": individual_to_record(elite.individual),
            "rating": {
                "quality": elite.rating.quality,
                "axis1_bin": elite.rating.axis1_bin,
                "axis2_bin": elite.rating.axis2_bin,
            },
        }
    return {
        "axis1": {"name": grid.axis1.name, "bins": list(grid.axis1.bins)},
        "axis2": {"name": grid.axis2.name, "bins": list(grid.axis2.bins)},
        "cells": cells,
    }


def grid_quality_csv(grid: Grid) -> str:
    """Axis-1 labels down the rows, axis-2 labels across the columns,
    elite quality (blank when empty) in each cell."""
    out = io.StringIO()
    writer = csv.writer(out)
    writer.writerow([f"{grid.axis1.name} \\ {grid.axis2.name}", *grid.axis2.bins])
    for i, label in enumerate(grid.axis1.bins):
        row: list[object] = [label]
        for j in range(grid.axis2.size):
            elite = grid.cells.get((i, j))
            row.append("" if elite is None else repr(elite.rating.quality))
        writer.writerow(row)
    return out.getvalue()


def grid_artifact_manifest(grid: Grid) -> list[dict]:
    """Cell-to-artifact listing, row-major over filled cells."""
    return [
        {
            "cell": [i, j],
            "axis1": grid.axis1.bins[i],
            "axis2": grid.axis2.bins[j],
            "quality": grid.cells[(i, j)].rating.quality,
            "prompt": grid.cells[(i, j)].individual.prompt,
            "artifact_ref": grid.cells[(i, j)].individual.artifact_ref,
        }
        for (i, j) in sorted(grid.cells)
    ]
