"""Durable on-disk state for runs: append-only logs plus snapshots.

A run directory holds a manifest (run identity and config), two
append-only JSONL logs (events and per-generation metrics), and one
snapshot per completed generation. Every record is canonical JSON
(sorted keys, compact separators, raw UTF-8), so identical runs produce
byte-identical logs. Appends are fsynced line by line and snapshots are
written to a temp file and renamed, so a crash can only cost a partial
trailing line, which loading detects and drops.
"""

from __future__ import annotations

import base64
import json
import os
import uuid
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .core import FILLED, REJECTED, REPLACED, Individual, InsertOutcome, Lineage, Pool
from .emitters import ArmStats, EmitterStats, record_outcome
from .errors import StoreError
from .evolve import (
    CROSSOVER_TEMPLATE,
    EMITTERLESS_DIRECTIVE,
    MUTATION_TEMPLATE,
    GenerationEvent,
    ResumePoint,
    RunConfig,
    _reward_for,
    metrics_row,
    utc_now_iso,
)
from .providers.protocol import TokenUsage

STORE_VERSION = 1
MANIFEST_NAME = "manifest.json"
EVENTS_NAME = "events.jsonl"
METRICS_NAME = "metrics.jsonl"
SNAPSHOT_DIR = "snapshots"
LOCK_NAME = "lock"


def canonical_json(obj) -> str:
    """One fixed rendering per value, so logs diff and compare by bytes."""
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, separators=(",", ":"))


def encode_embedding(embedding: np.ndarray) -> str:
    return base64.b64encode(np.asarray(embedding, dtype="<f4").tobytes()).decode("ascii")


def decode_embedding(data: str) -> np.ndarray:
    try:
        raw = base64.b64decode(data.encode("ascii"), validate=True)
    except Exception as exc:
        raise StoreError(f"bad embedding encoding: {exc}") from None
    if len(raw) == 0 or len(raw) % 4 != 0:
        raise StoreError("embedding byte length must be a positive multiple of 4")
    return np.frombuffer(raw, dtype="<f4").astype(np.float32)


def individual_to_record(member: Individual) -> dict:
    lineage = None
    if member.lineage is not None:
        lineage = {
            "parents": list(member.lineage.parents),
            "emitter_id": member.lineage.emitter_id,
        }
    return {
        "id": member.id,
        "prompt": member.prompt,
        "artifact_ref": member.artifact_ref,
        "embedding": encode_embedding(member.embedding),
        "lineage": lineage,
        "born_generation": member.born_generation,
    }


def individual_from_record(record: dict) -> Individual:
    try:
        lineage = None
        if record["lineage"] is not None:
            lineage = Lineage(
                parents=tuple(record["lineage"]["parents"]),
                emitter_id=record["lineage"]["emitter_id"],
            )
        return Individual(
            id=record["id"],
            prompt=record["prompt"],
            artifact_ref=record["artifact_ref"],
            embedding=decode_embedding(record["embedding"]),
            lineage=lineage,
            born_generation=record["born_generation"],
        )
    except (KeyError, TypeError) as exc:
        raise StoreError(f"bad pool member record: {exc}") from None


def event_to_record(event: GenerationEvent) -> dict:
    return {
        "type": "step",
        "generation": event.generation,
        "attempt": event.attempt,
        "kind": event.kind,
        "parent_ids": list(event.parent_ids),
        "emitter_id": event.emitter_id,
        "instruction": event.instruction,
        "outcome": event.outcome,
        "child_id": event.child_id,
        "child_prompt": event.child_prompt,
        "artifact_ref": event.artifact_ref,
        "digest": event.digest,
        "embedding": None if event.embedding is None else encode_embedding(event.embedding),
        "candidate_score": event.candidate_score,
        "min_score": event.min_score,
        "evicted_id": event.evicted_id,
        "usage": None if event.usage is None else event.usage.to_wire(),
        "error": event.error,
        "started_at": event.started_at,
        "finished_at": event.finished_at,
    }


def event_from_record(record: dict) -> GenerationEvent:
    try:
        return GenerationEvent(
            generation=record["generation"],
            attempt=record["attempt"],
            kind=record["kind"],
            parent_ids=tuple(record["parent_ids"]),
            emitter_id=record["emitter_id"],
            instruction=record["instruction"],
            outcome=record["outcome"],
            child_id=record["child_id"],
            child_prompt=record["child_prompt"],
            artifact_ref=record["artifact_ref"],
            digest=record["digest"],
            embedding=(
                None if record["embedding"] is None else decode_embedding(record["embedding"])
            ),
            candidate_score=record["candidate_score"],
            min_score=record["min_score"],
            evicted_id=record["evicted_id"],
            usage=None if record["usage"] is None else TokenUsage.from_wire(record["usage"]),
            error=record["error"],
            started_at=record["started_at"],
            finished_at=record["finished_at"],
        )
    except (KeyError, TypeError) as exc:
        raise StoreError(f"bad step record: {exc}") from None


def stats_to_record(stats: EmitterStats) -> dict:
    return {
        "arms": {
            str(emitter_id): {
                "pulls": arm.pulls,
                "successes": arm.successes,
                "cumulative_reward": arm.cumulative_reward,
            }
            for emitter_id, arm in stats.arms.items()
        }
    }


def stats_from_record(record: dict) -> EmitterStats:
    try:
        arms = {
            int(emitter_id): ArmStats(
                pulls=arm["pulls"],
                successes=arm["successes"],
                cumulative_reward=arm["cumulative_reward"],
            )
            for emitter_id, arm in record["arms"].items()
        }
    except (KeyError, TypeError, ValueError) as exc:
        raise StoreError(f"bad emitter stats record: {exc}") from None
    return EmitterStats(arms=arms)


def pool_to_record(pool: Pool) -> dict:
    return {
        "capacity": pool.capacity,
        "k": pool.k,
        "members": [individual_to_record(m) for m in pool.members],
    }


def pool_from_record(record: dict) -> Pool:
    try:
        return Pool(
            capacity=record["capacity"],
            k=record["k"],
            members=[individual_from_record(m) for m in record["members"]],
        )
    except (KeyError, TypeError) as exc:
        raise StoreError(f"bad pool record: {exc}") from None


def _fsync_dir(directory: Path) -> None:
    fd = os.open(directory, os.O_RDONLY)
    try:
        os.fsync(fd)
    finally:
        os.close(fd)


def write_json_atomic(path: Path, obj) -> None:
    """Write via temp file and rename, so readers never see a torn file."""
    tmp = path.parent / f".{path.name}.tmp-{os.getpid()}"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(canonical_json(obj) + "\n")
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)
    _fsync_dir(path.parent)


def read_json(path: Path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except FileNotFoundError:
        raise StoreError(f"missing {path.name} in {path.parent}") from None
    except json.JSONDecodeError as exc:
        raise StoreError(f"corrupt {path.name}: {exc}") from None
    if not isinstance(data, dict):
        raise StoreError(f"corrupt {path.name}: expected a JSON object")
    return data


def read_jsonl(path: Path, *, repair: bool = False) -> list[dict]:
    """Read an append-only log, tolerating one torn trailing line.

    A line that fails to parse with valid lines after it means the file
    was edited or damaged, not interrupted, and loading refuses. A bad
    final line is dropped with a warning; with repair=True the file is
    truncated to the last good line so future appends stay clean.
    """
    if not path.exists():
        return []
    records: list[dict] = []
    good_end = 0
    with open(path, "rb") as fh:
        raw = fh.read()
    offset = 0
    lines = raw.split(b"\n")
    for index, line in enumerate(lines):
        end = offset + len(line) + 1
        if line.strip():
            try:
                record = json.loads(line.decode("utf-8"))
                if not isinstance(record, dict):
                    raise ValueError("expected a JSON object")
            except (ValueError, UnicodeDecodeError) as exc:
                trailing = b"".join(lines[index + 1 :]).strip()
                if trailing:
                    raise StoreError(
                        f"corrupt {path.name}: bad record on line {index + 1}: {exc}"
                    ) from None
                warnings.warn(
                    f"{path.name}: dropping torn trailing line {index + 1}",
                    RuntimeWarning,
                    stacklevel=2,
                )
                break
            records.append(record)
            good_end = min(end, len(raw))
        offset = end
    if repair and good_end < len(raw):
        with open(path, "r+b") as fh:
            fh.truncate(good_end)
            fh.flush()
            os.fsync(fh.fileno())
    return records


def _acquire_lock(directory: Path) -> int:
    """Single-writer lock. A lock left by a dead process is reclaimed."""
    lock_path = directory / LOCK_NAME
    for _ in range(2):
        try:
            fd = os.open(lock_path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            try:
                holder = int(lock_path.read_text().strip())
                os.kill(holder, 0)
            except (ValueError, OSError):
                lock_path.unlink(missing_ok=True)
                continue
            raise StoreError(
                f"run directory {directory} is locked by pid {holder}"
            ) from None
        os.write(fd, f"{os.getpid()}\n".encode("ascii"))
        return fd
    raise StoreError(f"could not acquire lock in {directory}")


class RunStore:
    """Writer handle for one run directory.

    Create one per fresh run or reopen for resume; it owns the directory
    lock until closed. Loading for inspection needs no handle; see
    load_run().
    """

    def __init__(self, directory: Path, manifest: dict, lock_fd: int):
        self.directory = Path(directory)
        self.manifest = manifest
        self._lock_fd: int | None = lock_fd
        self._events_fh = None
        self._metrics_fh = None

    @classmethod
    def create(
        cls,
        directory: str | Path,
        config,
        *,
        kind: str = "evolve",
        clock=utc_now_iso,
        templates: dict | None = None,
    ) -> "RunStore":
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        if (directory / MANIFEST_NAME).exists():
            raise StoreError(f"{directory} already holds a run; resume or pick a new directory")
        if any(directory.iterdir()):
            raise StoreError(f"{directory} is not empty")
        if templates is None:
            templates = {
                "mutation": MUTATION_TEMPLATE,
                "crossover": CROSSOVER_TEMPLATE,
                "emitterless_directive": EMITTERLESS_DIRECTIVE,
            }
        lock_fd = _acquire_lock(directory)
        try:
            (directory / SNAPSHOT_DIR).mkdir()
            manifest = {
                "store_version": STORE_VERSION,
                "run_id": uuid.uuid4().hex,
                "created_at": clock(),
                "kind": kind,
                "engine_version": __version__,
                "config": config.to_json_dict(),
                "templates": templates,
            }
            write_json_atomic(directory / MANIFEST_NAME, manifest)
        except BaseException:
            os.close(lock_fd)
            (directory / LOCK_NAME).unlink(missing_ok=True)
            raise
        return cls(directory, manifest, lock_fd)

    @classmethod
    def open(cls, directory: str | Path) -> "RunStore":
        directory = Path(directory)
        manifest = read_json(directory / MANIFEST_NAME)
        _check_manifest(manifest, directory)
        lock_fd = _acquire_lock(directory)
        return cls(directory, manifest, lock_fd)

    def _append(self, name: str, record: dict) -> None:
        if self._lock_fd is None:
            raise StoreError("store is closed")
        attr = "_events_fh" if name == EVENTS_NAME else "_metrics_fh"
        fh = getattr(self, attr)
        if fh is None:
            fh = open(self.directory / name, "ab")
            setattr(self, attr, fh)
        fh.write(canonical_json(record).encode("utf-8") + b"\n")
        fh.flush()
        os.fsync(fh.fileno())

    def append_record(self, record: dict) -> None:
        self._append(EVENTS_NAME, record)

    def record_init(self, member: Individual, *, at: str) -> None:
        self._append(EVENTS_NAME, {"type": "init", "at": at, "individual": individual_to_record(member)})

    def record_step(self, event: GenerationEvent) -> None:
        self._append(EVENTS_NAME, event_to_record(event))

    def record_metrics(self, row: dict) -> None:
        self._append(METRICS_NAME, row)

    def write_snapshot(
        self,
        *,
        generation: int,
        pool: Pool,
        stats: EmitterStats,
        metrics_row: dict,
        cumulative_tokens: int,
    ) -> None:
        if self._lock_fd is None:
            raise StoreError("store is closed")
        snapshot = {
            "generation": generation,
            "pool": pool_to_record(pool),
            "stats": stats_to_record(stats),
            "metrics_row": metrics_row,
            "cumulative_tokens": cumulative_tokens,
        }
        write_json_atomic(self.directory / SNAPSHOT_DIR / f"gen-{generation}.json", snapshot)

    def close(self) -> None:
        for attr in ("_events_fh", "_metrics_fh"):
            fh = getattr(self, attr)
            if fh is not None:
                fh.close()
                setattr(self, attr, None)
        if self._lock_fd is not None:
            os.close(self._lock_fd)
            self._lock_fd = None
            (self.directory / LOCK_NAME).unlink(missing_ok=True)

    def __enter__(self) -> "RunStore":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def _check_manifest(manifest: dict, directory: Path) -> None:
    version = manifest.get("store_version")
    if version != STORE_VERSION:
        raise StoreError(
            f"{directory} has store_version {version!r}; this build reads {STORE_VERSION}"
        )
    for key in ("run_id", "kind", "config"):
        if key not in manifest:
            raise StoreError(f"{directory}: manifest is missing {key!r}")


@dataclass
class LoadedRun:
    """A run directory read back: raw records plus reconstructed state."""

    directory: Path
    manifest: dict
    config: RunConfig
    events: list[dict]
    metrics: list[dict]
    pool: Pool
    stats: EmitterStats
    cumulative_tokens: int
    resume: ResumePoint
    complete: bool

    @property
    def run_id(self) -> str:
        return self.manifest["run_id"]


def _apply_step_record(
    pool: Pool, stats: EmitterStats, config: RunConfig, emitters_by_id: dict, record: dict
) -> int:
    """Replay one logged step onto pool and bandit state; returns its token count."""
    outcome_kind = record["outcome"]
    if outcome_kind not in (FILLED, REPLACED, REJECTED):
        raise StoreError(f"bad step record: unknown outcome {outcome_kind!r}")
    if outcome_kind in (FILLED, REPLACED):
        lineage = Lineage(
            parents=tuple(record["parent_ids"]),
            emitter_id=record["emitter_id"] if record["kind"] == "mutation" else None,
        )
        child = Individual(
            id=record["child_id"],
            prompt=record["child_prompt"],
            artifact_ref=record["artifact_ref"],
            embedding=decode_embedding(record["embedding"]),
            lineage=lineage,
            born_generation=record["generation"],
        )
        if outcome_kind == REPLACED:
            index = next(
                (i for i, m in enumerate(pool.members) if m.id == record["evicted_id"]), None
            )
            if index is None:
                raise StoreError(
                    f"step record evicts {record['evicted_id']!r} which is not in the pool"
                )
            del pool.members[index]
        elif len(pool.members) >= pool.capacity:
            raise StoreError("step record fills an already-full pool")
        pool.members.append(child)
    if record["kind"] == "mutation" and record["emitter_id"] is not None:
        emitter = emitters_by_id.get(record["emitter_id"])
        if emitter is None:
            raise StoreError(f"step record uses unknown emitter id {record['emitter_id']}")
        outcome = InsertOutcome(
            kind=outcome_kind,
            candidate_score=record["candidate_score"],
            min_score=record["min_score"],
            evicted_id=record["evicted_id"],
        )
        record_outcome(stats, emitter, outcome, reward=_reward_for(config, outcome))
    usage = record["usage"]
    return 0 if usage is None else usage["prompt_tokens"] + usage["completion_tokens"]


def load_run(directory: str | Path, *, repair: bool = False) -> LoadedRun:
    """Read a run directory back into memory and work out where it stopped.

    State is rebuilt by replaying the event log from scratch, so it is
    correct even when the newest snapshot predates the newest events
    (snapshots are conveniences, not the source of truth). Pass
    repair=True before resuming so a torn trailing line is physically
    truncated rather than just skipped.
    """
    directory = Path(directory)
    manifest = read_json(directory / MANIFEST_NAME)
    _check_manifest(manifest, directory)
    if manifest["kind"] != "evolve":
        raise StoreError(f"{directory} holds a {manifest['kind']!r} run, not an evolution run")
    config = RunConfig.from_json_dict(manifest["config"])
    events = read_jsonl(directory / EVENTS_NAME, repair=repair)
    metrics = read_jsonl(directory / METRICS_NAME, repair=repair)

    row_generations = [row.get("generation") for row in metrics]
    if row_generations != list(range(len(row_generations))):
        raise StoreError(f"{METRICS_NAME} generations are not consecutive from 0")

    pool = Pool(capacity=config.pool_capacity, k=config.k)
    stats = EmitterStats()
    emitters_by_id = {e.id: e for e in config.registry()}
    cumulative_tokens = 0
    init_count = 0
    last_step: tuple[int, int] | None = None
    for record in events:
        record_type = record.get("type")
        if record_type == "init":
            if last_step is not None:
                raise StoreError("init record found after step records")
            pool.members.append(individual_from_record(record["individual"]))
            init_count += 1
        elif record_type == "step":
            try:
                step_key = (record["generation"], record["attempt"])
            except KeyError as exc:
                raise StoreError(f"bad step record: missing {exc}") from None
            if last_step is not None and step_key <= last_step:
                raise StoreError(f"step records out of order at {step_key}")
            last_step = step_key
            try:
                cumulative_tokens += _apply_step_record(
                    pool, stats, config, emitters_by_id, record
                )
            except KeyError as exc:
                raise StoreError(f"bad step record: missing {exc}") from None
        else:
            raise StoreError(f"unknown event record type {record_type!r}")

    if init_count != config.initial_count:
        raise StoreError(
            f"run has {init_count} of {config.initial_count} initial members; "
            "it stopped during initialization, start a new run"
        )

    have_row = set(row_generations)
    per_generation = config.mutations_per_generation
    if last_step is None:
        if 0 in have_row:
            next_generation, next_attempt = 1, 0
        else:
            next_generation, next_attempt = 0, per_generation
    else:
        generation, attempt = last_step
        if attempt + 1 < per_generation:
            next_generation, next_attempt = generation, attempt + 1
        elif generation in have_row:
            next_generation, next_attempt = generation + 1, 0
        else:
            next_generation, next_attempt = generation, per_generation

    resume = ResumePoint(
        pool=pool,
        stats=stats,
        next_generation=next_generation,
        next_attempt=next_attempt,
        cumulative_tokens=cumulative_tokens,
        metrics=metrics,
    )
    complete = next_generation > config.generations
    return LoadedRun(
        directory=directory,
        manifest=manifest,
        config=config,
        events=events,
        metrics=metrics,
        pool=pool,
        stats=stats,
        cumulative_tokens=cumulative_tokens,
        resume=resume,
        complete=complete,
    )


def open_for_resume(directory: str | Path) -> tuple[RunStore, LoadedRun]:
    """Take the writer lock, then load with repair enabled. Locking first
    means a torn trailing line is only ever truncated while no other
    writer can be appending."""
    store = RunStore.open(directory)
    try:
        loaded = load_run(directory, repair=True)
    except BaseException:
        store.close()
        raise
    return store, loaded


def load_snapshot(directory: str | Path, generation: int) -> dict:
    path = Path(directory) / SNAPSHOT_DIR / f"gen-{generation}.json"
    return read_json(path)


def pool_at_generation(loaded: LoadedRun, generation: int) -> Pool:
    """The pool as it stood after the given generation (0 = initial pool),
    rebuilt from the event log."""
    if generation < 0:
        raise StoreError("generation must be >= 0")
    pool = Pool(capacity=loaded.config.pool_capacity, k=loaded.config.k)
    stats = EmitterStats()
    emitters_by_id = {e.id: e for e in loaded.config.registry()}
    seen = 0
    for record in loaded.events:
        if record["type"] == "init":
            pool.members.append(individual_from_record(record["individual"]))
        elif record["generation"] > generation:
            break
        else:
            _apply_step_record(pool, stats, loaded.config, emitters_by_id, record)
            seen = max(seen, record["generation"])
    if generation > 0 and seen < generation:
        raise StoreError(f"run has no events for generation {generation}")
    return pool


def replay_metrics(loaded: LoadedRun, provider) -> list[dict]:
    """Recompute the whole metric series from the event log alone; the
    result should match metrics.jsonl row for row."""
    config = loaded.config
    pool = Pool(capacity=config.pool_capacity, k=config.k)
    stats = EmitterStats()
    emitters_by_id = {e.id: e for e in config.registry()}
    cumulative = 0
    rows: list[dict] = []
    current = 0

    def flush(generation: int) -> None:
        rows.append(
            metrics_row(
                config, provider, pool, generation=generation, cumulative_tokens=cumulative
            )
        )

    for record in loaded.events:
        if record["type"] == "init":
            pool.members.append(individual_from_record(record["individual"]))
            continue
        while record["generation"] > current:
            flush(current)
            current += 1
        cumulative += _apply_step_record(pool, stats, config, emitters_by_id, record)
    while current <= (loaded.metrics[-1]["generation"] if loaded.metrics else 0):
        flush(current)
        current += 1
    return rows
