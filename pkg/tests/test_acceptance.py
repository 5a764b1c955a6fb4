"""End-to-end acceptance suite.

Every test here checks a headline guarantee of the package against an
independent oracle or a hermetic synthetic run, with explicit tolerances
and a wall-clock budget. Oracles are implemented locally with different
numerical paths than the library (raw dot/norm cosine, unsymmetrized
eigendecomposition) so agreement is evidence, not tautology.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from pathlib import Path

import numpy as np
import pytest
from click.testing import CliRunner

from wander.cli import main as cli_main
from wander.core import Individual, Pool, score_pool, try_insert
from wander.emitters import SelectionStrategy
from wander.evolve import RunConfig, run
from wander.metrics import matrix_to_csv, similarity_matrix, vendi_score
from wander.providers import from_config
from wander.providers.protocol import (
    EmbedRequest,
    EmbedResponse,
    GenerateRequest,
    GenerateResponse,
    MetaResponse,
    MutateRequest,
    MutateResponse,
    RateRequest,
    RateResponse,
)
from wander.qdaif import QdaifConfig, qdaif_run
from wander.runstore import (
    EVENTS_NAME,
    RunStore,
    event_from_record,
    event_to_record,
    individual_from_record,
    individual_to_record,
    load_run,
    open_for_resume,
    pool_at_generation,
    pool_from_record,
    pool_to_record,
    replay_metrics,
    stats_from_record,
    stats_to_record,
)

FIXED_CLOCK = lambda: "2026-01-01T00:00:00.000000Z"  # noqa: E731
FIXTURES = Path(__file__).parent / "fixtures"


class Budget:
    """Asserts the enclosed block stayed under its wall-clock budget."""

    def __init__(self, seconds: float):
        self.seconds = seconds

    def __enter__(self):
        self.started = time.monotonic()
        return self

    def __exit__(self, exc_type, *rest):
        elapsed = time.monotonic() - self.started
        if exc_type is None:
            assert elapsed < self.seconds, f"took {elapsed:.1f}s, budget {self.seconds}s"


# ---------------------------------------------------------------------------
# independent oracles
# ---------------------------------------------------------------------------


def oracle_cosine_similarity(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return float(np.dot(a, b) / (np.linalg.norm(a) * np.linalg.norm(b)))


def oracle_vendi(embeddings) -> float:
    n = len(embeddings)
    kernel = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            kernel[i, j] = oracle_cosine_similarity(embeddings[i], embeddings[j])
    eigenvalues = np.linalg.eig(kernel / n)[0].real
    entropy = -sum(float(lam) * math.log(lam) for lam in eigenvalues if lam > 1e-12)
    return math.exp(entropy)


def oracle_novelty(candidate, members, k: int) -> float:
    distances = sorted(1.0 - oracle_cosine_similarity(candidate, m) for m in members)
    nearest = distances[: min(k, len(distances))]
    return sum(nearest) / len(nearest)


def random_vectors(rng, n: int, dim: int) -> list[np.ndarray]:
    vectors = []
    while len(vectors) < n:
        v = rng.normal(size=dim)
        if np.linalg.norm(v) > 1e-3:
            vectors.append(v)
    return vectors


# ---------------------------------------------------------------------------
# diversity score against an independent eigendecomposition
# ---------------------------------------------------------------------------


def test_vendi_oracle_suite():
    with Budget(5.0):
        base = np.array([3.0, 1.0, 2.0, -0.5])
        identical = [base.copy() for _ in range(7)]
        assert abs(vendi_score(identical) - 1.0) < 1e-9

        orthogonal = [np.eye(12)[i] * (1.0 + i) for i in range(12)]
        assert abs(vendi_score(orthogonal) - 12.0) < 1e-9

        a, b = np.eye(6)[0], np.eye(6)[3]
        duplicate_pairs = [a, a.copy(), b, b.copy()]
        assert abs(vendi_score(duplicate_pairs) - 2.0) < 1e-9

        rng = np.random.default_rng(42)
        for _ in range(200):
            n = int(rng.integers(2, 17))
            dim = int(rng.integers(2, 33))
            vectors = random_vectors(rng, n, dim)
            assert abs(vendi_score(vectors) - oracle_vendi(vectors)) < 1e-8


# ---------------------------------------------------------------------------
# novelty scoring against brute force, and insertion monotonicity
# ---------------------------------------------------------------------------


def _pool_from_vectors(vectors, k: int) -> Pool:
    pool = Pool(capacity=len(vectors), k=k)
    for i, v in enumerate(vectors):
        pool.members.append(
            Individual(
                id=f"m{i}",
                prompt=f"p{i}",
                artifact_ref=f"r{i}",
                embedding=np.asarray(v, dtype=np.float32),
            )
        )
    return pool


def test_novelty_oracle_suite():
    from wander.core import novelty_score

    with Budget(10.0):
        rng = np.random.default_rng(7)
        for _ in range(500):
            size = int(rng.integers(1, 65))
            dim = int(rng.integers(2, 17))
            k = int(rng.integers(1, 9))
            members = random_vectors(rng, size, dim)
            candidate = np.asarray(random_vectors(rng, 1, dim)[0], dtype=np.float32)
            pool = _pool_from_vectors(members, k)
            mine = novelty_score(candidate, pool)
            theirs = oracle_novelty(
                candidate, [m.embedding for m in pool.members], k
            )
            assert abs(mine - theirs) < 1e-9

        # Nearest-neighbor (k=1) min novelty never decreases across inserts.
        for capacity, attempts, seed in ((4, 2500, 0), (8, 2500, 1), (12, 2500, 2), (16, 2500, 3)):
            rng = np.random.default_rng(seed)
            pool = _pool_from_vectors(random_vectors(rng, capacity, 6), k=1)
            pool.capacity = capacity
            before = score_pool(pool).min_score
            for attempt in range(attempts):
                candidate = Individual(
                    id=f"c{attempt}",
                    prompt="c",
                    artifact_ref="c",
                    embedding=np.asarray(random_vectors(rng, 1, 6)[0], dtype=np.float32),
                )
                try_insert(pool, candidate)
                after = score_pool(pool).min_score
                assert after >= before - 1e-12
                before = after


# ---------------------------------------------------------------------------
# loop determinism and interrupt-resume equivalence
# ---------------------------------------------------------------------------


def _determinism_config() -> RunConfig:
    return RunConfig(
        initial_prompt="a quiet harbor at dawn",
        pool_capacity=10,
        initial_count=10,
        generations=10,
        mutations_per_generation=10,
        k=3,
        seed=202,
        provider={"kind": "synthetic"},
    )


class _DieAfterSteps:
    def __init__(self, inner, steps: int):
        self.inner = inner
        self.remaining = steps

    def __getattr__(self, name):
        return getattr(self.inner, name)

    def record_step(self, event):
        if self.remaining == 0:
            raise KeyboardInterrupt
        self.remaining -= 1
        self.inner.record_step(event)


def test_loop_determinism_and_resume(tmp_path):
    with Budget(30.0):
        config = _determinism_config()

        def stored(name):
            provider = from_config(config.provider, default_seed=config.seed)
            with RunStore.create(tmp_path / name, config, clock=FIXED_CLOCK) as store:
                result = run(config, provider, store=store, clock=FIXED_CLOCK)
            return tmp_path / name, result

        dir_a, result_a = stored("a")
        dir_b, result_b = stored("b")
        assert (dir_a / EVENTS_NAME).read_bytes() == (dir_b / EVENTS_NAME).read_bytes()

        # Kill the run mid-flight, then resume and land on the same pool.
        provider = from_config(config.provider, default_seed=config.seed)
        store = RunStore.create(tmp_path / "interrupted", config, clock=FIXED_CLOCK)
        with pytest.raises(KeyboardInterrupt):
            run(config, provider, store=_DieAfterSteps(store, 43), clock=FIXED_CLOCK)
        store.close()

        resumed_store, loaded = open_for_resume(tmp_path / "interrupted")
        with resumed_store:
            resumed = run(
                config,
                from_config(config.provider, default_seed=config.seed),
                store=resumed_store,
                clock=FIXED_CLOCK,
                resume=loaded.resume,
            )
        assert resumed.pool.member_ids() == result_a.pool.member_ids()
        for mine, theirs in zip(resumed.pool.members, result_a.pool.members):
            assert np.array_equal(mine.embedding, theirs.embedding)
        assert (tmp_path / "interrupted" / EVENTS_NAME).read_bytes() == (
            dir_a / EVENTS_NAME
        ).read_bytes()


# ---------------------------------------------------------------------------
# emitter ablation: multi-emitter beats fixed beats none
# ---------------------------------------------------------------------------


def _ablation_vendi(strategy: SelectionStrategy, seed: int) -> float:
    config = RunConfig(
        initial_prompt="a quiet harbor at dawn",
        pool_capacity=10,
        initial_count=10,
        generations=10,
        mutations_per_generation=10,
        k=3,
        seed=seed,
        strategy=strategy,
        provider={"kind": "synthetic"},
    )
    provider = from_config(config.provider, default_seed=config.seed)
    return run(config, provider).metrics[-1]["vendi"]


def test_emitter_ablation_ordering():
    with Budget(120.0):
        seeds = range(10)
        none_mean = np.mean(
            [_ablation_vendi(SelectionStrategy(kind="none"), s) for s in seeds]
        )
        fixed_mean = np.mean(
            [
                _ablation_vendi(
                    SelectionStrategy(kind="fixed", fixed_id=(s % 10) + 1), s
                )
                for s in seeds
            ]
        )
        random_mean = np.mean(
            [_ablation_vendi(SelectionStrategy(kind="random"), s) for s in seeds]
        )
        assert random_mean > fixed_mean > none_mean
        assert random_mean >= 1.10 * fixed_mean  # multi-emitter margin


# ---------------------------------------------------------------------------
# bandit concentrates pulls on the only accepting arm
# ---------------------------------------------------------------------------


def test_bandit_concentrates_on_accepting_arm():
    with Budget(60.0):
        arm_ids = range(1, 6)
        fractions = []
        for seed in range(10):
            config = RunConfig(
                initial_prompt="a quiet harbor at dawn",
                pool_capacity=10,
                initial_count=10,
                generations=20,
                mutations_per_generation=10,
                k=1,
                crossover_probability=0.0,
                strategy=SelectionStrategy(kind="bandit", exploration=0.5),
                seed=seed,
                emitters=tuple(f"Directive {i}." for i in arm_ids),
                provider={
                    "kind": "synthetic",
                    "noise_scale": 0.0,
                    "jitter_scale": 0.0,
                    "emitter_steps": {i: (0.8 if i == 1 else 0.0) for i in arm_ids},
                    "emitter_jitters": {i: (0.35 if i == 1 else 0.0) for i in arm_ids},
                },
            )
            provider = from_config(config.provider, default_seed=config.seed)
            result = run(config, provider)

            mutations = [e for e in result.events if e.kind == "mutation"]
            assert len(mutations) == 200
            accepting = {
                e.emitter_id for e in mutations if e.outcome in ("filled", "replaced")
            }
            assert accepting == {1}  # only one direction ever yields acceptances

            pulls = result.stats.arms
            fractions.append(pulls[1].pulls / sum(a.pulls for a in pulls.values()))
        assert np.mean(fractions) > 0.5


# ---------------------------------------------------------------------------
# diversity growth and shrinking pairwise similarity
# ---------------------------------------------------------------------------


def _mean_off_diagonal_from_csv(text: str) -> float:
    matrix = np.array(
        [[float(cell) for cell in line.split(",")] for line in text.strip().splitlines()]
    )
    return float(matrix[~np.eye(len(matrix), dtype=bool)].mean())


def test_diversity_growth_over_thirty_generations(tmp_path):
    with Budget(120.0):
        config = RunConfig(
            initial_prompt="a quiet harbor at dawn",
            pool_capacity=10,
            initial_count=10,
            generations=30,
            mutations_per_generation=10,
            k=3,
            seed=0,
            provider={"kind": "synthetic"},
        )
        provider = from_config(config.provider, default_seed=config.seed)
        with RunStore.create(tmp_path / "run", config, clock=FIXED_CLOCK) as store:
            result = run(config, provider, store=store, clock=FIXED_CLOCK)

        vendi = [row["vendi"] for row in result.metrics]
        pairs = list(zip(vendi, vendi[1:]))
        non_decreasing = sum(1 for a, b in pairs if b >= a - 1e-12)
        assert non_decreasing / len(pairs) >= 0.90
        assert vendi[-1] >= 2.0 * vendi[0]

        loaded = load_run(tmp_path / "run")
        exported = {}
        for generation in (1, 15, 30):
            pool = pool_at_generation(loaded, generation)
            csv_text = matrix_to_csv(similarity_matrix([m.embedding for m in pool.members]))
            exported[generation] = _mean_off_diagonal_from_csv(csv_text)
        assert exported[1] > exported[15] > exported[30]


# ---------------------------------------------------------------------------
# grid baseline fills its archive quickly and monotonically
# ---------------------------------------------------------------------------


def test_grid_coverage_within_budget():
    with Budget(60.0):
        full = 0
        for seed in range(10):
            config = QdaifConfig(
                initial_prompt="a quiet harbor at dawn",
                steps=500,
                seed=seed,
                provider={"kind": "synthetic"},
            )
            provider = from_config(config.provider, default_seed=config.seed)
            result = qdaif_run(config, provider, clock=FIXED_CLOCK)

            coverage = [row["coverage"] for row in result.metrics]
            qd = [row["qd_score"] for row in result.metrics]
            assert all(a <= b for a, b in zip(coverage, coverage[1:]))
            assert all(a <= b + 1e-12 for a, b in zip(qd, qd[1:]))
            if coverage[-1] == 1.0:
                full += 1
        assert full >= 9


# ---------------------------------------------------------------------------
# golden-fixture round-trips and the CLI report pipeline
# ---------------------------------------------------------------------------

PROTOCOL_TYPES = {
    "mutate_request": MutateRequest,
    "mutate_response": MutateResponse,
    "mutate_response_no_usage": MutateResponse,
    "generate_request": GenerateRequest,
    "generate_response": GenerateResponse,
    "embed_request_text": EmbedRequest,
    "embed_request_image": EmbedRequest,
    "embed_response": EmbedResponse,
    "rate_request": RateRequest,
    "rate_response": RateResponse,
    "meta_response": MetaResponse,
}


def test_wire_protocol_golden_fixtures_round_trip():
    fixture_dir = FIXTURES / "protocol"
    seen = set()
    for path in sorted(fixture_dir.glob("*.json")):
        wire = json.loads(path.read_text(encoding="utf-8"))
        cls = PROTOCOL_TYPES[path.stem]
        assert cls.from_wire(wire).to_wire() == wire, path.name
        seen.add(path.stem)
    assert seen == set(PROTOCOL_TYPES)


def test_runstore_golden_fixtures_round_trip():
    fixture_dir = FIXTURES / "runstore"

    record = json.loads((fixture_dir / "init_event.json").read_text(encoding="utf-8"))
    member = individual_from_record(record["individual"])
    assert individual_to_record(member) == record["individual"]
    assert member.prompt == "夜の街並み、雨上がりのネオン"

    for name in ("step_event_accepted.json", "step_event_degraded.json"):
        record = json.loads((fixture_dir / name).read_text(encoding="utf-8"))
        assert event_to_record(event_from_record(record)) == record, name

    snapshot = json.loads((fixture_dir / "snapshot.json").read_text(encoding="utf-8"))
    assert pool_to_record(pool_from_record(snapshot["pool"])) == snapshot["pool"]
    assert stats_to_record(stats_from_record(snapshot["stats"])) == snapshot["stats"]

    row = json.loads((fixture_dir / "metrics_row.json").read_text(encoding="utf-8"))
    assert json.loads(json.dumps(row)) == row


def test_cli_report_csv_recomputes_from_event_log(tmp_path):
    config_data = {
        "initial_prompt": "a quiet harbor at dawn",
        "pool_capacity": 8,
        "initial_count": 8,
        "generations": 6,
        "mutations_per_generation": 6,
        "k": 2,
        "seed": 33,
        "provider": {"kind": "synthetic", "dim": 16},
    }
    config_path = tmp_path / "config.json"
    config_path.write_text(json.dumps(config_data), encoding="utf-8")
    run_dir = tmp_path / "run"

    runner = CliRunner()
    result = runner.invoke(
        cli_main,
        ["run", "--config", str(config_path), "--out", str(run_dir)],
        catch_exceptions=False,
    )
    assert result.exit_code == 0, result.output
    report = runner.invoke(
        cli_main, ["report", str(run_dir), "--csv"], catch_exceptions=False
    )
    assert report.exit_code == 0

    rows = list(csv.DictReader(io.StringIO(report.output)))
    assert len(rows) == config_data["generations"] + 1

    loaded = load_run(run_dir)
    provider = from_config(loaded.config.provider, default_seed=loaded.config.seed)
    replayed = replay_metrics(loaded, provider)
    assert len(replayed) == len(rows)
    for reported, recomputed in zip(rows, replayed):
        for column, expected in recomputed.items():
            cell = reported[column]
            if expected is None:
                assert cell == ""
            elif isinstance(expected, float):
                assert abs(float(cell) - expected) <= 1e-9, column
            else:
                assert int(cell) == expected, column
