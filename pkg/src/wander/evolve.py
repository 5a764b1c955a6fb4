"""The generation loop: emitter selection, prompt evolution, pool update.

Each step evolves exactly one candidate (crossover with the configured
probability, otherwise emitter-directed mutation), then generates its
artifact, embeds it, and offers it to the pool. Every step draws from a
stateless rng stream keyed by (seed, generation, attempt), so a resumed
run replays the remaining steps bit-for-bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from datetime import datetime, timezone

import numpy as np

from .core import REJECTED, Individual, InsertOutcome, Lineage, Pool, score_pool, try_insert
from .emitters import (
    DEFAULT_EXPLORATION,
    Emitter,
    EmitterStats,
    SelectionStrategy,
    builtin_emitters,
    record_outcome,
    registry_from_directives,
    select_emitter,
)
from .errors import ConfigError, ProviderError
from .metrics import mean_pairwise_distance, relevance, vendi_score
from .providers import CROSSOVER, MUTATION, MutationContext
from .providers.protocol import TokenUsage

MUTATION_TEMPLATE = """Rewrite the image prompt below into one new image prompt.
<<DIRECTIVE>>
Return only the new prompt, on a single line, with no explanation or quotes.

Prompt: <<PROMPT>>"""

EMITTERLESS_DIRECTIVE = "Rewrite this prompt to produce a different image."

CROSSOVER_TEMPLATE = """Merge the two image prompts below into one new image prompt \
that combines elements of both.
Return only the new prompt, on a single line, with no explanation or quotes.

Prompt A: <<PROMPT_A>>
Prompt B: <<PROMPT_B>>"""


def utc_now_iso() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%S.%fZ")


@dataclass(frozen=True)
class RunConfig:
    """Everything a run needs; serializes losslessly to a JSON object."""

    initial_prompt: str
    pool_capacity: int = 10
    initial_count: int = 10
    generations: int = 10
    mutations_per_generation: int = 10
    k: int = 3
    crossover_probability: float = 0.5
    strategy: SelectionStrategy = SelectionStrategy(kind="bandit")
    seed: int = 0
    provider: dict = field(default_factory=lambda: {"kind": "synthetic"})
    emitters: tuple[str, ...] | None = None
    margin_reward: bool = False

    def __post_init__(self):
        if not self.initial_prompt.strip():
            raise ConfigError("initial_prompt must be non-empty")
        if not 1 <= self.initial_count <= self.pool_capacity:
            raise ConfigError("need 1 <= initial_count <= pool_capacity")
        if self.generations < 1 or self.mutations_per_generation < 1:
            raise ConfigError("generations and mutations_per_generation must be >= 1")
        if self.k < 1:
            raise ConfigError("k must be >= 1")
        if not 0.0 <= self.crossover_probability <= 1.0:
            raise ConfigError("crossover_probability must lie in [0, 1]")
        if not -(2**63) <= self.seed < 2**64:
            raise ConfigError("seed must fit in 64 bits")

    def registry(self) -> list[Emitter]:
        if self.emitters is None:
            return builtin_emitters()
        return registry_from_directives(list(self.emitters))

    def to_json_dict(self) -> dict:
        strategy: dict = {"kind": self.strategy.kind}
        if self.strategy.fixed_id is not None:
            strategy["fixed_id"] = self.strategy.fixed_id
        if self.strategy.kind == "bandit":
            strategy["exploration"] = self.strategy.exploration
        return {
            "initial_prompt": self.initial_prompt,
            "pool_capacity": self.pool_capacity,
            "initial_count": self.initial_count,
            "generations": self.generations,
            "mutations_per_generation": self.mutations_per_generation,
            "k": self.k,
            "crossover_probability": self.crossover_probability,
            "strategy": strategy,
            "seed": self.seed,
            "provider": self.provider,
            "emitters": list(self.emitters) if self.emitters is not None else None,
            "margin_reward": self.margin_reward,
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "RunConfig":
        if not isinstance(data, dict):
            raise ConfigError("run config must be a JSON object")
        known = {
            "initial_prompt",
            "pool_capacity",
            "initial_count",
            "generations",
            "mutations_per_generation",
            "k",
            "crossover_probability",
            "strategy",
            "seed",
            "provider",
            "emitters",
            "margin_reward",
        }
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown run config fields: {sorted(unknown)}")
        if "initial_prompt" not in data:
            raise ConfigError("run config needs initial_prompt")
        kwargs = dict(data)
        raw_strategy = kwargs.get("strategy")
        if isinstance(raw_strategy, str):
            kwargs["strategy"] = SelectionStrategy.parse(raw_strategy)
        elif isinstance(raw_strategy, dict):
            kwargs["strategy"] = SelectionStrategy(
                kind=raw_strategy.get("kind", "bandit"),
                fixed_id=raw_strategy.get("fixed_id"),
                exploration=raw_strategy.get("exploration", DEFAULT_EXPLORATION),
            )
        elif raw_strategy is not None:
            raise ConfigError("strategy must be a string or object")
        if kwargs.get("emitters") is not None:
            kwargs["emitters"] = tuple(kwargs["emitters"])
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise ConfigError(f"bad run config: {exc}") from None


@dataclass(frozen=True)
class GenerationEvent:
    """Audit record for one candidate attempt."""

    generation: int
    attempt: int
    kind: str  # mutation | crossover
    parent_ids: tuple[str, ...]
    emitter_id: int | None
    instruction: str
    outcome: str
    child_id: str | None = None
    child_prompt: str | None = None
    artifact_ref: str | None = None
    digest: str | None = None
    embedding: np.ndarray | None = None
    candidate_score: float | None = None
    min_score: float | None = None
    evicted_id: str | None = None
    usage: TokenUsage | None = None
    error: str | None = None
    started_at: str = ""
    finished_at: str = ""

    def __eq__(self, other):
        if not isinstance(other, GenerationEvent):
            return NotImplemented
        for name in self.__dataclass_fields__:
            mine, theirs = getattr(self, name), getattr(other, name)
            if name == "embedding":
                if (mine is None) != (theirs is None):
                    return False
                if mine is not None and not np.array_equal(mine, theirs):
                    return False
            elif mine != theirs:
                return False
        return True


@dataclass
class RunResult:
    config: RunConfig
    pool: Pool
    events: list[GenerationEvent]
    metrics: list[dict]
    stats: EmitterStats


def render_mutation_instruction(parent_prompt: str, emitter: Emitter | None) -> str:
    """Fill the mutation template; the emitter-less form uses a generic
    change directive. Rendering is plain substitution, so prompts
    containing braces or template-like text pass through verbatim."""
    directive = emitter.directive if emitter is not None else EMITTERLESS_DIRECTIVE
    return MUTATION_TEMPLATE.replace("<<DIRECTIVE>>", directive).replace(
        "<<PROMPT>>", parent_prompt
    )


def render_crossover_instruction(prompt_a: str, prompt_b: str) -> str:
    return CROSSOVER_TEMPLATE.replace("<<PROMPT_A>>", prompt_a).replace("<<PROMPT_B>>", prompt_b)


def clean_mutator_output(text: str) -> str:
    """Strip whitespace and one layer of surrounding quotes."""
    text = text.strip()
    for quote in ('"', "'", "“”", "‘’"):
        if len(quote) == 1:
            opening = closing = quote
        else:
            opening, closing = quote
        if len(text) >= 2 and text.startswith(opening) and text.endswith(closing):
            text = text[1:-1].strip()
            break
    return text


def step_rng(seed: int, generation: int, attempt: int) -> np.random.Generator:
    """The stateless per-step stream; resume never needs saved rng state."""
    return np.random.default_rng([seed, generation, attempt])


def _generate_and_embed(provider, prompt: str, rng: np.random.Generator):
    gen_seed = int(rng.integers(2**31))
    artifact = provider.generate(prompt, gen_seed)
    embedding = provider.embed_artifact(artifact.artifact_ref)
    return artifact, embedding


def init_pool(config: RunConfig, provider, *, out_members: list | None = None) -> Pool:
    """Fill the pool with initial_count copies of the starting prompt, each
    with its own generated artifact. Provider failures abort (the retry
    budget lives inside the provider adapter)."""
    pool = Pool(capacity=config.pool_capacity, k=config.k)
    for i in range(config.initial_count):
        rng = step_rng(config.seed, 0, i)
        artifact, embedding = _generate_and_embed(provider, config.initial_prompt, rng)
        member = Individual(
            id=f"init-{i}",
            prompt=config.initial_prompt,
            artifact_ref=artifact.artifact_ref,
            embedding=embedding,
            born_generation=0,
        )
        outcome = try_insert(pool, member)
        assert outcome.kind == "filled"
        if out_members is not None:
            out_members.append(member)
    return pool


def _reward_for(config: RunConfig, outcome) -> float | None:
    if not config.margin_reward:
        return None  # binary acceptance default
    if outcome.candidate_score is None or outcome.min_score is None:
        return 1.0 if outcome.accepted else 0.0
    return max(0.0, outcome.candidate_score - outcome.min_score)


def evolve_step(
    pool: Pool,
    stats: EmitterStats,
    config: RunConfig,
    provider,
    registry: list[Emitter],
    *,
    generation: int,
    attempt: int,
    clock=utc_now_iso,
) -> GenerationEvent:
    """Evolve, generate, embed, and offer one candidate to the pool.

    Provider failures and empty mutator output degrade to a Rejected
    event that leaves the pool untouched; a selected emitter still gets
    charged the failed pull.
    """
    rng = step_rng(config.seed, generation, attempt)
    started_at = clock()

    crossover_draw = rng.random()
    is_crossover = crossover_draw < config.crossover_probability and len(pool) >= 2
    emitter: Emitter | None = None
    if is_crossover:
        kind = CROSSOVER
        first, second = (int(i) for i in rng.choice(len(pool), size=2, replace=False))
        parents = (pool.members[first], pool.members[second])
        instruction = render_crossover_instruction(parents[0].prompt, parents[1].prompt)
        context = MutationContext(
            kind=CROSSOVER, parent_prompts=(parents[0].prompt, parents[1].prompt)
        )
    else:
        kind = MUTATION
        parents = (pool.members[int(rng.integers(len(pool)))],)
        emitter = select_emitter(config.strategy, registry, stats, rng)
        instruction = render_mutation_instruction(parents[0].prompt, emitter)
        context = MutationContext(
            kind=MUTATION,
            parent_prompts=(parents[0].prompt,),
            emitter_id=emitter.id if emitter is not None else None,
        )

    base_event = GenerationEvent(
        generation=generation,
        attempt=attempt,
        kind=kind,
        parent_ids=tuple(p.id for p in parents),
        emitter_id=emitter.id if emitter is not None else None,
        instruction=instruction,
        outcome="rejected",
        started_at=started_at,
    )

    usage = None
    try:
        mutated = provider.mutate(instruction, context, rng)
        usage = mutated.usage
        child_prompt = clean_mutator_output(mutated.text)
        if not child_prompt:
            raise ProviderError("mutator returned an empty prompt", retryable=False)
        artifact, embedding = _generate_and_embed(provider, child_prompt, rng)
    except ProviderError as exc:
        event = replace(base_event, usage=usage, error=str(exc), finished_at=clock())
        if kind == MUTATION and emitter is not None:
            rejected = InsertOutcome(kind=REJECTED)
            record_outcome(stats, emitter, rejected, reward=_reward_for(config, rejected))
        return event

    child_id = f"g{generation}a{attempt}"
    lineage = Lineage(
        parents=tuple(p.id for p in parents),
        emitter_id=emitter.id if emitter is not None else None,
    )
    candidate = Individual(
        id=child_id,
        prompt=child_prompt,
        artifact_ref=artifact.artifact_ref,
        embedding=embedding,
        lineage=lineage,
        born_generation=generation,
    )
    outcome = try_insert(pool, candidate)
    if kind == MUTATION and emitter is not None:
        record_outcome(stats, emitter, outcome, reward=_reward_for(config, outcome))

    return replace(
        base_event,
        outcome=outcome.kind,
        child_id=child_id,
        child_prompt=child_prompt,
        artifact_ref=artifact.artifact_ref,
        digest=artifact.digest,
        embedding=candidate.embedding,
        candidate_score=outcome.candidate_score,
        min_score=outcome.min_score,
        evicted_id=outcome.evicted_id,
        usage=usage,
        finished_at=clock(),
    )


def metrics_row(
    config: RunConfig, provider, pool: Pool, *, generation: int, cumulative_tokens: int
) -> dict:
    """One per-generation metric record; generation 0 is the baseline pool."""
    embeddings = [m.embedding for m in pool.members]
    if len(pool) >= 2:
        vendi = vendi_score(embeddings)
        mpd = mean_pairwise_distance(embeddings)
        min_novelty = score_pool(pool).min_score
    else:
        vendi, mpd, min_novelty = 1.0, 0.0, None
    row = {
        "generation": generation,
        "pool_size": len(pool),
        "vendi": vendi,
        "mean_pairwise_distance": mpd,
        "min_novelty": min_novelty,
        "relevance": relevance(config.initial_prompt, [m.prompt for m in pool.members], provider),
        "cumulative_tokens": cumulative_tokens,
        "lpips": None,
    }
    if getattr(provider, "perceptual", False):
        refs = [m.artifact_ref for m in pool.members]
        distances = [
            provider.perceptual_distance(refs[i], refs[j])
            for i in range(len(refs))
            for j in range(i + 1, len(refs))
        ]
        row["lpips"] = sum(distances) / len(distances) if distances else None
    return row


@dataclass
class ResumePoint:
    """Where a stored run left off, for continuing mid-flight."""

    pool: Pool
    stats: EmitterStats
    next_generation: int
    next_attempt: int
    cumulative_tokens: int
    metrics: list[dict]


def run(
    config: RunConfig,
    provider,
    *,
    store=None,
    clock=utc_now_iso,
    resume: ResumePoint | None = None,
) -> RunResult:
    """Run (or finish) a full evolution: init, T generations of M steps,
    metrics after every generation, everything mirrored to the store."""
    registry = config.registry()
    if config.strategy.kind == "fixed":
        if all(e.id != config.strategy.fixed_id for e in registry):
            raise ConfigError(f"fixed emitter id {config.strategy.fixed_id} not in registry")

    events: list[GenerationEvent] = []
    if resume is None:
        members: list[Individual] = []
        pool = init_pool(config, provider, out_members=members)
        stats = EmitterStats()
        cumulative_tokens = 0
        metrics: list[dict] = []
        if store is not None:
            for member in members:
                store.record_init(member, at=clock())
        baseline = metrics_row(config, provider, pool, generation=0, cumulative_tokens=0)
        metrics.append(baseline)
        if store is not None:
            store.record_metrics(baseline)
            store.write_snapshot(
                generation=0, pool=pool, stats=stats, metrics_row=baseline,
                cumulative_tokens=0,
            )
        start_generation, start_attempt = 1, 0
    else:
        pool = resume.pool
        stats = resume.stats
        cumulative_tokens = resume.cumulative_tokens
        metrics = list(resume.metrics)
        start_generation, start_attempt = resume.next_generation, resume.next_attempt

    for generation in range(start_generation, config.generations + 1):
        first_attempt = start_attempt if generation == start_generation else 0
        for attempt in range(first_attempt, config.mutations_per_generation):
            event = evolve_step(
                pool, stats, config, provider, registry,
                generation=generation, attempt=attempt, clock=clock,
            )
            if event.usage is not None:
                cumulative_tokens += event.usage.total
            events.append(event)
            if store is not None:
                store.record_step(event)
        row = metrics_row(
            config, provider, pool, generation=generation, cumulative_tokens=cumulative_tokens
        )
        metrics.append(row)
        if store is not None:
            store.record_metrics(row)
            store.write_snapshot(
                generation=generation, pool=pool, stats=stats, metrics_row=row,
                cumulative_tokens=cumulative_tokens,
            )

    return RunResult(config=config, pool=pool, events=events, metrics=metrics, stats=stats)
