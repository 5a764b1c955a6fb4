"""Mutation-directive registry and emitter selection strategies.

An emitter is a short natural-language instruction spliced into the
mutation prompt to push the rewrite in a particular direction. Selection
is pluggable: no emitter at all, one fixed emitter, uniform random, or a
UCB1 bandit fed by pool-admission feedback.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import InsertOutcome
from .errors import ConfigError, StructuralError

#: Built-in mutation directives, ids 1-10.
BUILTIN_DIRECTIVES = (
    "Completely change the composition.",
    "Completely change the style.",
    "Completely change the mood.",
    "Completely change the lighting.",
    "Completely change the atmosphere.",
    "Completely change the artistic medium.",
    "Add additional elements, while retaining the primary focus.",
    "Simplify and remove unnecessary information. Be concise.",
    "Come up with an artist to make it similar to.",
    "Suggest a novel color scheme.",
)

#: Default UCB1 exploration constant.
DEFAULT_EXPLORATION = math.sqrt(2.0)

# strategy kinds
NONE = "none"
FIXED = "fixed"
RANDOM = "random"
BANDIT = "bandit"


@dataclass(frozen=True)
class Emitter:
    id: int
    directive: str

    def __post_init__(self):
        if not self.directive.strip():
            raise StructuralError("emitter directive must be non-empty")


def builtin_emitters() -> list[Emitter]:
    """The default directive set, ids 1-10 in fixed order."""
    return [Emitter(id=i + 1, directive=d) for i, d in enumerate(BUILTIN_DIRECTIVES)]


def registry_from_directives(directives: list[str]) -> list[Emitter]:
    """Build a custom registry; ids are assigned 1..n in list order."""
    if not directives:
        raise ConfigError("custom emitter list must be non-empty")
    return [Emitter(id=i + 1, directive=d) for i, d in enumerate(directives)]


@dataclass
class ArmStats:
    pulls: int = 0
    successes: int = 0
    cumulative_reward: float = 0.0


@dataclass
class EmitterStats:
    """Per-emitter bandit bookkeeping, keyed by emitter id."""

    arms: dict[int, ArmStats] = field(default_factory=dict)

    def arm(self, emitter_id: int) -> ArmStats:
        return self.arms.setdefault(emitter_id, ArmStats())

    @property
    def total_pulls(self) -> int:
        return sum(a.pulls for a in self.arms.values())


@dataclass(frozen=True)
class SelectionStrategy:
    """One of none / fixed / random / bandit.

    ``fixed_id`` applies to the fixed strategy; ``exploration`` is the
    UCB1 constant c (> 0).
    """

    kind: str
    fixed_id: int | None = None
    exploration: float = DEFAULT_EXPLORATION

    def __post_init__(self):
        if self.kind not in (NONE, FIXED, RANDOM, BANDIT):
            raise ConfigError(f"unknown selection strategy {self.kind!r}")
        if self.kind == FIXED and self.fixed_id is None:
            raise ConfigError("fixed strategy requires an emitter id")
        if self.exploration <= 0:
            raise ConfigError("bandit exploration constant must be > 0")

    @classmethod
    def parse(cls, text: str) -> "SelectionStrategy":
        """Parse 'none', 'fixed:ID', 'random', 'bandit' or 'bandit:C'."""
        kind, _, arg = text.strip().partition(":")
        kind = kind.lower()
        if kind == FIXED:
            if not arg:
                raise ConfigError("fixed strategy needs an id, e.g. 'fixed:3'")
            return cls(kind=FIXED, fixed_id=int(arg))
        if kind == BANDIT and arg:
            return cls(kind=BANDIT, exploration=float(arg))
        if kind in (NONE, RANDOM, BANDIT) and not arg:
            return cls(kind=kind)
        raise ConfigError(f"cannot parse selection strategy {text!r}")


def select_emitter(
    strategy: SelectionStrategy,
    registry: list[Emitter],
    stats: EmitterStats,
    rng: np.random.Generator,
) -> Emitter | None:
    """Pick the emitter for the next mutation, or None for emitter-less runs.

    UCB1 first pulls every unseen arm once (lowest id first), then
    maximizes mean reward + c * sqrt(ln(total pulls) / pulls); score ties
    break toward the lowest id.
    """
    if not registry:
        raise ConfigError("emitter registry is empty")
    if strategy.kind == NONE:
        return None
    if strategy.kind == FIXED:
        for emitter in registry:
            if emitter.id == strategy.fixed_id:
                return emitter
        raise ConfigError(f"fixed emitter id {strategy.fixed_id} not in registry")
    if strategy.kind == RANDOM:
        return registry[int(rng.integers(len(registry)))]

    # bandit
    ordered = sorted(registry, key=lambda e: e.id)
    for emitter in ordered:
        if stats.arm(emitter.id).pulls == 0:
            return emitter
    total = stats.total_pulls
    best: Emitter | None = None
    best_score = -math.inf
    for emitter in ordered:
        arm = stats.arm(emitter.id)
        mean = arm.cumulative_reward / arm.pulls
        score = mean + strategy.exploration * math.sqrt(math.log(total) / arm.pulls)
        if score > best_score:
            best, best_score = emitter, score
    return best


def record_outcome(
    stats: EmitterStats,
    emitter: Emitter,
    outcome: InsertOutcome,
    *,
    reward: float | None = None,
) -> EmitterStats:
    """Credit the emitter used by a mutation with the admission result.

    Default reward is binary acceptance (entered the pool = 1). A caller
    may pass an alternative reward; success counting always follows
    acceptance. Crossover attempts never reach this function.
    """
    arm = stats.arm(emitter.id)
    arm.pulls += 1
    if outcome.accepted:
        arm.successes += 1
    if reward is None:
        reward = 1.0 if outcome.accepted else 0.0
    arm.cumulative_reward += reward
    return stats
