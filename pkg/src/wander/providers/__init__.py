"""Provider abstraction: the mutator, generator, and embedder capabilities.

The engine consumes a small call surface (mutate / generate / embed_text /
embed_artifact, optionally rate). Two implementations ship here: an HTTP
adapter speaking the JSON wire protocol, and a closed-form synthetic
provider for hermetic runs. ``mutate`` receives both the rendered
instruction (what an LLM backend sees and what the event log records) and
a structured MutationContext (what deterministic test providers use).
"""

from __future__ import annotations

from dataclasses import dataclass

from ..errors import ConfigError, StructuralError
from .protocol import TokenUsage

MUTATION = "mutation"
CROSSOVER = "crossover"
DIRECTED = "directed"


@dataclass(frozen=True)
class MutationContext:
    """Structured description of one prompt-evolution step.

    ``target_coords`` only applies to directed (grid-targeted) mutation.
    """

    kind: str
    parent_prompts: tuple[str, ...]
    emitter_id: int | None = None
    target_coords: tuple[float, float] | None = None

    def __post_init__(self):
        if self.kind not in (MUTATION, CROSSOVER, DIRECTED):
            raise StructuralError(f"unknown mutation kind {self.kind!r}")
        expected = 2 if self.kind == CROSSOVER else 1
        if len(self.parent_prompts) != expected:
            raise StructuralError(f"{self.kind} takes {expected} parent prompt(s)")
        if self.kind != MUTATION and self.emitter_id is not None:
            raise StructuralError("only plain mutation can carry an emitter")
        if (self.kind == DIRECTED) != (self.target_coords is not None):
            raise StructuralError("directed mutation requires target coordinates")


@dataclass(frozen=True)
class MutateResult:
    text: str
    usage: TokenUsage


@dataclass(frozen=True)
class GenerateResult:
    artifact_ref: str
    digest: str


def from_config(config: dict, *, default_seed: int | None = None):
    """Build a provider from its JSON config block.

    ``{"kind": "synthetic", ...}`` or ``{"kind": "http", "base_url": ...}``.
    A synthetic block without an explicit seed inherits ``default_seed``.
    """
    if not isinstance(config, dict) or "kind" not in config:
        raise ConfigError("provider config must be an object with a 'kind' field")
    kind = config["kind"]
    options = {key: value for key, value in config.items() if key != "kind"}
    if kind == "synthetic":
        from .synthetic import SyntheticProvider, SyntheticWorld

        if options.get("seed") is None:
            options["seed"] = 0 if default_seed is None else int(default_seed)
        for table in ("emitter_steps", "emitter_jitters"):
            if table in options:  # JSON keys arrive as strings
                options[table] = {int(k): float(v) for k, v in options[table].items()}
        try:
            world = SyntheticWorld(**options)
        except TypeError as exc:
            raise ConfigError(f"bad synthetic provider config: {exc}") from None
        return SyntheticProvider(world)
    if kind == "http":
        from .http import HttpProvider, HttpProviderConfig

        try:
            http_config = HttpProviderConfig(**options)
        except TypeError as exc:
            raise ConfigError(f"bad http provider config: {exc}") from None
        return HttpProvider(http_config)
    raise ConfigError(f"unknown provider kind {kind!r}")


__all__ = [
    "MUTATION",
    "CROSSOVER",
    "DIRECTED",
    "MutationContext",
    "MutateResult",
    "GenerateResult",
    "TokenUsage",
    "from_config",
]
