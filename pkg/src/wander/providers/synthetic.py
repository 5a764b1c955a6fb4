"""Deterministic vector-space provider for hermetic testing.

The world is a unit sphere in R^D. Prompts carry their own embedding in a
tagged base64 payload, emitters are fixed orthogonal directions, and
"generation" adds bounded Gaussian noise. Mutation, generation, and
embedding are all closed-form functions of (world seed, inputs), so any
run replays bit-for-bit.
"""

from __future__ import annotations

import base64
import hashlib
from dataclasses import dataclass, field

import numpy as np

from ..core import as_embedding
from ..errors import ConfigError, DomainError, ProviderError
from . import CROSSOVER, DIRECTED, GenerateResult, MutateResult, MutationContext
from .protocol import RateAxis, RateResponse, TokenUsage, estimate_tokens

PROMPT_TAG = "synp1:"
ARTIFACT_TAG = "synv1:"

# domain-separation constants for derived rng streams
_GENERATE_STREAM = 917
_TEXT_STREAM = 331


def _encode(vec: np.ndarray, tag: str) -> str:
    data = np.asarray(vec, dtype="<f4").tobytes()
    return tag + base64.b64encode(data).decode("ascii")


def _decode(payload: str, tag: str) -> np.ndarray:
    raw = base64.b64decode(payload[len(tag):].encode("ascii"), validate=True)
    if not raw or len(raw) % 4:
        raise ProviderError(f"malformed {tag} payload")
    return np.frombuffer(raw, dtype="<f4").astype(np.float32)


@dataclass(frozen=True)
class SyntheticWorld:
    """Closed-form stand-ins for the mutator, generator, and embedder.

    ``step_size`` is the emitter move length, ``noise_scale`` the
    generation noise, ``jitter_scale`` the small random component of every
    mutation. Per-emitter overrides allow worlds where only some
    directions make progress. ``rater_scale`` maps the first two embedding
    coordinates onto rating axes (coordinates live in [-scale, scale]).
    """

    dim: int = 32
    seed: int = 0
    emitter_count: int = 10
    step_size: float = 0.8
    noise_scale: float = 0.05
    jitter_scale: float = 0.01
    emitter_steps: dict = field(default_factory=dict)
    emitter_jitters: dict = field(default_factory=dict)
    rater_scale: float = 0.8

    def __post_init__(self):
        if self.dim < 3:
            raise ConfigError("synthetic world needs dim >= 3")
        if self.emitter_count < 1:
            raise ConfigError("synthetic world needs >= 1 emitter direction")
        if not 0.0 < self.rater_scale <= 1.0:
            raise ConfigError("rater_scale must lie in (0, 1]")

    def direction(self, emitter_id: int) -> np.ndarray:
        """Unit direction for an emitter; basis vectors, so directions are
        mutually orthogonal whenever dim >= emitter_count."""
        if emitter_id < 1:
            raise DomainError(f"emitter id must be >= 1, got {emitter_id}")
        vec = np.zeros(self.dim, dtype=np.float64)
        vec[(emitter_id - 1) % self.dim] = 1.0
        return vec

    def step_for(self, emitter_id: int) -> float:
        return float(self.emitter_steps.get(emitter_id, self.step_size))

    def jitter_for(self, emitter_id: int | None) -> float:
        if emitter_id is None:
            return self.jitter_scale
        return float(self.emitter_jitters.get(emitter_id, self.jitter_scale))

    def embed_text(self, text: str) -> np.ndarray:
        """Tagged prompts decode to their payload vector; free text maps to
        a reproducible hash-seeded direction on the unit sphere."""
        if text.startswith(PROMPT_TAG):
            return _decode(text, PROMPT_TAG)
        digest = hashlib.sha256(text.encode("utf-8")).digest()
        words = np.frombuffer(digest, dtype="<u4").tolist()
        rng = np.random.default_rng([self.seed, _TEXT_STREAM, *words])
        vec = rng.normal(size=self.dim)
        return as_embedding(vec / np.linalg.norm(vec))

    def embed_artifact(self, artifact_ref: str) -> np.ndarray:
        if not artifact_ref.startswith(ARTIFACT_TAG):
            raise ProviderError(f"not a synthetic artifact ref: {artifact_ref!r}")
        return as_embedding(_decode(artifact_ref, ARTIFACT_TAG))


def _jitter(rng: np.random.Generator, dim: int, scale: float) -> np.ndarray:
    if scale == 0.0:
        return np.zeros(dim)
    # scaled so the expected jitter norm is about `scale`
    return rng.normal(size=dim) * (scale / np.sqrt(dim))


def _normalize(vec: np.ndarray, fallback: np.ndarray) -> np.ndarray:
    norm = float(np.linalg.norm(vec))
    if norm < 1e-9:
        # degenerate move (e.g. exactly antipodal crossover); stay put
        vec, norm = fallback, float(np.linalg.norm(fallback))
    return vec / norm


class SyntheticProvider:
    """Provider facade over a SyntheticWorld.

    ``mutate`` ignores the rendered instruction text and works from the
    structured context, which carries the parent prompts and emitter id;
    the instruction still determines the reported token usage so cost
    accounting stays exercised.
    """

    def __init__(self, world: SyntheticWorld):
        self.world = world

    @property
    def embedding_dim(self) -> int:
        return self.world.dim

    def mutate(
        self, instruction: str, context: MutationContext, rng: np.random.Generator
    ) -> MutateResult:
        world = self.world
        parents = [world.embed_text(p).astype(np.float64) for p in context.parent_prompts]
        if context.kind == CROSSOVER:
            base = (parents[0] + parents[1]) / 2.0
            target = base + _jitter(rng, world.dim, world.jitter_scale)
        elif context.kind == DIRECTED:
            a1, a2 = context.target_coords
            base = parents[0].copy()
            head = np.array([a1, a2]) * world.rater_scale
            residual = float(max(0.0, 1.0 - head @ head))
            tail = base[2:]
            tail_norm = float(np.linalg.norm(tail))
            if tail_norm < 1e-9:
                tail = np.zeros(world.dim - 2)
                tail[0] = 1.0
                tail_norm = 1.0
            target = np.concatenate([head, tail * (np.sqrt(residual) / tail_norm)])
            target = target + _jitter(rng, world.dim, world.jitter_scale)
        else:
            base = parents[0]
            move = np.zeros(world.dim)
            if context.emitter_id is not None:
                move = world.step_for(context.emitter_id) * world.direction(context.emitter_id)
            target = base + move + _jitter(rng, world.dim, world.jitter_for(context.emitter_id))
        child = _normalize(target, fallback=parents[0])
        prompt = _encode(child, PROMPT_TAG)
        usage = TokenUsage(
            prompt_tokens=estimate_tokens(instruction),
            completion_tokens=estimate_tokens(prompt),
            estimated=True,
        )
        return MutateResult(text=prompt, usage=usage)

    def generate(self, prompt: str, seed: int) -> GenerateResult:
        world = self.world
        target = world.embed_text(prompt).astype(np.float64)
        rng = np.random.default_rng([world.seed, _GENERATE_STREAM, seed])
        vec = target + _jitter(rng, world.dim, world.noise_scale)
        ref = _encode(vec, ARTIFACT_TAG)
        digest = hashlib.sha256(base64.b64decode(ref[len(ARTIFACT_TAG):])).hexdigest()
        return GenerateResult(artifact_ref=ref, digest=digest)

    def embed_text(self, text: str) -> np.ndarray:
        return self.world.embed_text(text)

    def embed_artifact(self, artifact_ref: str) -> np.ndarray:
        return self.world.embed_artifact(artifact_ref)

    def rate(self, artifact_ref: str, axes: tuple[RateAxis, ...]) -> RateResponse:
        """Deterministic rating from the artifact's leading coordinates.

        Coordinate c of a unit vector lies in [-rater_scale, rater_scale]
        by construction of directed mutation; bins split that range
        evenly. Quality reads the third coordinate, shifted into [0, 1].
        """
        if len(axes) != 2:
            raise ProviderError("synthetic rater expects exactly 2 axes")
        vec = self.embed_artifact(artifact_ref).astype(np.float64)
        unit = vec / np.linalg.norm(vec)
        bins = []
        for coord, axis in zip(unit[:2], axes):
            scaled = float(coord) / self.world.rater_scale
            position = (min(1.0, max(-1.0, scaled)) + 1.0) / 2.0
            bins.append(min(int(position * axis.bins), axis.bins - 1))
        quality = min(1.0, max(0.0, 0.5 + float(unit[2])))
        return RateResponse(quality=quality, bins=tuple(bins))
