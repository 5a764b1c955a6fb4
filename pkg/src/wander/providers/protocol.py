"""Wire types for the provider HTTP protocol.

Every request/response is a flat snake_case JSON object. ``to_wire`` and
``from_wire`` round-trip losslessly; ``from_wire`` validates shape and
raises ProtocolError so transport adapters can treat schema violations
as fatal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from ..errors import ProtocolError

TEXT = "text"
IMAGE = "image"


def estimate_tokens(text: str) -> int:
    """Character-based token estimate for backends that report no usage."""
    return math.ceil(len(text) / 4)


def _require(data: dict, field: str, kind, what: str):
    if not isinstance(data, dict):
        raise ProtocolError(f"{what}: expected an object, got {type(data).__name__}")
    if field not in data:
        raise ProtocolError(f"{what}: missing field {field!r}")
    value = data[field]
    # bool is an int subclass but never a valid wire number
    if not isinstance(value, kind) or isinstance(value, bool):
        raise ProtocolError(f"{what}: field {field!r} has type {type(value).__name__}")
    return value


_NUMBER = (int, float)


@dataclass(frozen=True)
class TokenUsage:
    prompt_tokens: int
    completion_tokens: int
    estimated: bool = False

    def __post_init__(self):
        if self.prompt_tokens < 0 or self.completion_tokens < 0:
            raise ProtocolError("token counts must be >= 0")

    @property
    def total(self) -> int:
        return self.prompt_tokens + self.completion_tokens

    def to_wire(self) -> dict:
        return {
            "prompt_tokens": self.prompt_tokens,
            "completion_tokens": self.completion_tokens,
            "estimated": self.estimated,
        }

    @classmethod
    def from_wire(cls, data: dict) -> "TokenUsage":
        prompt = _require(data, "prompt_tokens", int, "usage")
        completion = _require(data, "completion_tokens", int, "usage")
        estimated = data.get("estimated", False)
        if not isinstance(estimated, bool):
            raise ProtocolError("usage: field 'estimated' must be a boolean")
        return cls(prompt_tokens=prompt, completion_tokens=completion, estimated=estimated)


@dataclass(frozen=True)
class MutateRequest:
    instruction: str
    model: str
    temperature: float
    max_output_tokens: int

    def to_wire(self) -> dict:
        return {
            "instruction": self.instruction,
            "model": self.model,
            "temperature": self.temperature,
            "max_output_tokens": self.max_output_tokens,
        }

    @classmethod
    def from_wire(cls, data: dict) -> "MutateRequest":
        return cls(
            instruction=_require(data, "instruction", str, "mutate request"),
            model=_require(data, "model", str, "mutate request"),
            temperature=float(_require(data, "temperature", _NUMBER, "mutate request")),
            max_output_tokens=_require(data, "max_output_tokens", int, "mutate request"),
        )


@dataclass(frozen=True)
class MutateResponse:
    text: str
    usage: TokenUsage | None = None

    def to_wire(self) -> dict:
        wire: dict = {"text": self.text}
        if self.usage is not None:
            wire["usage"] = self.usage.to_wire()
        return wire

    @classmethod
    def from_wire(cls, data: dict) -> "MutateResponse":
        text = _require(data, "text", str, "mutate response")
        usage = None
        if data.get("usage") is not None:
            usage = TokenUsage.from_wire(data["usage"])
        return cls(text=text, usage=usage)


@dataclass(frozen=True)
class GenerateRequest:
    prompt: str
    model: str
    size: str
    seed: int

    def to_wire(self) -> dict:
        return {"prompt": self.prompt, "model": self.model, "size": self.size, "seed": self.seed}

    @classmethod
    def from_wire(cls, data: dict) -> "GenerateRequest":
        return cls(
            prompt=_require(data, "prompt", str, "generate request"),
            model=_require(data, "model", str, "generate request"),
            size=_require(data, "size", str, "generate request"),
            seed=_require(data, "seed", int, "generate request"),
        )


@dataclass(frozen=True)
class GenerateResponse:
    artifact_ref: str
    digest: str

    def to_wire(self) -> dict:
        return {"artifact_ref": self.artifact_ref, "digest": self.digest}

    @classmethod
    def from_wire(cls, data: dict) -> "GenerateResponse":
        return cls(
            artifact_ref=_require(data, "artifact_ref", str, "generate response"),
            digest=_require(data, "digest", str, "generate response"),
        )


@dataclass(frozen=True)
class EmbedRequest:
    modality: str
    payload: str

    def __post_init__(self):
        if self.modality not in (TEXT, IMAGE):
            raise ProtocolError(f"unknown embed modality {self.modality!r}")

    def to_wire(self) -> dict:
        return {"modality": self.modality, "payload": self.payload}

    @classmethod
    def from_wire(cls, data: dict) -> "EmbedRequest":
        return cls(
            modality=_require(data, "modality", str, "embed request"),
            payload=_require(data, "payload", str, "embed request"),
        )


@dataclass(frozen=True)
class EmbedResponse:
    embedding: tuple[float, ...]

    def to_wire(self) -> dict:
        return {"embedding": list(self.embedding)}

    @classmethod
    def from_wire(cls, data: dict) -> "EmbedResponse":
        values = _require(data, "embedding", list, "embed response")
        if not values:
            raise ProtocolError("embed response: embedding must be non-empty")
        for v in values:
            if not isinstance(v, _NUMBER) or isinstance(v, bool):
                raise ProtocolError("embed response: embedding entries must be numbers")
        return cls(embedding=tuple(float(v) for v in values))


@dataclass(frozen=True)
class RateAxis:
    name: str
    bins: int

    def __post_init__(self):
        if self.bins < 2:
            raise ProtocolError("rate axis needs >= 2 bins")

    def to_wire(self) -> dict:
        return {"name": self.name, "bins": self.bins}

    @classmethod
    def from_wire(cls, data: dict) -> "RateAxis":
        return cls(
            name=_require(data, "name", str, "rate axis"),
            bins=_require(data, "bins", int, "rate axis"),
        )


@dataclass(frozen=True)
class RateRequest:
    artifact_ref: str
    axes: tuple[RateAxis, ...]

    def to_wire(self) -> dict:
        return {"artifact_ref": self.artifact_ref, "axes": [a.to_wire() for a in self.axes]}

    @classmethod
    def from_wire(cls, data: dict) -> "RateRequest":
        ref = _require(data, "artifact_ref", str, "rate request")
        axes = _require(data, "axes", list, "rate request")
        return cls(artifact_ref=ref, axes=tuple(RateAxis.from_wire(a) for a in axes))


@dataclass(frozen=True)
class RateResponse:
    quality: float
    bins: tuple[int, ...]

    def __post_init__(self):
        if not 0.0 <= self.quality <= 1.0:
            raise ProtocolError("rating quality must lie in [0, 1]")

    def to_wire(self) -> dict:
        return {"quality": self.quality, "bins": list(self.bins)}

    @classmethod
    def from_wire(cls, data: dict) -> "RateResponse":
        quality = _require(data, "quality", _NUMBER, "rate response")
        bins = _require(data, "bins", list, "rate response")
        for b in bins:
            if not isinstance(b, int) or isinstance(b, bool):
                raise ProtocolError("rate response: bins must be integers")
        return cls(quality=float(quality), bins=tuple(bins))


@dataclass(frozen=True)
class MetaResponse:
    embedding_dim: int
    models: dict

    def to_wire(self) -> dict:
        return {"embedding_dim": self.embedding_dim, "models": dict(self.models)}

    @classmethod
    def from_wire(cls, data: dict) -> "MetaResponse":
        return cls(
            embedding_dim=_require(data, "embedding_dim", int, "meta response"),
            models=_require(data, "models", dict, "meta response"),
        )
