"""Pydantic models for the provider wire protocol.

Field sets mirror the client side of the protocol exactly; the golden
fixtures under the engine's tests/fixtures/protocol must round-trip
through these models unmodified.
"""

from __future__ import annotations

from pydantic import BaseModel, ConfigDict, Field

_STRICT = ConfigDict(extra="forbid", protected_namespaces=())


class TokenUsage(BaseModel):
    model_config = _STRICT

    prompt_tokens: int = Field(ge=0)
    completion_tokens: int = Field(ge=0)
    estimated: bool = False


class MutateRequest(BaseModel):
    model_config = _STRICT

    instruction: str
    model: str
    temperature: float
    max_output_tokens: int


class MutateResponse(BaseModel):
    model_config = _STRICT

    text: str
    usage: TokenUsage | None = None


class GenerateRequest(BaseModel):
    model_config = _STRICT

    prompt: str
    model: str
    size: str
    seed: int


class GenerateResponse(BaseModel):
    model_config = _STRICT

    artifact_ref: str
    digest: str


class EmbedRequest(BaseModel):
    model_config = _STRICT

    modality: str  # validated in the route so unknown values map to 400
    payload: str


class EmbedResponse(BaseModel):
    model_config = _STRICT

    embedding: list[float]


class RateAxis(BaseModel):
    model_config = _STRICT

    name: str
    bins: int = Field(ge=2)


class RateRequest(BaseModel):
    model_config = _STRICT

    artifact_ref: str
    axes: list[RateAxis]


class RateResponse(BaseModel):
    model_config = _STRICT

    quality: float = Field(ge=0.0, le=1.0)
    bins: list[int]


class MetaResponse(BaseModel):
    model_config = _STRICT

    embedding_dim: int
    models: dict[str, str]
