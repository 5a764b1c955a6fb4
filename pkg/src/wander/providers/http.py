"""HTTP adapter for the provider wire protocol.

One POST per call against /v1/mutate, /v1/generate, /v1/embed (plus the
optional /v1/rate and /v1/perceptual_distance), bearer-authenticated from
the WANDER_PROVIDER_TOKEN environment variable. 429 and 5xx responses and
transport timeouts are retried with exponential backoff; other non-2xx
statuses and schema violations fail immediately.
"""

from __future__ import annotations

import os
import time
from dataclasses import dataclass

import httpx
import numpy as np

from ..core import as_embedding
from ..errors import ProtocolError, ProviderError
from . import GenerateResult, MutateResult, MutationContext
from .protocol import (
    EmbedRequest,
    EmbedResponse,
    GenerateRequest,
    GenerateResponse,
    MetaResponse,
    MutateRequest,
    MutateResponse,
    RateAxis,
    RateRequest,
    RateResponse,
    TokenUsage,
    estimate_tokens,
)

TOKEN_ENV = "WANDER_PROVIDER_TOKEN"


@dataclass(frozen=True)
class HttpProviderConfig:
    base_url: str
    mutate_model: str = "gpt-4o-mini"
    generate_model: str = "flux-dev"
    image_size: str = "1024x1024"
    temperature: float = 0.9
    max_output_tokens: int = 256
    timeout_seconds: float = 60.0
    max_attempts: int = 3
    backoff_seconds: float = 0.5
    perceptual: bool = False


def _retryable_status(status: int) -> bool:
    return status == 429 or status >= 500


class HttpProvider:
    """Stateless request/response adapter; all calls are pure round-trips.

    ``client`` and ``sleep`` are injectable for tests. The synthetic-only
    mutation context and rng are accepted and ignored so the two provider
    implementations share one call surface.
    """

    def __init__(
        self,
        config: HttpProviderConfig,
        *,
        client: httpx.Client | None = None,
        sleep=time.sleep,
        token: str | None = None,
    ):
        self.config = config
        self._client = client or httpx.Client(timeout=config.timeout_seconds)
        self._sleep = sleep
        self._token = token if token is not None else os.environ.get(TOKEN_ENV)

    @property
    def perceptual(self) -> bool:
        return self.config.perceptual

    def _headers(self) -> dict:
        headers = {"content-type": "application/json"}
        if self._token:
            headers["authorization"] = f"Bearer {self._token}"
        return headers

    def _url(self, path: str) -> str:
        return self.config.base_url.rstrip("/") + path

    def _round_trip(self, method: str, path: str, payload: dict | None):
        last_error: ProviderError | None = None
        for attempt in range(self.config.max_attempts):
            if attempt:
                self._sleep(self.config.backoff_seconds * 2 ** (attempt - 1))
            try:
                response = self._client.request(
                    method, self._url(path), json=payload, headers=self._headers()
                )
            except httpx.TimeoutException as exc:
                last_error = ProviderError(f"timeout on {path}: {exc}", retryable=True)
                continue
            except httpx.TransportError as exc:
                last_error = ProviderError(f"transport failure on {path}: {exc}", retryable=True)
                continue
            if response.is_success:
                return response
            message = f"{path} returned HTTP {response.status_code}"
            if not _retryable_status(response.status_code):
                raise ProviderError(message, retryable=False)
            last_error = ProviderError(message, retryable=True)
        assert last_error is not None
        raise last_error

    def _post_json(self, path: str, payload: dict) -> dict:
        response = self._round_trip("POST", path, payload)
        try:
            body = response.json()
        except ValueError as exc:
            raise ProtocolError(f"{path} returned unparseable JSON: {exc}") from None
        if not isinstance(body, dict):
            raise ProtocolError(f"{path} returned {type(body).__name__}, expected object")
        return body

    def mutate(self, instruction: str, context: MutationContext, rng=None) -> MutateResult:
        request = MutateRequest(
            instruction=instruction,
            model=self.config.mutate_model,
            temperature=self.config.temperature,
            max_output_tokens=self.config.max_output_tokens,
        )
        parsed = MutateResponse.from_wire(self._post_json("/v1/mutate", request.to_wire()))
        usage = parsed.usage
        if usage is None:
            usage = TokenUsage(
                prompt_tokens=estimate_tokens(instruction),
                completion_tokens=estimate_tokens(parsed.text),
                estimated=True,
            )
        return MutateResult(text=parsed.text, usage=usage)

    def generate(self, prompt: str, seed: int) -> GenerateResult:
        request = GenerateRequest(
            prompt=prompt, model=self.config.generate_model, size=self.config.image_size, seed=seed
        )
        parsed = GenerateResponse.from_wire(self._post_json("/v1/generate", request.to_wire()))
        return GenerateResult(artifact_ref=parsed.artifact_ref, digest=parsed.digest)

    def _embed(self, modality: str, payload: str) -> np.ndarray:
        request = EmbedRequest(modality=modality, payload=payload)
        parsed = EmbedResponse.from_wire(self._post_json("/v1/embed", request.to_wire()))
        return as_embedding(parsed.embedding)

    def embed_text(self, text: str) -> np.ndarray:
        return self._embed("text", text)

    def embed_artifact(self, artifact_ref: str) -> np.ndarray:
        return self._embed("image", artifact_ref)

    def rate(self, artifact_ref: str, axes: tuple[RateAxis, ...]) -> RateResponse:
        request = RateRequest(artifact_ref=artifact_ref, axes=axes)
        return RateResponse.from_wire(self._post_json("/v1/rate", request.to_wire()))

    def perceptual_distance(self, ref_a: str, ref_b: str) -> float:
        body = self._post_json("/v1/perceptual_distance", {"ref_a": ref_a, "ref_b": ref_b})
        if "distance" not in body or isinstance(body["distance"], (str, bool, type(None))):
            raise ProtocolError("perceptual_distance response missing numeric 'distance'")
        return float(body["distance"])

    def meta(self) -> MetaResponse:
        response = self._round_trip("GET", "/v1/meta", None)
        try:
            body = response.json()
        except ValueError as exc:
            raise ProtocolError(f"/v1/meta returned unparseable JSON: {exc}") from None
        return MetaResponse.from_wire(body)

    def fetch_artifact(self, artifact_ref: str) -> bytes:
        response = self._round_trip("GET", f"/v1/artifacts/{artifact_ref}", None)
        return response.content
