"""Upstream adapters: OpenAI-compatible chat and image endpoints.

Upstream failures surface as UpstreamError with the status this service
should answer with: 502 for conditions the engine may retry (429, 5xx,
timeouts, malformed bodies), 400 for everything it should not.
"""

from __future__ import annotations

import base64
import os

import httpx

from .config import UpstreamConfig


class UpstreamError(Exception):
    def __init__(self, status_code: int, detail: str):
        super().__init__(detail)
        self.status_code = status_code
        self.detail = detail


def _mapped_status(upstream_status: int) -> int:
    return 502 if upstream_status == 429 or upstream_status >= 500 else 400


class UpstreamClient:
    def __init__(self, config: UpstreamConfig, *, client: httpx.Client | None = None):
        self.config = config
        self._client = client or httpx.Client(timeout=config.timeout_seconds)

    def _headers(self) -> dict:
        headers = {"content-type": "application/json"}
        key = os.environ.get(self.config.api_key_env, "") if self.config.api_key_env else ""
        if key:
            headers["authorization"] = f"Bearer {key}"
        return headers

    def _post(self, path: str, payload: dict) -> dict:
        url = self.config.base_url.rstrip("/") + path
        try:
            response = self._client.post(url, json=payload, headers=self._headers())
        except httpx.TimeoutException as exc:
            raise UpstreamError(502, f"upstream timeout: {exc}") from None
        except httpx.TransportError as exc:
            raise UpstreamError(502, f"upstream unreachable: {exc}") from None
        if not response.is_success:
            raise UpstreamError(
                _mapped_status(response.status_code),
                f"upstream returned HTTP {response.status_code}",
            )
        try:
            body = response.json()
        except ValueError:
            raise UpstreamError(502, "upstream returned unparseable JSON") from None
        if not isinstance(body, dict):
            raise UpstreamError(502, "upstream returned a non-object body")
        return body


class ChatUpstream(UpstreamClient):
    def complete(
        self, instruction: str, model: str, temperature: float, max_output_tokens: int
    ) -> tuple[str, dict | None]:
        """Returns (text, usage) with usage copied verbatim or None."""
        body = self._post(
            "/chat/completions",
            {
                "model": model,
                "messages": [{"role": "user", "content": instruction}],
                "temperature": temperature,
                "max_tokens": max_output_tokens,
            },
        )
        try:
            text = body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError):
            raise UpstreamError(502, "chat upstream response missing message content") from None
        if not isinstance(text, str):
            raise UpstreamError(502, "chat upstream returned non-text content")

        usage = body.get("usage")
        if (
            isinstance(usage, dict)
            and isinstance(usage.get("prompt_tokens"), int)
            and isinstance(usage.get("completion_tokens"), int)
        ):
            return text, {
                "prompt_tokens": usage["prompt_tokens"],
                "completion_tokens": usage["completion_tokens"],
                "estimated": False,
            }
        return text, None


class ImageUpstream(UpstreamClient):
    def generate(self, prompt: str, model: str, size: str, seed: int) -> bytes:
        body = self._post(
            "/images/generations",
            {
                "model": model,
                "prompt": prompt,
                "size": size,
                "seed": seed,
                "response_format": "b64_json",
            },
        )
        try:
            encoded = body["data"][0]["b64_json"]
        except (KeyError, IndexError, TypeError):
            raise UpstreamError(502, "image upstream response missing b64_json") from None
        if not isinstance(encoded, str):
            raise UpstreamError(502, "image upstream returned non-string b64_json")
        try:
            return base64.b64decode(encoded, validate=True)
        except Exception:
            raise UpstreamError(502, "image upstream returned invalid base64") from None
