"""Service configuration, loaded from one JSON or YAML file.

Upstream API keys never live in the file: each upstream names the
environment variable that holds its key.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Literal

import yaml
from pydantic import BaseModel, ConfigDict, Field

TOKEN_ENV = "WANDER_PROVIDER_TOKEN"


class EmbedderConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", protected_namespaces=())

    backend: Literal["clip", "hash"] = "clip"
    model: str = "clip-ViT-B-32"
    dim: int = Field(default=512, ge=2)  # hash backend only; clip reports its own


class UpstreamConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", protected_namespaces=())

    base_url: str
    api_key_env: str = ""
    model: str = ""  # advertised at /v1/meta; requests carry their own model
    timeout_seconds: float = Field(default=120.0, gt=0)


class CacheConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    directory: Path
    max_bytes: int = Field(default=256 * 1024 * 1024, gt=0)


class ServiceConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    host: str = "127.0.0.1"
    port: int = Field(default=8000, ge=1, le=65535)
    embedder: EmbedderConfig = EmbedderConfig()
    cache: CacheConfig
    chat: UpstreamConfig | None = None
    image: UpstreamConfig | None = None


def load_config(path: str | Path) -> ServiceConfig:
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if path.suffix in (".yaml", ".yml"):
        data = yaml.safe_load(text)
    else:
        data = json.loads(text)
    return ServiceConfig.model_validate(data)
