import base64
import hashlib
import io
import itertools
import json

import httpx
import pytest
from fastapi.testclient import TestClient
from PIL import Image

from embed_service.app import create_app
from embed_service.config import CacheConfig, EmbedderConfig, ServiceConfig, UpstreamConfig
from embed_service.upstream import ChatUpstream, ImageUpstream


def make_png(color=(200, 30, 90), size=(8, 8)) -> bytes:
    image = Image.new("RGB", size, color)
    buffer = io.BytesIO()
    image.save(buffer, format="PNG")
    return buffer.getvalue()


def chat_handler(request: httpx.Request) -> httpx.Response:
    payload = json.loads(request.content)
    instruction = payload["messages"][0]["content"]
    return httpx.Response(
        200,
        json={
            "choices": [{"message": {"content": f"rewritten: {instruction[:40]}"}}],
            "usage": {"prompt_tokens": 41, "completion_tokens": 14},
        },
    )


_counter = itertools.count()


def unique_chat_handler(request: httpx.Request) -> httpx.Response:
    return httpx.Response(
        200,
        json={
            "choices": [{"message": {"content": f"prompt variant {next(_counter)}"}}],
            "usage": {"prompt_tokens": 20, "completion_tokens": 6},
        },
    )


def image_handler(request: httpx.Request) -> httpx.Response:
    payload = json.loads(request.content)
    seed_bytes = hashlib.sha256(payload["prompt"].encode("utf-8")).digest()
    color = (seed_bytes[0], seed_bytes[1], seed_bytes[2])
    encoded = base64.b64encode(make_png(color=color)).decode("ascii")
    return httpx.Response(200, json={"data": [{"b64_json": encoded}]})


def upstream_pair(config: ServiceConfig, chat_fn=chat_handler, image_fn=image_handler):
    chat = ChatUpstream(
        config.chat, client=httpx.Client(transport=httpx.MockTransport(chat_fn))
    )
    image = ImageUpstream(
        config.image, client=httpx.Client(transport=httpx.MockTransport(image_fn))
    )
    return chat, image


@pytest.fixture
def service_config(tmp_path) -> ServiceConfig:
    return ServiceConfig(
        embedder=EmbedderConfig(backend="hash", dim=16),
        cache=CacheConfig(directory=tmp_path / "cache", max_bytes=10_000_000),
        chat=UpstreamConfig(base_url="http://chat.test", model="gpt-4o-mini"),
        image=UpstreamConfig(base_url="http://image.test", model="flux-dev"),
    )


@pytest.fixture
def app(service_config):
    chat, image = upstream_pair(service_config)
    return create_app(service_config, chat=chat, image=image, token=None)


@pytest.fixture
def client(app) -> TestClient:
    return TestClient(app)
