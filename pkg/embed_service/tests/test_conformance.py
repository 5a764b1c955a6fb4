"""Wire-protocol conformance against the engine's golden fixtures."""

import json
from pathlib import Path

import numpy as np
import pytest

from embed_service.wire import (
    EmbedRequest,
    EmbedResponse,
    GenerateRequest,
    GenerateResponse,
    MetaResponse,
    MutateRequest,
    MutateResponse,
    RateRequest,
    RateResponse,
)

FIXTURE_DIR = Path(__file__).resolve().parents[2] / "tests" / "fixtures" / "protocol"

FIXTURE_TYPES = {
    "mutate_request": MutateRequest,
    "mutate_response": MutateResponse,
    "mutate_response_no_usage": MutateResponse,
    "generate_request": GenerateRequest,
    "generate_response": GenerateResponse,
    "embed_request_text": EmbedRequest,
    "embed_request_image": EmbedRequest,
    "embed_response": EmbedResponse,
    "rate_request": RateRequest,
    "rate_response": RateResponse,
    "meta_response": MetaResponse,
}


def test_every_golden_fixture_round_trips():
    stems = {path.stem for path in FIXTURE_DIR.glob("*.json")}
    assert stems == set(FIXTURE_TYPES)
    for path in sorted(FIXTURE_DIR.glob("*.json")):
        wire = json.loads(path.read_text(encoding="utf-8"))
        model = FIXTURE_TYPES[path.stem].model_validate(wire)
        assert model.model_dump(exclude_none=True) == wire, path.name


def test_served_meta_parses_as_protocol_meta(client):
    response = client.get("/v1/meta")
    assert response.status_code == 200
    meta = MetaResponse.model_validate(response.json())
    assert meta.embedding_dim == 16
    assert set(meta.models) == {"embed", "mutate", "generate"}


def test_meta_dim_matches_every_embed_response(client):
    dim = client.get("/v1/meta").json()["embedding_dim"]

    text = client.post("/v1/embed", json={"modality": "text", "payload": "a quiet harbor"})
    assert text.status_code == 200
    assert len(EmbedResponse.model_validate(text.json()).embedding) == dim

    generated = client.post(
        "/v1/generate",
        json={"prompt": "harbor", "model": "flux-dev", "size": "64x64", "seed": 7},
    )
    ref = GenerateResponse.model_validate(generated.json()).artifact_ref
    image = client.post("/v1/embed", json={"modality": "image", "payload": ref})
    assert image.status_code == 200
    assert len(EmbedResponse.model_validate(image.json()).embedding) == dim


def test_same_input_embeds_identically(client):
    payload = {"modality": "text", "payload": "夜の街並み、雨上がりのネオン"}
    first = np.array(client.post("/v1/embed", json=payload).json()["embedding"])
    second = np.array(client.post("/v1/embed", json=payload).json()["embedding"])
    assert np.max(np.abs(first - second)) <= 1e-6


def test_clip_backend_if_weights_available(monkeypatch):
    pytest.importorskip("sentence_transformers")
    monkeypatch.setenv("HF_HUB_OFFLINE", "1")
    from embed_service.embedders import ClipEmbedder

    try:
        embedder = ClipEmbedder()
    except Exception as exc:
        pytest.skip(f"clip weights unavailable offline: {exc}")

    first = np.array(embedder.embed_text("a quiet harbor at dawn"))
    second = np.array(embedder.embed_text("a quiet harbor at dawn"))
    assert embedder.dim == len(first)
    assert np.max(np.abs(first - second)) <= 1e-6
