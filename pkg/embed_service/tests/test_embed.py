"""Embedding route behavior and error statuses."""

import numpy as np

from conftest import make_png


def test_unknown_modality_is_400(client):
    response = client.post("/v1/embed", json={"modality": "audio", "payload": "x"})
    assert response.status_code == 400


def test_unknown_artifact_ref_is_404(client):
    response = client.post("/v1/embed", json={"modality": "image", "payload": "art-missing"})
    assert response.status_code == 404


def test_undecodable_image_is_422(client, app):
    ref, _ = app.state.cache.put(b"definitely not an image")
    response = client.post("/v1/embed", json={"modality": "image", "payload": ref})
    assert response.status_code == 422


def test_text_and_its_rendering_embed_differently(client, app):
    text = "a red square"
    ref, _ = app.state.cache.put(make_png(color=(255, 0, 0)))
    text_vec = np.array(
        client.post("/v1/embed", json={"modality": "text", "payload": text}).json()["embedding"]
    )
    image_vec = np.array(
        client.post("/v1/embed", json={"modality": "image", "payload": ref}).json()["embedding"]
    )
    assert text_vec.shape == image_vec.shape
    assert not np.allclose(text_vec, image_vec)


def test_identical_images_embed_identically(client, app):
    ref_a, _ = app.state.cache.put(make_png(color=(1, 2, 3)))
    first = client.post("/v1/embed", json={"modality": "image", "payload": ref_a}).json()
    second = client.post("/v1/embed", json={"modality": "image", "payload": ref_a}).json()
    assert first == second


def test_malformed_request_body_is_422(client):
    response = client.post("/v1/embed", json={"modality": "text"})
    assert response.status_code == 422
