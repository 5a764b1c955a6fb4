"""Embedding backends.

Both backends receive decoded RGB images; payload decoding (and the 422
on failure) happens in the route layer so the contract is uniform.
"""

from __future__ import annotations

import hashlib

import numpy as np
from PIL import Image


class HashEmbedder:
    """Deterministic stand-in backend for development and tests.

    Each payload maps to a unit vector drawn from an rng seeded by the
    payload digest. Text and image payloads hash in separate domains, so
    a prompt and its rendering never collide.
    """

    def __init__(self, dim: int = 512):
        self.dim = dim
        self.model_id = f"hash-{dim}"

    def _vector(self, domain: bytes, payload: bytes) -> list[float]:
        digest = hashlib.sha256(domain + b"\x00" + payload).digest()
        rng = np.random.default_rng(int.from_bytes(digest[:8], "big"))
        v = rng.standard_normal(self.dim)
        return (v / np.linalg.norm(v)).tolist()

    def embed_text(self, text: str) -> list[float]:
        return self._vector(b"text", text.encode("utf-8"))

    def embed_image(self, image: Image.Image) -> list[float]:
        canonical = image.tobytes() + f"{image.width}x{image.height}".encode()
        return self._vector(b"image", canonical)


class ClipEmbedder:
    """CLIP text/image embeddings via sentence-transformers.

    Loaded lazily so the service can be configured for it without the
    weights present. Inference runs in eval mode with no grad, so
    identical payloads embed identically.
    """

    def __init__(self, model_id: str = "clip-ViT-B-32"):
        from sentence_transformers import SentenceTransformer

        self.model_id = model_id
        self._model = SentenceTransformer(model_id)
        self._model.eval()
        dim = self._model.get_sentence_embedding_dimension()
        if not dim:
            dim = int(self._model.encode("probe", convert_to_numpy=True).shape[0])
        self.dim = int(dim)

    def _encode(self, payload) -> list[float]:
        vector = self._model.encode(payload, convert_to_numpy=True)
        return np.asarray(vector, dtype=np.float64).tolist()

    def embed_text(self, text: str) -> list[float]:
        return self._encode(text)

    def embed_image(self, image: Image.Image) -> list[float]:
        return self._encode(image)


def build_embedder(backend: str, *, model: str, dim: int):
    if backend == "hash":
        return HashEmbedder(dim=dim)
    if backend == "clip":
        return ClipEmbedder(model_id=model)
    raise ValueError(f"unknown embedder backend {backend!r}")
