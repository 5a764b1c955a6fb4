"""FastAPI application implementing the provider wire protocol.

Routes: GET /v1/meta, POST /v1/embed, POST /v1/mutate, POST /v1/generate,
GET /v1/artifacts/{ref}. Mutation and generation proxy to configured
upstreams; embeddings run locally. /v1/rate answers 501 since this
service hosts no rater. When the shared bearer token is set in the
environment, every route requires it.
"""

from __future__ import annotations

import io
import os

from fastapi import Depends, FastAPI, HTTPException, Request, Response
from PIL import Image

from .cache import ArtifactCache
from .config import TOKEN_ENV, ServiceConfig
from .embedders import build_embedder
from .upstream import ChatUpstream, ImageUpstream, UpstreamError
from .wire import (
    EmbedRequest,
    EmbedResponse,
    GenerateRequest,
    GenerateResponse,
    MetaResponse,
    MutateRequest,
    MutateResponse,
    RateRequest,
)

_READ_ENV = object()


def _decode_image(data: bytes) -> Image.Image:
    try:
        image = Image.open(io.BytesIO(data))
        image.load()
        return image.convert("RGB")
    except Exception:
        raise HTTPException(status_code=422, detail="undecodable image") from None


def create_app(
    config: ServiceConfig,
    *,
    embedder=None,
    chat: ChatUpstream | None = None,
    image: ImageUpstream | None = None,
    cache: ArtifactCache | None = None,
    token=_READ_ENV,
) -> FastAPI:
    if embedder is None:
        embedder = build_embedder(
            config.embedder.backend, model=config.embedder.model, dim=config.embedder.dim
        )
    if cache is None:
        cache = ArtifactCache(config.cache.directory, config.cache.max_bytes)
    if chat is None and config.chat is not None:
        chat = ChatUpstream(config.chat)
    if image is None and config.image is not None:
        image = ImageUpstream(config.image)
    required_token = os.environ.get(TOKEN_ENV) if token is _READ_ENV else token

    def check_token(request: Request) -> None:
        if required_token and request.headers.get("authorization") != f"Bearer {required_token}":
            raise HTTPException(status_code=401, detail="missing or invalid bearer token")

    app = FastAPI(title="embed-service", dependencies=[Depends(check_token)])
    app.state.cache = cache
    app.state.embedder = embedder

    @app.exception_handler(UpstreamError)
    async def on_upstream_error(request: Request, exc: UpstreamError):
        from fastapi.responses import JSONResponse

        return JSONResponse(status_code=exc.status_code, content={"detail": exc.detail})

    @app.get("/v1/meta", response_model=MetaResponse)
    def meta() -> MetaResponse:
        return MetaResponse(
            embedding_dim=embedder.dim,
            models={
                "embed": embedder.model_id,
                "mutate": (config.chat.model if config.chat else "") or "disabled",
                "generate": (config.image.model if config.image else "") or "disabled",
            },
        )

    @app.post("/v1/embed", response_model=EmbedResponse)
    def embed(request: EmbedRequest) -> EmbedResponse:
        if request.modality == "text":
            return EmbedResponse(embedding=embedder.embed_text(request.payload))
        if request.modality == "image":
            data = cache.get(request.payload)
            if data is None:
                raise HTTPException(status_code=404, detail=f"unknown artifact {request.payload!r}")
            return EmbedResponse(embedding=embedder.embed_image(_decode_image(data)))
        raise HTTPException(status_code=400, detail=f"unknown modality {request.modality!r}")

    @app.post("/v1/mutate", response_model=MutateResponse, response_model_exclude_none=True)
    def mutate(request: MutateRequest) -> MutateResponse:
        if chat is None:
            raise HTTPException(status_code=501, detail="no chat upstream configured")
        text, usage = chat.complete(
            request.instruction, request.model, request.temperature, request.max_output_tokens
        )
        return MutateResponse.model_validate({"text": text, "usage": usage})

    @app.post("/v1/generate", response_model=GenerateResponse)
    def generate(request: GenerateRequest) -> GenerateResponse:
        if image is None:
            raise HTTPException(status_code=501, detail="no image upstream configured")
        data = image.generate(request.prompt, request.model, request.size, request.seed)
        ref, digest = cache.put(data)
        return GenerateResponse(artifact_ref=ref, digest=digest)

    @app.get("/v1/artifacts/{ref}")
    def artifact(ref: str) -> Response:
        data = cache.get(ref)
        if data is None:
            raise HTTPException(status_code=404, detail=f"unknown artifact {ref!r}")
        return Response(content=data, media_type="application/octet-stream")

    @app.post("/v1/rate")
    def rate(request: RateRequest):
        raise HTTPException(status_code=501, detail="rating is not implemented by this service")

    return app
