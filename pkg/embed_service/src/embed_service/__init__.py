"""HTTP provider service: CLIP embeddings with chat/image upstream proxying."""

__version__ = "0.1.0"
