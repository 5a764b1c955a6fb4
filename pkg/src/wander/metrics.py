"""Diversity and relevance measurement over embedding sets.

Vendi score is the exponential of the Shannon entropy of the eigenvalues
of the normalized cosine-similarity kernel K/n: the effective number of
distinct samples, in [1, n]. Pairwise distance and relevance are plain
cosine statistics; token totals aggregate mutator usage for cost
reporting.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import _distance_matrix
from .errors import DomainError, NumericalError, StructuralError

#: Eigenvalues below this count as exact zeros.
EIGENVALUE_FLOOR = 1e-12
#: Most-negative eigenvalue tolerated as symmetric-PSD float drift.
EIGENVALUE_DRIFT = -1e-9


def _stack(embeddings) -> np.ndarray:
    rows = [np.asarray(e, dtype=np.float64).reshape(-1) for e in embeddings]
    if len(rows) < 2:
        raise DomainError("need at least 2 embeddings")
    dim = rows[0].shape[0]
    if any(r.shape[0] != dim for r in rows):
        raise StructuralError("embeddings must share one dimension")
    return np.stack(rows)


def similarity_matrix(embeddings) -> np.ndarray:
    """Pairwise cosine similarities, symmetric with a unit diagonal.

    Each unordered pair is computed once and mirrored, so K equals its
    transpose exactly.
    """
    dist = _distance_matrix(_stack(embeddings))
    n = dist.shape[0]
    matrix = np.ones((n, n), dtype=np.float64)
    for i in range(n):
        for j in range(i + 1, n):
            sim = 1.0 - dist[i, j]
            matrix[i, j] = sim
            matrix[j, i] = sim
    return matrix


def vendi_score(embeddings) -> float:
    """exp of the spectral entropy of K/n.

    Eigenvalues under the floor clamp to zero; negatives beyond the drift
    tolerance indicate a broken kernel and raise.
    """
    kernel = similarity_matrix(embeddings)
    n = kernel.shape[0]
    try:
        eigenvalues = np.linalg.eigvalsh(kernel / n)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"kernel eigen-decomposition failed: {exc}") from None
    worst = float(eigenvalues.min())
    if worst < EIGENVALUE_DRIFT:
        raise NumericalError(
            f"kernel eigenvalue {worst} below PSD drift tolerance {EIGENVALUE_DRIFT}"
        )
    entropy = 0.0
    for value in eigenvalues:
        value = float(value)
        if value < EIGENVALUE_FLOOR:
            continue  # 0 log 0 = 0
        entropy -= value * math.log(value)
    return float(math.exp(entropy))


def mean_pairwise_distance(embeddings) -> float:
    """Mean cosine distance over all unordered pairs."""
    dist = _distance_matrix(_stack(embeddings))
    n = dist.shape[0]
    upper = dist[np.triu_indices(n, k=1)]
    return float(upper.mean())


def relevance(initial_prompt: str, pool_prompts, embedder) -> float:
    """Mean cosine similarity between the starting prompt's text embedding
    and each evolved prompt's; high values mean the pool stayed on topic."""
    prompts = list(pool_prompts)
    if not prompts:
        raise DomainError("relevance needs at least one pool prompt")
    anchor = np.asarray(embedder.embed_text(initial_prompt), dtype=np.float64)
    anchor_unit = anchor / np.linalg.norm(anchor)
    total = 0.0
    for prompt in prompts:
        vec = np.asarray(embedder.embed_text(prompt), dtype=np.float64)
        unit = vec / np.linalg.norm(vec)
        diff = unit - anchor_unit
        total += 1.0 - min(0.5 * float(diff @ diff), 2.0)
    return total / len(prompts)


@dataclass(frozen=True)
class TokenTotals:
    total: int
    by_kind: dict
    estimated_fraction: float


def token_totals(events) -> TokenTotals:
    """Aggregate mutator token usage over events carrying a ``usage``.

    ``estimated_fraction`` is the share of counted tokens whose usage was
    estimated rather than reported by the backend.
    """
    total = 0
    estimated = 0
    by_kind: dict = {}
    for event in events:
        usage = getattr(event, "usage", None)
        if usage is None:
            continue
        count = usage.total
        total += count
        if usage.estimated:
            estimated += count
        kind = getattr(event, "kind", "unknown")
        by_kind[kind] = by_kind.get(kind, 0) + count
    fraction = estimated / total if total else 0.0
    return TokenTotals(total=total, by_kind=by_kind, estimated_fraction=fraction)


def matrix_to_csv(matrix: np.ndarray) -> str:
    """Render a similarity matrix as repr-precision CSV text."""
    lines = [",".join(repr(float(v)) for v in row) for row in np.asarray(matrix)]
    return "\n".join(lines) + "\n"
