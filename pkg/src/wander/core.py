"""Embedding geometry, novelty scoring, and the pool admission rule.

A pool holds at most ``capacity`` individuals; its quality is the lowest
member novelty, where novelty is the mean cosine distance to the k
nearest neighbours in the pool. ``try_insert`` admits a candidate only
while the pool is filling or when the candidate is strictly more novel
than the current weakest member, which it then evicts.

Embeddings are stored as float32 (matching the on-disk format, so a
reloaded run scores identically) and all scoring runs in float64.
Determinism rules: neighbour-rank ties and min-score ties break toward
the earlier-inserted member.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, StructuralError

#: Default neighbour count for novelty scoring; clamped to pool size - 1.
DEFAULT_K = 3


def as_embedding(values) -> np.ndarray:
    """Validate and normalize raw values into a float32 embedding vector.

    Rejects empty, non-finite and zero-norm inputs; a zero vector at
    ingestion signals a broken embedder rather than a legitimate point.
    """
    vec = np.asarray(values, dtype=np.float32).reshape(-1)
    if vec.size == 0:
        raise StructuralError("embedding must have dimension >= 1")
    if not np.all(np.isfinite(vec)):
        raise DomainError("embedding contains non-finite entries")
    if not np.any(vec):
        raise DomainError("zero-norm embedding rejected at ingestion")
    return vec


@dataclass(frozen=True)
class Lineage:
    """Parent ids plus the emitter used, absent for generation 0.

    A crossover child has exactly two parents and no emitter. A mutation
    child has one parent; its emitter id is absent when the run uses the
    no-emitter strategy.
    """

    parents: tuple[str, ...]
    emitter_id: int | None = None

    def __post_init__(self):
        if len(self.parents) not in (1, 2):
            raise StructuralError("lineage must have 1 or 2 parents")
        if len(self.parents) == 2 and self.emitter_id is not None:
            raise StructuralError("crossover lineage cannot carry an emitter")

    @property
    def is_crossover(self) -> bool:
        return len(self.parents) == 2


@dataclass(eq=False)
class Individual:
    """A prompt, the artifact generated from it, and that artifact's embedding."""

    id: str
    prompt: str
    artifact_ref: str
    embedding: np.ndarray
    lineage: Lineage | None = None
    born_generation: int = 0

    def __post_init__(self):
        self.embedding = as_embedding(self.embedding)
        if self.born_generation < 0:
            raise StructuralError("born_generation must be >= 0")
        if self.born_generation == 0 and self.lineage is not None:
            raise StructuralError("generation-0 individuals have no lineage")


@dataclass
class Pool:
    """Fixed-capacity population; member order is insertion order."""

    capacity: int
    k: int = DEFAULT_K
    members: list[Individual] = field(default_factory=list)

    def __post_init__(self):
        if self.capacity < 1:
            raise StructuralError("pool capacity must be >= 1")
        if self.k < 1:
            raise StructuralError("pool k must be >= 1")
        for member in self.members:
            self._check_dim(member.embedding)

    def __len__(self) -> int:
        return len(self.members)

    @property
    def dim(self) -> int | None:
        return int(self.members[0].embedding.shape[0]) if self.members else None

    def _check_dim(self, embedding: np.ndarray) -> None:
        if self.members and embedding.shape[0] != self.members[0].embedding.shape[0]:
            raise StructuralError(
                f"embedding dim {embedding.shape[0]} does not match pool dim {self.dim}"
            )

    def member_ids(self) -> list[str]:
        return [m.id for m in self.members]

    def embedding_matrix(self) -> np.ndarray:
        """Member embeddings stacked in insertion order, float64."""
        return np.stack([m.embedding for m in self.members]).astype(np.float64)


@dataclass(frozen=True)
class NoveltyReport:
    """Per-member novelty scores plus the weakest member."""

    per_member: tuple[tuple[str, float], ...]
    min_index: int
    min_score: float


# try_insert outcome kinds
FILLED = "filled"
REPLACED = "replaced"
REJECTED = "rejected"


@dataclass(frozen=True)
class InsertOutcome:
    """Result of one admission attempt.

    ``candidate_score`` and ``min_score`` are populated when the pool was
    full and scoring happened; a fill-phase admission carries neither.
    """

    kind: str
    candidate_score: float | None = None
    min_score: float | None = None
    evicted_id: str | None = None

    @property
    def accepted(self) -> bool:
        return self.kind in (FILLED, REPLACED)


def cosine_distance(a: np.ndarray, b: np.ndarray) -> float:
    """1 - cos(a, b); symmetric, in [0, 2]."""
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if a.shape[0] != b.shape[0]:
        raise StructuralError(f"dimension mismatch: {a.shape[0]} vs {b.shape[0]}")
    norm_a = float(np.linalg.norm(a))
    norm_b = float(np.linalg.norm(b))
    if norm_a == 0.0 or norm_b == 0.0:
        raise DomainError("cosine distance undefined for zero-norm vector")
    # 1 - cos equals ||u_a - u_b||^2 / 2 on unit vectors; the difference
    # form is exactly 0 for identical inputs and avoids cancellation
    diff = a / norm_a - b / norm_b
    return min(0.5 * float(np.dot(diff, diff)), 2.0)


def _unit_rows(mat: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(mat, axis=1)
    if np.any(norms == 0.0):
        raise DomainError("cosine distance undefined for zero-norm vector")
    return mat / norms[:, None]


def _mean_of_smallest(distances: np.ndarray, k: int) -> float:
    k = min(k, distances.shape[0])
    if k == distances.shape[0]:
        smallest = distances
    else:
        smallest = np.partition(distances, k - 1)[:k]
    return float(np.sum(smallest) / k)


def novelty_score(candidate: np.ndarray, pool: Pool, exclude_id: str | None = None) -> float:
    """Mean cosine distance to the k nearest pool members.

    k is clamped to the pool size after exclusion. Neighbour-rank ties
    break toward earlier-inserted members; the mean is unaffected by tie
    order, so only the distance values enter the score.
    """
    candidate = np.asarray(candidate, dtype=np.float64).reshape(-1)
    if pool.members and candidate.shape[0] != pool.members[0].embedding.shape[0]:
        raise StructuralError(
            f"candidate dim {candidate.shape[0]} does not match pool dim {pool.dim}"
        )
    keep = [i for i, m in enumerate(pool.members) if m.id != exclude_id]
    if not keep:
        raise DomainError("novelty undefined against an empty pool")
    norm_c = float(np.linalg.norm(candidate))
    if norm_c == 0.0:
        raise DomainError("cosine distance undefined for zero-norm vector")
    units = _unit_rows(pool.embedding_matrix()[keep])
    diff = units - candidate / norm_c
    distances = np.minimum(0.5 * np.einsum("ij,ij->i", diff, diff), 2.0)
    return _mean_of_smallest(distances, pool.k)


def _self_excluded_scores(dist: np.ndarray, k: int) -> list[float]:
    """Per-row novelty from a square pairwise-distance matrix."""
    n = dist.shape[0]
    scores = []
    for i in range(n):
        row = np.delete(dist[i], i)
        scores.append(_mean_of_smallest(row, k))
    return scores


def _distance_matrix(embeddings: np.ndarray) -> np.ndarray:
    units = _unit_rows(embeddings)
    diff = units[:, None, :] - units[None, :, :]
    return np.minimum(0.5 * np.einsum("ijk,ijk->ij", diff, diff), 2.0)


def score_pool(pool: Pool) -> NoveltyReport:
    """Score every member against the rest of the pool; locate the weakest.

    Each member is scored with itself excluded. The min index breaks ties
    toward the earliest-inserted member.
    """
    if len(pool) < 2:
        raise DomainError("scoring a pool requires at least 2 members")
    scores = _self_excluded_scores(_distance_matrix(pool.embedding_matrix()), pool.k)
    min_index = min(range(len(scores)), key=lambda i: (scores[i], i))
    return NoveltyReport(
        per_member=tuple((m.id, s) for m, s in zip(pool.members, scores)),
        min_index=min_index,
        min_score=scores[min_index],
    )


def try_insert(pool: Pool, candidate: Individual, *, leave_one_in: bool = False) -> InsertOutcome:
    """Admit a candidate: fill below capacity, else replace the weakest
    member iff the candidate is strictly more novel.

    Default scoring rates the candidate against the pool as-is while
    members are rated with self-exclusion. ``leave_one_in`` instead scores
    everyone inside the hypothetical pool with the candidate included.
    Strict inequality prevents churn among equal-novelty duplicates.

    Both candidate and member scores derive from one joint distance
    matrix, so identical embeddings always tie exactly bit-for-bit.
    """
    pool._check_dim(candidate.embedding)
    if len(pool) < pool.capacity:
        pool.members.append(candidate)
        return InsertOutcome(kind=FILLED)

    n = len(pool)
    joint = np.vstack([pool.embedding_matrix(), candidate.embedding.astype(np.float64)])
    dist = _distance_matrix(joint)

    if leave_one_in:
        all_scores = _self_excluded_scores(dist, pool.k)
        candidate_score = all_scores[n]
        member_scores = all_scores[:n]
    else:
        candidate_score = _mean_of_smallest(dist[n, :n], pool.k)
        member_scores = _self_excluded_scores(dist[:n, :n], pool.k)

    min_index = min(range(n), key=lambda i: (member_scores[i], i))
    min_score = member_scores[min_index]

    if candidate_score > min_score:
        evicted = pool.members.pop(min_index)
        pool.members.append(candidate)
        return InsertOutcome(
            kind=REPLACED,
            candidate_score=candidate_score,
            min_score=min_score,
            evicted_id=evicted.id,
        )
    return InsertOutcome(kind=REJECTED, candidate_score=candidate_score, min_score=min_score)
