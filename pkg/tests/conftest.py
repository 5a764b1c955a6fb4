from __future__ import annotations

import itertools

from wander.core import Individual, Lineage, Pool

_counter = itertools.count()


def make_individual(vec, id: str | None = None, generation: int = 0) -> Individual:
    """Individual with an auto id and a placeholder prompt/artifact."""
    if id is None:
        id = f"ind-{next(_counter)}"
    lineage = None if generation == 0 else Lineage(parents=("parent",))
    return Individual(
        id=id,
        prompt=f"prompt {id}",
        artifact_ref=f"ref {id}",
        embedding=vec,
        lineage=lineage,
        born_generation=generation,
    )


def make_pool(vectors, capacity: int | None = None, k: int = 3) -> Pool:
    members = [make_individual(v, id=f"m{i}") for i, v in enumerate(vectors)]
    return Pool(capacity=capacity if capacity is not None else len(members), k=k, members=members)
