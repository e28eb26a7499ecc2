"""Candidate pooling and per-index feature quadruples.

For every member index the rescorer sees four numbers per candidate:
``(score, list_max, list_min, present)``, where max and min are taken over
that index's top ``depth`` list. A candidate missing from an index's list
gets ``(0, 0, 0, 0)`` for that index.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from ..runs import Ranking

FEATURES_PER_INDEX = 4
DEFAULT_DEPTH = 100


def build_candidate_pool(runs: Sequence[Ranking], per_index_depth: int = DEFAULT_DEPTH) -> list[str]:
    """Union of the top ``per_index_depth`` docs of each run, in ascending id order."""
    if not runs:
        raise ValueError("need at least one index run")
    pool: set[str] = set()
    for ranking in runs:
        pool.update(doc_id for doc_id, _ in ranking[:per_index_depth])
    return sorted(pool)


def extract_features(runs: Sequence[Ranking], candidate: str, per_index_depth: int = DEFAULT_DEPTH) -> np.ndarray:
    out = np.zeros(FEATURES_PER_INDEX * len(runs))
    for i, ranking in enumerate(runs):
        top = ranking[:per_index_depth]
        for doc_id, score in top:
            if doc_id == candidate:
                scores = [s for _, s in top]
                out[4 * i:4 * i + 4] = (score, max(scores), min(scores), 1.0)
                break
    return out


def query_features(runs: Sequence[Ranking], per_index_depth: int = DEFAULT_DEPTH) -> tuple[list[str], np.ndarray]:
    """Pool and feature matrix for one query: row ``r`` describes ``pool[r]``."""
    pool = build_candidate_pool(runs, per_index_depth)
    row = {doc_id: r for r, doc_id in enumerate(pool)}
    x = np.zeros((len(pool), FEATURES_PER_INDEX * len(runs)))
    for i, ranking in enumerate(runs):
        top = ranking[:per_index_depth]
        if not top:
            continue
        scores = [s for _, s in top]
        hi, lo = max(scores), min(scores)
        rows = [row[d] for d, _ in top]
        c = FEATURES_PER_INDEX * i
        x[rows, c] = scores
        x[rows, c + 1] = hi
        x[rows, c + 2] = lo
        x[rows, c + 3] = 1.0
    return pool, x
