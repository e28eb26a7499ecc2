"""Learned fusion of several retrieval runs."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from ..corpus import QrelSet
from ..errors import ValidationError
from ..runs import RetrievalRun, top_k
from .features import DEFAULT_DEPTH, FEATURES_PER_INDEX, query_features
from .lambdamart import LtrParams, QueryGroup, TreeEnsemble, train_lambdamart


def _query_order(runs: Sequence[RetrievalRun]) -> list[str]:
    seen = {}
    for run in runs:
        for qid in run:
            seen.setdefault(qid, None)
    return list(seen)


def build_training_groups(runs: Sequence[RetrievalRun], qrels: QrelSet,
                          per_index_depth: int = DEFAULT_DEPTH) -> list[QueryGroup]:
    """One group per judged query that any run retrieved; unjudged pool docs get grade 0."""
    groups = []
    for qid in _query_order(runs):
        if qid not in qrels:
            continue
        pool, x = query_features([run.get(qid) for run in runs], per_index_depth)
        if not pool:
            continue
        judged = qrels[qid]
        labels = np.array([judged.get(d, 0) for d in pool], dtype=np.int64)
        groups.append(QueryGroup(features=x, labels=labels, query_id=qid, doc_ids=pool))
    return groups


def train_fusion(runs: Sequence[RetrievalRun], qrels: QrelSet, params: LtrParams | None = None,
                 seed: int = 0, per_index_depth: int = DEFAULT_DEPTH, **kwargs) -> TreeEnsemble:
    groups = build_training_groups(runs, qrels, per_index_depth)
    names = [run.name for run in runs]
    return train_lambdamart(groups, params, seed=seed, index_names=names, **kwargs)


def check_members(runs: Sequence[RetrievalRun], ensemble: TreeEnsemble, check_names: bool = True) -> None:
    if FEATURES_PER_INDEX * len(runs) != ensemble.feature_count:
        raise ValidationError(f"model expects {ensemble.feature_count // FEATURES_PER_INDEX} index runs, "
                              f"got {len(runs)}")
    if check_names and ensemble.index_names:
        names = tuple(run.name for run in runs)
        if names != ensemble.index_names:
            raise ValidationError(f"run order {names} does not match the model's index order "
                                  f"{ensemble.index_names}")


def fuse_query(rankings, ensemble: TreeEnsemble, k: int, per_index_depth: int = DEFAULT_DEPTH):
    pool, x = query_features(rankings, per_index_depth)
    if not pool:
        return []
    scores = ensemble.predict(x)
    # the pool is already in ascending id order
    return top_k(pool, scores, k, np.arange(len(pool)))


def fuse(runs: Sequence[RetrievalRun], ensemble: TreeEnsemble, k: int,
         per_index_depth: int = DEFAULT_DEPTH, check_names: bool = True, name: str = "hybrid") -> RetrievalRun:
    """Pool, featurize, rescore and cut to top k for every query in any run."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    check_members(runs, ensemble, check_names)
    out = {}
    for qid in _query_order(runs):
        out[qid] = fuse_query([run.get(qid) for run in runs], ensemble, k, per_index_depth)
    return RetrievalRun(out, name=name)
