"""Seeded synthetic runs for fusion experiments and throughput measurement."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import QrelSet
from .runs import RetrievalRun


@dataclass
class ComplementaryRuns:
    runs: tuple[RetrievalRun, RetrievalRun]
    qrels: QrelSet
    train_ids: list[str]
    test_ids: list[str]
    good_index: dict[str, int]  # query id -> index that ranks it perfectly


def complementary_runs(n_queries: int = 200, docs_per_query: int = 300, n_relevant: int = 5,
                       depth: int = 100, n_train: int = 100, score_scales=(20.0, 1.0),
                       seed: int = 0) -> ComplementaryRuns:
    """Two indexes, each perfect on a disjoint half of the queries and random on the rest.

    Each index draws i.i.d. uniform scores for all docs of a query. On its
    good queries the largest draws go to the relevant docs; otherwise the
    draws are assigned at random. Score distributions are therefore the same
    in both regimes, and the two indexes report on different scales. Each
    returns its top ``depth``. Queries are split at random into ``n_train``
    training and the rest held out, and the good-index assignment is
    balanced within both parts.
    """
    rng = np.random.default_rng(seed)
    qids = [f"q{i:04d}" for i in range(n_queries)]
    order = rng.permutation(n_queries)
    train = sorted(qids[i] for i in order[:n_train])
    test = sorted(qids[i] for i in order[n_train:])
    good = {}
    for part in (train, test):
        flags = np.arange(len(part)) % 2
        rng.shuffle(flags)
        good.update({q: int(f) for q, f in zip(part, flags)})

    rankings = ({}, {})
    judgments = {}
    for qid in qids:
        docs = [f"{qid}-d{j:04d}" for j in range(docs_per_query)]
        rel = set(rng.choice(docs_per_query, size=n_relevant, replace=False).tolist())
        judgments[qid] = {docs[j]: 1 for j in sorted(rel)}
        is_rel = np.array([j in rel for j in range(docs_per_query)])
        for idx in (0, 1):
            draws = rng.uniform(0.0, 1.0, docs_per_query)
            if good[qid] == idx:
                draws = np.sort(draws)[::-1]
                slots = np.concatenate([rng.permutation(np.flatnonzero(is_rel)),
                                        rng.permutation(np.flatnonzero(~is_rel))])
                raw = np.empty(docs_per_query)
                raw[slots] = draws
            else:
                raw = draws
            scores = raw * score_scales[idx]
            top = np.lexsort((np.arange(docs_per_query), -scores))[:depth]
            rankings[idx][qid] = [(docs[j], float(scores[j])) for j in top]
    runs = (RetrievalRun(rankings[0], name="index_a"), RetrievalRun(rankings[1], name="index_b"))
    return ComplementaryRuns(runs, QrelSet(judgments), train, test, good)


def throughput_runs(n_queries: int, candidates_per_query: int = 200, n_indexes: int = 2,
                    seed: int = 0) -> list[RetrievalRun]:
    """Runs whose per-query pools have exactly ``candidates_per_query`` docs (disjoint per index)."""
    rng = np.random.default_rng(seed)
    per_index = max(1, candidates_per_query // n_indexes)
    out = []
    for idx in range(n_indexes):
        rankings = {}
        for q in range(n_queries):
            scores = np.sort(rng.uniform(0.0, 1.0, per_index))[::-1]
            rankings[f"q{q}"] = [(f"i{idx}-d{j:05d}", float(s)) for j, s in enumerate(scores)]
        out.append(RetrievalRun(rankings, name=f"index{idx}"))
    return out
