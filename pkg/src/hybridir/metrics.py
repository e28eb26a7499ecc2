"""IR evaluation metrics and benchmark-style aggregation.

Conventions (trec_eval style):

* gain is the integer grade, discount is ``log2(rank + 1)``;
* a document is relevant when its grade is > 0;
* queries without a relevant judgment score 0 for NDCG, MRR and Accuracy@1
  and are left out of the Recall mean.

Rankings are sequences of doc ids, or of ``(doc_id, score)`` pairs, already
in rank order.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .corpus import QrelSet
from .runs import RetrievalRun

DEFAULT_CUTOFFS = {"ndcg": 10, "mrr": 10, "recall": 100, "accuracy": 1}


def _ids(ranking) -> list[str]:
    return [r[0] if isinstance(r, tuple) else r for r in ranking]


def dcg(grades: Iterable[float]) -> float:
    return sum(g / math.log2(i + 2) for i, g in enumerate(grades))


def ndcg_at_k(ranking: Sequence, judgments: Mapping[str, int], k: int) -> float:
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    ideal = dcg(sorted((g for g in judgments.values() if g > 0), reverse=True)[:k])
    if ideal == 0:
        return 0.0
    return dcg(judgments.get(d, 0) for d in _ids(ranking)[:k]) / ideal


def mrr_at_k(ranking: Sequence, judgments: Mapping[str, int], k: int) -> float:
    for i, d in enumerate(_ids(ranking)[:k]):
        if judgments.get(d, 0) > 0:
            return 1.0 / (i + 1)
    return 0.0


def recall_at_k(ranking: Sequence, judgments: Mapping[str, int], k: int) -> float | None:
    """Fraction of relevant docs found in the top k; ``None`` when the query has none."""
    relevant = {d for d, g in judgments.items() if g > 0}
    if not relevant:
        return None
    return len(relevant.intersection(_ids(ranking)[:k])) / len(relevant)


def accuracy_at_1(ranking: Sequence, judgments: Mapping[str, int]) -> float:
    ids = _ids(ranking)
    return 1.0 if ids and judgments.get(ids[0], 0) > 0 else 0.0


def metric_names(cutoffs: Mapping[str, int]) -> dict[str, str]:
    """Map metric kind to its display name, e.g. ``ndcg -> NDCG@10``."""
    return {
        "ndcg": f"NDCG@{cutoffs['ndcg']}",
        "mrr": f"MRR@{cutoffs['mrr']}",
        "recall": f"Recall@{cutoffs['recall']}",
        "accuracy": "Accuracy@1",
    }


@dataclass
class MetricReport:
    """Per-query values and their dataset means for one (retriever, dataset) pair."""

    per_query: dict[str, dict[str, float]] = field(default_factory=dict)
    means: dict[str, float] = field(default_factory=dict)
    cutoffs: dict[str, int] = field(default_factory=lambda: dict(DEFAULT_CUTOFFS))

    def to_json(self) -> str:
        payload = {"cutoffs": self.cutoffs, "means": self.means, "per_query": self.per_query}
        return json.dumps(payload, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "MetricReport":
        payload = json.loads(text)
        return cls(per_query=payload["per_query"], means=payload["means"], cutoffs=payload["cutoffs"])


def evaluate_run(run: RetrievalRun | Mapping[str, Sequence], qrels: QrelSet,
                 cutoffs: Mapping[str, int] | None = None) -> MetricReport:
    """Evaluate every query that has judgments in ``qrels``.

    Queries missing from the run are scored as empty rankings.
    """
    cutoffs = {**DEFAULT_CUTOFFS, **(cutoffs or {})}
    names = metric_names(cutoffs)
    per_query: dict[str, dict[str, float]] = {}
    sums = {name: 0.0 for name in names.values()}
    recall_n = 0
    for qid in qrels:
        judged = qrels[qid]
        ranking = run.get(qid) or []
        values = {
            names["ndcg"]: ndcg_at_k(ranking, judged, cutoffs["ndcg"]),
            names["mrr"]: mrr_at_k(ranking, judged, cutoffs["mrr"]),
            names["accuracy"]: accuracy_at_1(ranking, judged),
        }
        rec = recall_at_k(ranking, judged, cutoffs["recall"])
        if rec is not None:
            values[names["recall"]] = rec
            recall_n += 1
        per_query[qid] = values
        for name, v in values.items():
            sums[name] += v
    n = len(per_query)
    means = {}
    for kind, name in names.items():
        denom = recall_n if kind == "recall" else n
        means[name] = sums[name] / denom if denom else 0.0
    return MetricReport(per_query=per_query, means=means, cutoffs=dict(cutoffs))


def aggregate_groups(dataset_scores: Mapping[str, float], grouping: Mapping[str, Sequence[str]],
                     exclude: Iterable[str] = ()) -> dict[str, float]:
    """Unweighted mean per group plus an ``"overall"`` mean over all datasets.

    Every dataset in ``dataset_scores`` must belong to exactly one group.
    Excluded datasets are dropped before averaging; a group left empty is
    omitted from the result.
    """
    owner: dict[str, str] = {}
    for group, members in grouping.items():
        for d in members:
            if d in owner:
                raise ValueError(f"dataset {d!r} assigned to both {owner[d]!r} and {group!r}")
            owner[d] = group
    for d in dataset_scores:
        if d not in owner:
            raise ValueError(f"dataset {d!r} is not assigned to any group")
    excluded = set(exclude)
    table: dict[str, float] = {}
    kept = []
    for group, members in grouping.items():
        vals = [dataset_scores[d] for d in members if d in dataset_scores and d not in excluded]
        if vals:
            table[group] = math.fsum(vals) / len(vals)
            kept.extend(vals)
    table["overall"] = math.fsum(kept) / len(kept) if kept else 0.0
    return table


def format_group_table(rows: Mapping[str, Mapping[str, float]], grouping: Mapping[str, Sequence[str]],
                       scale: float = 100.0, digits: int = 2) -> str:
    """Text table with models as rows and "Average" plus one column per group."""
    groups = list(grouping)
    n_total = sum(len(v) for v in grouping.values())
    headers = ["Model", f"Average ({n_total} tasks)"] + [f"{g} ({len(grouping[g])} tasks)" for g in groups]
    body = []
    for model, table in rows.items():
        cells = [model]
        for key in ["overall"] + groups:
            cells.append(f"{table[key] * scale:.{digits}f}" if key in table else "*")
        body.append(cells)
    widths = [max(len(r[i]) for r in [headers] + body) for i in range(len(headers))]
    fmt = lambda cells: " | ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(cells, widths)))
    lines = [fmt(headers), "-+-".join("-" * w for w in widths)]
    lines.extend(fmt(r) for r in body)
    return "\n".join(lines) + "\n"
