"""Ranked retrieval output and TREC run files.

Every ranking in the package uses one canonical order: descending score,
ties broken by ascending doc id (plain string comparison).
"""

from __future__ import annotations

from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

from .errors import ParseError, ValidationError

Ranking = list[tuple[str, float]]


def canonical_sort(pairs: Iterable[tuple[str, float]]) -> Ranking:
    return sorted(((d, float(s)) for d, s in pairs), key=lambda p: (-p[1], p[0]))


def top_k(doc_ids: Sequence[str], scores: np.ndarray, k: int, id_rank: np.ndarray | None = None,
          candidates: np.ndarray | None = None) -> Ranking:
    """Exact top-k of ``scores`` with the canonical tie-break.

    ``id_rank[i]`` is the position of ``doc_ids[i]`` in ascending string
    order; it is computed on the fly when not supplied. ``candidates`` limits
    the selection to the given positions (default: every position).
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if candidates is None:
        candidates = np.arange(len(scores))
    if candidates.size == 0:
        return []
    cand_scores = scores[candidates]
    if candidates.size > k:
        # keep everything tied with the k-th best so the tie-break sees all of them
        kth = np.partition(cand_scores, candidates.size - k)[candidates.size - k]
        keep = cand_scores >= kth
        candidates = candidates[keep]
        cand_scores = cand_scores[keep]
    if id_rank is None:
        order = sorted(range(candidates.size), key=lambda i: (-cand_scores[i], doc_ids[candidates[i]]))
    else:
        order = np.lexsort((id_rank[candidates], -cand_scores))
    return [(doc_ids[candidates[i]], float(cand_scores[i])) for i in order[:k]]


def string_ranks(ids: Sequence[str]) -> np.ndarray:
    """Position of each id in ascending string order."""
    order = sorted(range(len(ids)), key=ids.__getitem__)
    ranks = np.empty(len(ids), dtype=np.int64)
    ranks[order] = np.arange(len(ids))
    return ranks


class RetrievalRun(Mapping[str, Ranking]):
    """Per-query ranked lists of ``(doc_id, score)``.

    Construction validates the carrier invariants: scores non-increasing,
    doc ids unique per query, canonical tie order.
    """

    def __init__(self, rankings: Mapping[str, Iterable[tuple[str, float]]] | None = None,
                 name: str = "run"):
        self.name = name
        self._rankings: dict[str, Ranking] = {}
        for qid, ranking in (rankings or {}).items():
            ranking = [(str(d), float(s)) for d, s in ranking]
            _check_ranking(qid, ranking)
            self._rankings[qid] = ranking

    @classmethod
    def from_scores(cls, scores: Mapping[str, Mapping[str, float]], k: int | None = None,
                    name: str = "run") -> "RetrievalRun":
        """Build from unordered per-query score maps, sorting canonically and truncating to k."""
        out = {}
        for qid, docs in scores.items():
            ranking = canonical_sort(docs.items())
            out[qid] = ranking[:k] if k is not None else ranking
        return cls(out, name=name)

    def __getitem__(self, qid: str) -> Ranking:
        return self._rankings[qid]

    def __iter__(self) -> Iterator[str]:
        return iter(self._rankings)

    def __len__(self) -> int:
        return len(self._rankings)

    def get(self, qid, default=None):
        return self._rankings.get(qid, [] if default is None else default)

    def truncated(self, k: int) -> "RetrievalRun":
        return RetrievalRun({q: r[:k] for q, r in self._rankings.items()}, name=self.name)

    def __eq__(self, other) -> bool:
        if not isinstance(other, RetrievalRun):
            return NotImplemented
        return self._rankings == other._rankings

    def __repr__(self) -> str:
        return f"RetrievalRun(name={self.name!r}, queries={len(self)})"


def _check_ranking(qid: str, ranking: Ranking) -> None:
    seen = set()
    prev = None
    for doc_id, score in ranking:
        if doc_id in seen:
            raise ValidationError(f"query {qid!r}: duplicate doc id {doc_id!r} in ranking")
        seen.add(doc_id)
        if not np.isfinite(score):
            raise ValidationError(f"query {qid!r}: non-finite score for {doc_id!r}")
        if prev is not None:
            pd, ps = prev
            if score > ps or (score == ps and doc_id < pd):
                raise ValidationError(f"query {qid!r}: ranking not in canonical order at {doc_id!r}")
        prev = (doc_id, score)


def write_trec(run: RetrievalRun, path, tag: str | None = None) -> None:
    """Write ``qid Q0 docid rank score tag`` lines; scores keep full float precision."""
    tag = tag or run.name
    if any(c.isspace() for c in tag):
        raise ValueError(f"run tag must not contain whitespace: {tag!r}")
    with open(path, "w", encoding="utf-8") as fh:
        for qid in run:
            for rank, (doc_id, score) in enumerate(run[qid], 1):
                fh.write(f"{qid} Q0 {doc_id} {rank} {score!r} {tag}\n")


def read_trec(path, name: str | None = None) -> RetrievalRun:
    """Read a TREC run. Lines are re-sorted canonically; the file's rank column is ignored.

    The run name defaults to the tag column (or the file stem for empty files).
    """
    scores: dict[str, dict[str, float]] = {}
    tags = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            cols = line.split()
            if len(cols) != 6:
                raise ParseError(f"expected 6 whitespace-separated columns, got {len(cols)}", path, lineno)
            qid, _, doc_id, _, raw_score, tag = cols
            try:
                score = float(raw_score)
            except ValueError:
                raise ParseError(f"score {raw_score!r} is not a number", path, lineno) from None
            docs = scores.setdefault(qid, {})
            if doc_id in docs:
                raise ParseError(f"duplicate doc {doc_id!r} for query {qid!r}", path, lineno)
            docs[doc_id] = score
            tags.add(tag)
    if name is None:
        name = tags.pop() if len(tags) == 1 else Path(path).stem
    return RetrievalRun.from_scores(scores, name=name)
