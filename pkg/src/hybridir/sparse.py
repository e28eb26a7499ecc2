"""Term-based retrieval: a BM25 inverted index and an impact index for
precomputed sparse (SPLADE-style) term-weight vectors.

Both search paths score exhaustively over the postings of the query terms,
so results are exact and equal to brute-force rescoring of every document.

BM25 follows the Lucene formulation::

    score(q, d) = sum_t idf(t) * tf / (tf + k1 * (1 - b + b * dl / avgdl))
    idf(t)      = ln(1 + (N - df + 0.5) / (df + 0.5))

Repeated query terms are counted once per occurrence.
"""

from __future__ import annotations

import gzip
import json
import math
import re
import struct
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .corpus import CorpusStore
from .errors import FormatError, ParseError, ValidationError
from .runs import Ranking, RetrievalRun, string_ranks, top_k

_TOKEN = re.compile(r"\w+", re.UNICODE)


@dataclass(frozen=True)
class AnalyzerConfig:
    lowercase: bool = True
    stopwords: frozenset[str] = frozenset()
    lemma_dictionary: Mapping[str, str] | None = None

    def __post_init__(self):
        object.__setattr__(self, "stopwords", frozenset(self.stopwords))

    def analyze(self, text: str) -> list[str]:
        """Tokenize on word characters, then lowercase, lemmatize and drop stopwords."""
        tokens = _TOKEN.findall(text)
        if self.lowercase:
            tokens = [t.lower() for t in tokens]
        if self.lemma_dictionary:
            lemmas = self.lemma_dictionary
            tokens = [lemmas.get(t, t) for t in tokens]
        if self.stopwords:
            tokens = [t for t in tokens if t not in self.stopwords]
        return tokens

    def to_dict(self) -> dict:
        return {
            "lowercase": self.lowercase,
            "stopwords": sorted(self.stopwords),
            "lemma_dictionary": dict(sorted(self.lemma_dictionary.items())) if self.lemma_dictionary else None,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "AnalyzerConfig":
        return cls(lowercase=d.get("lowercase", True), stopwords=frozenset(d.get("stopwords") or ()),
                   lemma_dictionary=d.get("lemma_dictionary"))


def bm25_idf(df: int, n_docs: int) -> float:
    return math.log(1.0 + (n_docs - df + 0.5) / (df + 0.5))


class Bm25Index:
    """Inverted index holding term frequencies and document lengths."""

    def __init__(self, doc_ids: Sequence[str], postings: Mapping[str, tuple[np.ndarray, np.ndarray]],
                 doc_lengths: np.ndarray, analyzer: AnalyzerConfig, k1: float = 0.9, b: float = 0.4):
        if k1 < 0:
            raise ValueError(f"k1 must be >= 0, got {k1}")
        if not 0.0 <= b <= 1.0:
            raise ValueError(f"b must be in [0, 1], got {b}")
        self.doc_ids = list(doc_ids)
        self.postings = dict(postings)
        self.doc_lengths = np.asarray(doc_lengths, dtype=np.int64)
        self.analyzer = analyzer
        self.k1 = float(k1)
        self.b = float(b)
        self.n_docs = len(self.doc_ids)
        self.avg_doc_length = int(self.doc_lengths.sum()) / self.n_docs
        self._pos = {d: i for i, d in enumerate(self.doc_ids)}
        self._id_rank = string_ranks(self.doc_ids)
        self._idf = {t: bm25_idf(len(p[0]), self.n_docs) for t, p in self.postings.items()}
        if self.avg_doc_length > 0:
            self._norm = self.k1 * (1.0 - self.b + self.b * self.doc_lengths / self.avg_doc_length)
        else:
            self._norm = np.full(self.n_docs, self.k1 * (1.0 - self.b))

    def df(self, term: str) -> int:
        p = self.postings.get(term)
        return 0 if p is None else len(p[0])

    def tf(self, term: str, doc_id: str) -> int:
        p = self.postings.get(term)
        if p is None:
            return 0
        i = self._pos[doc_id]
        hit = np.searchsorted(p[0], i)
        return int(p[1][hit]) if hit < len(p[0]) and p[0][hit] == i else 0

    def idf(self, term: str) -> float:
        return self._idf.get(term, 0.0)

    def score(self, query_terms: Sequence[str], doc_id: str) -> float:
        if doc_id not in self._pos:
            raise KeyError(f"unknown doc id {doc_id!r}")
        i = self._pos[doc_id]
        total = 0.0
        for t in query_terms:
            tf = self.tf(t, doc_id)
            if tf:
                total += self._idf[t] * (tf / (tf + self._norm[i]))
        return total

    def score_all(self, query_terms: Sequence[str]) -> tuple[np.ndarray, np.ndarray]:
        """Scores for every document and the positions of docs matching any term."""
        scores = np.zeros(self.n_docs)
        matched = []
        for t in query_terms:
            p = self.postings.get(t)
            if p is None:
                continue
            docs, tfs = p
            scores[docs] += self._idf[t] * (tfs / (tfs + self._norm[docs]))
            matched.append(docs)
        hits = np.unique(np.concatenate(matched)) if matched else np.empty(0, dtype=np.int64)
        return scores, hits

    def search(self, query_text: str, k: int) -> Ranking:
        return self.search_terms(self.analyzer.analyze(query_text), k)

    def search_terms(self, query_terms: Sequence[str], k: int) -> Ranking:
        if k < 1:
            raise ValueError(f"k must be >= 1, got {k}")
        scores, hits = self.score_all(query_terms)
        return top_k(self.doc_ids, scores, k, self._id_rank, hits)

    def to_dict(self) -> dict:
        return {
            "format": "hybridir-bm25",
            "version": 1,
            "k1": self.k1,
            "b": self.b,
            "analyzer": self.analyzer.to_dict(),
            "doc_ids": self.doc_ids,
            "doc_lengths": self.doc_lengths.tolist(),
            "postings": {t: [p[0].tolist(), p[1].tolist()] for t, p in sorted(self.postings.items())},
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "Bm25Index":
        if d.get("format") != "hybridir-bm25" or d.get("version") != 1:
            raise FormatError("not a version-1 hybridir BM25 index")
        postings = {t: (np.asarray(v[0], dtype=np.int64), np.asarray(v[1], dtype=np.int64))
                    for t, v in d["postings"].items()}
        return cls(d["doc_ids"], postings, np.asarray(d["doc_lengths"]),
                   AnalyzerConfig.from_dict(d["analyzer"]), k1=d["k1"], b=d["b"])

    def save(self, path) -> None:
        payload = json.dumps(self.to_dict(), ensure_ascii=False).encode("utf-8")
        # no mtime or file name in the header, so equal indexes give equal bytes
        with open(path, "wb") as raw, gzip.GzipFile(filename="", fileobj=raw, mode="wb", mtime=0) as fh:
            fh.write(payload)

    @classmethod
    def load(cls, path) -> "Bm25Index":
        with gzip.open(path, "rt", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def build_bm25_index(corpus: CorpusStore | Iterable, analyzer: AnalyzerConfig | None = None,
                     k1: float = 0.9, b: float = 0.4) -> Bm25Index:
    """Index ``title + text`` of every document with the given analyzer."""
    analyzer = analyzer or AnalyzerConfig()
    doc_ids, lengths = [], []
    acc: dict[str, tuple[list[int], list[int]]] = {}
    for i, rec in enumerate(corpus):
        tokens = analyzer.analyze(rec.full_text)
        doc_ids.append(rec.doc_id)
        lengths.append(len(tokens))
        for term, tf in Counter(tokens).items():
            docs, tfs = acc.setdefault(term, ([], []))
            docs.append(i)
            tfs.append(tf)
    if not doc_ids:
        raise ValidationError("cannot build a BM25 index over an empty corpus")
    postings = {t: (np.asarray(d, dtype=np.int64), np.asarray(f, dtype=np.int64)) for t, (d, f) in acc.items()}
    return Bm25Index(doc_ids, postings, np.asarray(lengths), analyzer, k1=k1, b=b)


def bm25_score(index: Bm25Index, query_terms: Sequence[str], doc_id: str) -> float:
    return index.score(query_terms, doc_id)


def bm25_search(index: Bm25Index, queries: Mapping[str, str] | Iterable, k: int, name: str = "bm25") -> RetrievalRun:
    """Search a batch of queries; accepts a QuerySet or a ``{qid: text}`` mapping."""
    items = queries.items() if isinstance(queries, Mapping) else ((q.query_id, q.text) for q in queries)
    return RetrievalRun({qid: index.search(text, k) for qid, text in items}, name=name)


# --- impact index ---------------------------------------------------------------

SparseVector = Mapping[int, float]


def check_sparse_vector(vec: Mapping, where: str = "vector") -> dict[int, float]:
    out = {}
    for term, w in vec.items():
        w = float(w)
        if not math.isfinite(w) or w < 0:
            raise ValidationError(f"{where}: weight for term {term} must be finite and >= 0, got {w}")
        term = int(term)
        if not 0 <= term < 2**32:
            raise ValidationError(f"{where}: term id {term} outside the u32 range")
        out[term] = w
    return out


class ImpactIndex:
    """Inverted index of precomputed term impacts: term id -> (doc positions, weights)."""

    def __init__(self, doc_ids: Sequence[str], postings: Mapping[int, tuple[np.ndarray, np.ndarray]]):
        self.doc_ids = list(doc_ids)
        self.postings = dict(postings)
        self.n_docs = len(self.doc_ids)
        self._id_rank = string_ranks(self.doc_ids)

    def __eq__(self, other) -> bool:
        if not isinstance(other, ImpactIndex):
            return NotImplemented
        if self.doc_ids != other.doc_ids or self.postings.keys() != other.postings.keys():
            return False
        return all(np.array_equal(self.postings[t][0], other.postings[t][0])
                   and np.array_equal(self.postings[t][1], other.postings[t][1]) for t in self.postings)

    def document_vector(self, doc_id: str) -> dict[int, float]:
        i = self.doc_ids.index(doc_id)
        out = {}
        for term in sorted(self.postings):
            docs, weights = self.postings[term]
            hit = np.searchsorted(docs, i)
            if hit < len(docs) and docs[hit] == i:
                out[term] = float(weights[hit])
        return out

    def score_all(self, query: SparseVector) -> tuple[np.ndarray, np.ndarray]:
        scores = np.zeros(self.n_docs)
        for term in sorted(query):
            qw = float(query[term])
            p = self.postings.get(int(term))
            if p is None or qw == 0.0:
                continue
            scores[p[0]] += qw * p[1]
        return scores, np.flatnonzero(scores > 0)

    def search(self, query: SparseVector, k: int) -> Ranking:
        if k < 1:
            raise ValueError(f"k must be >= 1, got {k}")
        scores, hits = self.score_all(query)
        return top_k(self.doc_ids, scores, k, self._id_rank, hits)

    # Binary layout, all integers little-endian:
    #   b"SPIX1" | u32 n_docs | n_docs x (u32 byte_len, utf-8 doc id)
    #   | u32 n_terms | n_terms x (u32 term id, u32 n_postings,
    #                              n_postings x u32 doc position, n_postings x f64 weight)
    # Terms are written in ascending id order, postings in ascending doc position.
    MAGIC = b"SPIX1"

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.MAGIC)
            fh.write(struct.pack("<I", self.n_docs))
            for d in self.doc_ids:
                raw = d.encode("utf-8")
                fh.write(struct.pack("<I", len(raw)))
                fh.write(raw)
            fh.write(struct.pack("<I", len(self.postings)))
            for term in sorted(self.postings):
                docs, weights = self.postings[term]
                fh.write(struct.pack("<II", term, len(docs)))
                fh.write(np.asarray(docs, dtype="<u4").tobytes())
                fh.write(np.asarray(weights, dtype="<f8").tobytes())

    @classmethod
    def load(cls, path) -> "ImpactIndex":
        with open(path, "rb") as fh:
            data = fh.read()
        if data[:5] != cls.MAGIC:
            raise FormatError(f"{path}: bad magic {data[:5]!r}, expected {cls.MAGIC!r}")
        try:
            off = 5
            (n_docs,) = struct.unpack_from("<I", data, off)
            off += 4
            doc_ids = []
            for _ in range(n_docs):
                (n,) = struct.unpack_from("<I", data, off)
                off += 4
                doc_ids.append(data[off:off + n].decode("utf-8"))
                off += n
            (n_terms,) = struct.unpack_from("<I", data, off)
            off += 4
            postings = {}
            for _ in range(n_terms):
                term, n = struct.unpack_from("<II", data, off)
                off += 8
                docs = np.frombuffer(data, dtype="<u4", count=n, offset=off).astype(np.int64)
                off += 4 * n
                weights = np.frombuffer(data, dtype="<f8", count=n, offset=off).astype(np.float64)
                off += 8 * n
                postings[term] = (docs, weights)
        except (struct.error, ValueError, UnicodeDecodeError) as exc:
            raise FormatError(f"{path}: truncated or corrupt impact index ({exc})") from None
        if off != len(data):
            raise FormatError(f"{path}: {len(data) - off} trailing bytes")
        return cls(doc_ids, postings)


def build_impact_index(doc_vectors: Mapping[str, SparseVector]) -> ImpactIndex:
    """Invert ``{doc_id: {term_id: weight}}``; zero weights are not stored."""
    doc_ids = list(doc_vectors)
    acc: dict[int, tuple[list[int], list[float]]] = {}
    for i, doc_id in enumerate(doc_ids):
        vec = check_sparse_vector(doc_vectors[doc_id], where=f"document {doc_id!r}")
        for term, w in vec.items():
            if w == 0.0:
                continue
            docs, weights = acc.setdefault(term, ([], []))
            docs.append(i)
            weights.append(w)
    postings = {t: (np.asarray(d, dtype=np.int64), np.asarray(w, dtype=np.float64)) for t, (d, w) in acc.items()}
    return ImpactIndex(doc_ids, postings)


def impact_search(index: ImpactIndex, query_vectors: Mapping[str, SparseVector], k: int,
                  name: str = "impact") -> RetrievalRun:
    return RetrievalRun({qid: index.search(vec, k) for qid, vec in query_vectors.items()}, name=name)


def load_sparse_vectors(path) -> dict[str, dict[int, float]]:
    """Read JSONL lines ``{"_id": str, "vector": {term_id: weight}}``."""
    out: dict[str, dict[int, float]] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                key, vec = obj["_id"], obj["vector"]
            except (json.JSONDecodeError, KeyError, TypeError):
                raise ParseError('expected {"_id": ..., "vector": {...}}', path, lineno) from None
            if key in out:
                raise ValidationError(f"{path}, line {lineno}: duplicate _id {key!r}")
            try:
                out[key] = check_sparse_vector(vec, where=f"{path}, line {lineno}")
            except (TypeError, ValueError) as exc:
                if isinstance(exc, ValidationError):
                    raise
                raise ParseError(f"bad vector entry ({exc})", path, lineno) from None
    return out


def write_sparse_vectors(vectors: Mapping[str, SparseVector], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for key, vec in vectors.items():
            obj = {"_id": key, "vector": {str(t): float(w) for t, w in sorted(vec.items())}}
            fh.write(json.dumps(obj) + "\n")
