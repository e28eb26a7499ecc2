"""BEIR-style dataset loading: corpus.jsonl, queries.jsonl and qrels TSV files.

Ids are opaque strings and are never coerced to numbers ("01" and "1" are
different documents). Stores are read-only after loading.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType
from typing import Iterator, Mapping

from .errors import ParseError, ValidationError


@dataclass(frozen=True)
class CorpusRecord:
    doc_id: str
    text: str
    title: str | None = None

    @property
    def full_text(self) -> str:
        """Title and body joined by a space, as indexed by the term-based retrievers."""
        if self.title:
            return f"{self.title} {self.text}" if self.text else self.title
        return self.text


@dataclass(frozen=True)
class QueryRecord:
    query_id: str
    text: str


class _RecordStore:
    """Ordered, id-addressable, immutable collection."""

    def __init__(self, records, key: str):
        self._records = tuple(records)
        self._index = MappingProxyType({getattr(r, key): i for i, r in enumerate(self._records)})

    def __len__(self) -> int:
        return len(self._records)

    def __iter__(self) -> Iterator:
        return iter(self._records)

    def __contains__(self, item_id: object) -> bool:
        return item_id in self._index

    def __getitem__(self, item_id: str):
        try:
            return self._records[self._index[item_id]]
        except KeyError:
            raise KeyError(item_id) from None

    def ids(self) -> list[str]:
        return list(self._index)

    def position(self, item_id: str) -> int:
        return self._index[item_id]


class CorpusStore(_RecordStore):
    def __init__(self, records):
        super().__init__(records, "doc_id")


class QuerySet(_RecordStore):
    def __init__(self, records):
        super().__init__(records, "query_id")


@dataclass(frozen=True)
class QrelSet:
    """Graded judgments: query id -> doc id -> non-negative integer grade."""

    judgments: Mapping[str, Mapping[str, int]] = field(default_factory=dict)

    def __post_init__(self):
        frozen = {}
        for qid, docs in self.judgments.items():
            if not isinstance(qid, str):
                raise ValidationError(f"query id must be a string, got {qid!r}")
            for did, grade in docs.items():
                if not isinstance(grade, int) or isinstance(grade, bool) or grade < 0:
                    raise ValidationError(f"grade for ({qid}, {did}) must be a non-negative int, got {grade!r}")
            frozen[qid] = MappingProxyType(dict(docs))
        object.__setattr__(self, "judgments", MappingProxyType(frozen))

    def __getitem__(self, qid: str) -> Mapping[str, int]:
        return self.judgments[qid]

    def __contains__(self, qid: object) -> bool:
        return qid in self.judgments

    def __iter__(self):
        return iter(self.judgments)

    def __len__(self) -> int:
        return len(self.judgments)

    def get(self, qid: str) -> Mapping[str, int]:
        return self.judgments.get(qid, MappingProxyType({}))

    def query_ids(self) -> list[str]:
        return list(self.judgments)


@dataclass
class ValidationReport:
    missing_docs: int = 0
    queries_without_judgments: int = 0
    duplicate_ids: list[str] = field(default_factory=list)
    missing_doc_ids: list[str] = field(default_factory=list)
    unjudged_query_ids: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not (self.missing_docs or self.queries_without_judgments or self.duplicate_ids)


def _iter_json_lines(path):
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON ({exc.msg})", path, lineno) from None
            if not isinstance(obj, dict):
                raise ParseError("expected a JSON object", path, lineno)
            yield lineno, obj


def _require_str(obj: dict, key: str, path, lineno: int, optional: bool = False) -> str | None:
    value = obj.get(key)
    if value is None:
        if optional:
            return None
        raise ParseError(f"missing field {key!r}", path, lineno)
    if not isinstance(value, str):
        raise ParseError(f"field {key!r} must be a string", path, lineno)
    return value


def load_corpus(path) -> CorpusStore:
    """Load ``corpus.jsonl`` with one ``{"_id", "title", "text"}`` object per line."""
    records = []
    seen: dict[str, int] = {}
    for lineno, obj in _iter_json_lines(path):
        doc_id = _require_str(obj, "_id", path, lineno)
        title = _require_str(obj, "title", path, lineno, optional=True)
        text = _require_str(obj, "text", path, lineno)
        if not doc_id:
            raise ParseError("empty _id", path, lineno)
        if doc_id in seen:
            raise ValidationError(
                f"{path}, line {lineno}: duplicate _id {doc_id!r} (first seen on line {seen[doc_id]})"
            )
        if not text and not title:
            raise ValidationError(f"{path}, line {lineno}: document {doc_id!r} has neither title nor text")
        seen[doc_id] = lineno
        records.append(CorpusRecord(doc_id=doc_id, text=text, title=title or None))
    return CorpusStore(records)


def load_queries(path) -> QuerySet:
    """Load ``queries.jsonl`` with one ``{"_id", "text"}`` object per line."""
    records = []
    seen: dict[str, int] = {}
    for lineno, obj in _iter_json_lines(path):
        qid = _require_str(obj, "_id", path, lineno)
        text = _require_str(obj, "text", path, lineno)
        if not qid:
            raise ParseError("empty _id", path, lineno)
        if qid in seen:
            raise ValidationError(
                f"{path}, line {lineno}: duplicate _id {qid!r} (first seen on line {seen[qid]})"
            )
        if not text.strip():
            raise ValidationError(f"{path}, line {lineno}: query {qid!r} has blank text")
        seen[qid] = lineno
        records.append(QueryRecord(query_id=qid, text=text))
    return QuerySet(records)


def load_qrels(path) -> QrelSet:
    """Load tab-separated ``query-id, doc-id, grade`` judgments.

    A first line whose grade column is not an integer is treated as a header.
    """
    judgments: dict[str, dict[str, int]] = {}
    first = True
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            cols = line.split("\t")
            if len(cols) != 3:
                raise ParseError(f"expected 3 tab-separated columns, got {len(cols)}", path, lineno)
            qid, did, raw = (c.strip() for c in cols)
            try:
                grade = int(raw)
            except ValueError:
                if first:
                    first = False
                    continue
                raise ParseError(f"grade {raw!r} is not an integer", path, lineno) from None
            first = False
            if grade < 0:
                raise ValidationError(f"{path}, line {lineno}: negative grade {grade} for ({qid}, {did})")
            docs = judgments.setdefault(qid, {})
            if did in docs:
                raise ValidationError(f"{path}, line {lineno}: duplicate judgment for ({qid}, {did})")
            docs[did] = grade
    return QrelSet(judgments)


def validate_dataset(corpus: CorpusStore, queries: QuerySet, qrels: QrelSet) -> ValidationReport:
    """Report judged docs absent from the corpus and queries lacking judgments."""
    report = ValidationReport()
    missing = set()
    for qid in qrels:
        for did in qrels[qid]:
            if did not in corpus:
                missing.add(did)
    report.missing_doc_ids = sorted(missing)
    report.missing_docs = len(missing)
    unjudged = [q.query_id for q in queries if len(qrels.get(q.query_id)) == 0]
    report.unjudged_query_ids = unjudged
    report.queries_without_judgments = len(unjudged)
    return report


def write_corpus(records, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            obj = {"_id": r.doc_id, "title": r.title or "", "text": r.text}
            fh.write(json.dumps(obj, ensure_ascii=False) + "\n")


def write_queries(records, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps({"_id": r.query_id, "text": r.text}, ensure_ascii=False) + "\n")


def write_qrels(qrels: QrelSet | Mapping[str, Mapping[str, int]], path, header: bool = True) -> None:
    judgments = qrels.judgments if isinstance(qrels, QrelSet) else qrels
    with open(path, "w", encoding="utf-8") as fh:
        if header:
            fh.write("query-id\tcorpus-id\tscore\n")
        for qid, docs in judgments.items():
            for did, grade in docs.items():
                fh.write(f"{qid}\t{did}\t{grade}\n")


def load_dataset_dir(root) -> tuple[CorpusStore, QuerySet, QrelSet]:
    """Load a BEIR directory layout (corpus.jsonl, queries.jsonl, qrels/test.tsv or qrels.tsv)."""
    root = Path(root)
    qrels_path = root / "qrels.tsv"
    if not qrels_path.exists():
        qrels_path = root / "qrels" / "test.tsv"
    return load_corpus(root / "corpus.jsonl"), load_queries(root / "queries.jsonl"), load_qrels(qrels_path)
