"""Exact cosine-similarity retrieval over externally produced embeddings.

Embedding file layout (little-endian)::

    b"EMB1" | u32 dim | u32 count | count x dim float32

Row ids live in a parallel JSONL file, one ``{"_id": ...}`` object (or bare
JSON string) per line. Vectors are stored as float32; dot products are
accumulated in float64.
"""

from __future__ import annotations

import json
import os
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import FormatError, ParseError, ValidationError
from .runs import Ranking, RetrievalRun, string_ranks, top_k

MAGIC = b"EMB1"


@dataclass(frozen=True, eq=False)
class EmbeddingStore:
    ids: tuple[str, ...]
    matrix: np.ndarray
    normalized: bool = False
    _id_rank: np.ndarray = field(init=False, repr=False)
    _matrix64: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        ids = tuple(self.ids)
        matrix = np.ascontiguousarray(self.matrix, dtype=np.float32)
        if matrix.ndim != 2 or matrix.shape[1] < 1:
            raise ValidationError(f"embedding matrix must be 2-D with dim >= 1, got shape {matrix.shape}")
        if matrix.shape[0] != len(ids):
            raise ValidationError(f"{matrix.shape[0]} vectors but {len(ids)} ids")
        if len(set(ids)) != len(ids):
            raise ValidationError("duplicate ids in embedding store")
        bad = np.flatnonzero(~np.isfinite(matrix).all(axis=1))
        if bad.size:
            raise ValidationError(f"non-finite value in row {int(bad[0])}")
        matrix.setflags(write=False)
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "matrix", matrix)
        object.__setattr__(self, "_id_rank", string_ranks(ids))
        object.__setattr__(self, "_matrix64", matrix.astype(np.float64))

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    def __len__(self) -> int:
        return self.matrix.shape[0]

    def vector(self, item_id: str) -> np.ndarray:
        return self.matrix[self.ids.index(item_id)]


def load_ids(path) -> list[str]:
    ids = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON ({exc.msg})", path, lineno) from None
            if isinstance(obj, dict):
                obj = obj.get("_id")
            if not isinstance(obj, str):
                raise ParseError('expected {"_id": str} or a JSON string', path, lineno)
            ids.append(obj)
    return ids


def load_embeddings(vectors_path, ids_path) -> EmbeddingStore:
    with open(vectors_path, "rb") as fh:
        data = fh.read()
    if data[:4] != MAGIC:
        raise FormatError(f"{vectors_path}: bad magic {data[:4]!r}, expected {MAGIC!r}")
    if len(data) < 12:
        raise FormatError(f"{vectors_path}: truncated header")
    dim, count = struct.unpack_from("<II", data, 4)
    expected = 12 + 4 * dim * count
    if len(data) != expected:
        raise FormatError(f"{vectors_path}: header says {count}x{dim} floats "
                          f"({expected} bytes) but file has {len(data)} bytes")
    if dim < 1:
        raise FormatError(f"{vectors_path}: dim must be >= 1")
    matrix = np.frombuffer(data, dtype="<f4", offset=12).reshape(count, dim).astype(np.float32)
    ids = load_ids(ids_path)
    if len(ids) != count:
        raise ValidationError(f"{ids_path}: {len(ids)} ids for {count} vectors in {vectors_path}")
    return EmbeddingStore(tuple(ids), matrix)


def save_embeddings(store: EmbeddingStore, vectors_path, ids_path) -> None:
    with open(vectors_path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", store.dim, len(store)))
        fh.write(store.matrix.astype("<f4").tobytes())
    with open(ids_path, "w", encoding="utf-8") as fh:
        for item_id in store.ids:
            fh.write(json.dumps({"_id": item_id}, ensure_ascii=False) + "\n")


def normalize(store: EmbeddingStore) -> EmbeddingStore:
    """Scale every row to unit L2 norm (computed in float64)."""
    m = store.matrix.astype(np.float64)
    norms = np.linalg.norm(m, axis=1)
    zero = np.flatnonzero(norms == 0)
    if zero.size:
        raise ValidationError(f"row {int(zero[0])} ({store.ids[zero[0]]!r}) has zero norm")
    return EmbeddingStore(store.ids, (m / norms[:, None]).astype(np.float32), normalized=True)


def _unit_query(store: EmbeddingStore, query_vec) -> np.ndarray:
    q = np.asarray(query_vec, dtype=np.float64).ravel()
    if q.shape[0] != store.dim:
        raise ValidationError(f"query has dim {q.shape[0]}, store has dim {store.dim}")
    n = np.linalg.norm(q)
    if n == 0 or not np.isfinite(n):
        raise ValidationError("query vector must be finite and non-zero")
    return q / n


def dense_search(store: EmbeddingStore, query_vec, k: int) -> Ranking:
    """Exact top-k by cosine similarity. ``store`` must be normalized."""
    if not store.normalized:
        raise ValidationError("dense_search needs a normalized store; call normalize() first")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    scores = store._matrix64 @ _unit_query(store, query_vec)
    return top_k(store.ids, scores, k, store._id_rank)


def thread_count(default: int | None = None) -> int:
    """Worker cap from ``HYBRIDIR_THREADS`` (falls back to the CPU count)."""
    raw = os.environ.get("HYBRIDIR_THREADS")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            raise ValueError(f"HYBRIDIR_THREADS must be an integer, got {raw!r}") from None
    return default or os.cpu_count() or 1


def dense_search_batch(store: EmbeddingStore, queries: Mapping[str, np.ndarray] | EmbeddingStore, k: int,
                       threads: int | None = None, name: str = "dense") -> RetrievalRun:
    """Search many queries, partitioned across threads; output order follows the input order."""
    if isinstance(queries, EmbeddingStore):
        items = list(zip(queries.ids, queries.matrix))
    else:
        items = list(queries.items())
    threads = threads or thread_count()
    if threads <= 1 or len(items) < 2:
        results = [dense_search(store, v, k) for _, v in items]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda item: dense_search(store, item[1], k), items))
    return RetrievalRun({qid: r for (qid, _), r in zip(items, results)}, name=name)
