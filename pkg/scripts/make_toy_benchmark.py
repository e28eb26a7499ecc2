#!/usr/bin/env python3
"""Write the three-dataset toy benchmark used by the end-to-end tests.

Every dataset is small enough that the bm25, impact and dense rankings can be
worked out by hand (the expected NDCG values sit in tests/test_acceptance.py). Each query
has exactly one relevant document.

    python3 scripts/make_toy_benchmark.py tests/fixtures/toy_bench
"""

import argparse
from pathlib import Path

import numpy as np

from hybridir.corpus import CorpusRecord, QueryRecord, write_corpus, write_qrels, write_queries
from hybridir.dense import EmbeddingStore, save_embeddings
from hybridir.sparse import write_sparse_vectors

DATASETS = {
    "alpha": dict(
        docs={"a1": "kot mruczy", "a2": "pies szczeka głośno", "a3": "ryba pływa", "a4": "kot i pies"},
        queries={"qa1": "kot", "qa2": "pies"},
        qrels={"qa1": {"a1": 1}, "qa2": {"a4": 1}},
        doc_sparse={"a1": {1: 1.0}, "a2": {2: 1.0}, "a3": {3: 1.0}, "a4": {1: 0.5, 2: 2.0}},
        query_sparse={"qa1": {1: 1.0}, "qa2": {2: 1.0}},
        doc_emb={"a1": [1, 0], "a2": [0, 1], "a3": [-1, 0], "a4": [1, 1]},
        query_emb={"qa1": [1, 0.1], "qa2": [0.2, 1]},
    ),
    "beta": dict(
        docs={"b1": "słońce świeci", "b2": "deszcz pada", "b3": "słońce i deszcz razem", "b4": "śnieg"},
        queries={"qb1": "słońce", "qb2": "deszcz", "qb3": "grad"},
        qrels={"qb1": {"b3": 1}, "qb2": {"b2": 1}, "qb3": {"b4": 1}},
        doc_sparse={"b1": {5: 1.0}, "b2": {6: 1.0}, "b3": {5: 0.4, 6: 0.4}, "b4": {7: 2.0}},
        query_sparse={"qb1": {5: 1.0}, "qb2": {6: 1.0, 7: 1.0}, "qb3": {7: 1.0}},
        doc_emb={"b1": [1, 0], "b2": [0, 1], "b3": [1, 1], "b4": [-1, -1]},
        query_emb={"qb1": [1, 1], "qb2": [0, 1], "qb3": [-1, -1]},
    ),
    "gamma": dict(
        docs={"g1": "alfa beta", "g2": "gamma", "g3": "alfa alfa gamma"},
        queries={"qg1": "alfa", "qg2": "gamma"},
        qrels={"qg1": {"g3": 1}, "qg2": {"g2": 1}},
        doc_sparse={"g1": {8: 1.0}, "g2": {9: 3.0}, "g3": {8: 2.0, 9: 1.0}},
        query_sparse={"qg1": {8: 1.0}, "qg2": {8: 1.0, 9: 0.5}},
        doc_emb={"g1": [1, 0], "g2": [0, 1], "g3": [1, 1]},
        query_emb={"qg1": [1, 0], "qg2": [0, 1]},
    ),
}
GROUPS = {"alpha": "A", "beta": "A", "gamma": "B"}

CONFIG = """\
seed: 0
retrieval_depth: 100
output_dir: out
datasets:
{datasets}
retrievers:
  - name: bm25
    kind: bm25
  - name: splade
    kind: impact
  - name: e5
    kind: dense
  - name: hybrid
    kind: hybrid
    members: [bm25, e5]
    train:
      dataset: alpha
      params: {{n_trees: 20, max_depth: 3, row_subsample: 1.0, col_subsample_per_tree: 1.0, min_child_weight: 0.0}}
"""

DATASET_ENTRY = """\
  - name: {name}
    group: {group}
    corpus: {name}/corpus.jsonl
    queries: {name}/queries.jsonl
    qrels: {name}/qrels.tsv
    sparse:
      splade: {{docs: {name}/splade_docs.jsonl, queries: {name}/splade_queries.jsonl}}
    embeddings:
      e5: {{docs: {name}/e5_docs.emb, doc_ids: {name}/e5_docs.ids.jsonl, queries: {name}/e5_queries.emb, query_ids: {name}/e5_queries.ids.jsonl}}
"""


def _store(vectors: dict) -> EmbeddingStore:
    return EmbeddingStore(list(vectors), np.asarray(list(vectors.values()), dtype=np.float32))


def write_toy(root: Path) -> Path:
    root.mkdir(parents=True, exist_ok=True)
    for name, d in DATASETS.items():
        out = root / name
        out.mkdir(exist_ok=True)
        write_corpus([CorpusRecord(k, v) for k, v in d["docs"].items()], out / "corpus.jsonl")
        write_queries([QueryRecord(k, v) for k, v in d["queries"].items()], out / "queries.jsonl")
        write_qrels(d["qrels"], out / "qrels.tsv")
        write_sparse_vectors(d["doc_sparse"], out / "splade_docs.jsonl")
        write_sparse_vectors(d["query_sparse"], out / "splade_queries.jsonl")
        save_embeddings(_store(d["doc_emb"]), out / "e5_docs.emb", out / "e5_docs.ids.jsonl")
        save_embeddings(_store(d["query_emb"]), out / "e5_queries.emb", out / "e5_queries.ids.jsonl")
    entries = "".join(DATASET_ENTRY.format(name=n, group=GROUPS[n]) for n in DATASETS)
    config = root / "bench.yaml"
    config.write_text(CONFIG.format(datasets=entries.rstrip("\n")), encoding="utf-8")
    return config


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("root", type=Path)
    print(write_toy(ap.parse_args().root))
