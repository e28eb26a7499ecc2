"""Benchmark orchestration: config-driven index -> search -> fuse -> evaluate,
and the rescoring throughput measurement."""

from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .corpus import QrelSet, load_corpus, load_qrels, load_queries
from .dense import dense_search_batch, load_embeddings, normalize, thread_count
from .errors import ArtifactMissingError, ValidationError
from .hybrid.features import DEFAULT_DEPTH
from .hybrid.fusion import fuse, fuse_query, train_fusion
from .hybrid.lambdamart import LtrParams, TreeEnsemble, load_model, save_model
from .hybrid.trees import Tree
from .metrics import DEFAULT_CUTOFFS, MetricReport, aggregate_groups, evaluate_run, format_group_table, metric_names
from .runs import RetrievalRun, write_trec
from .sparse import AnalyzerConfig, bm25_search, build_bm25_index, build_impact_index, impact_search, load_sparse_vectors
from .synthetic import throughput_runs

RETRIEVER_KINDS = ("bm25", "impact", "dense", "hybrid")
REFERENCE_QPS = 1500.0  # published figure for this rescoring setup, hardware unknown


@dataclass
class EmbeddingPaths:
    docs: Path
    doc_ids: Path
    queries: Path
    query_ids: Path


@dataclass
class SparsePaths:
    docs: Path
    queries: Path


@dataclass
class DatasetConfig:
    name: str
    group: str
    corpus: Path
    queries: Path
    qrels: Path
    embeddings: dict[str, EmbeddingPaths] = field(default_factory=dict)
    sparse: dict[str, SparsePaths] = field(default_factory=dict)


@dataclass
class RetrieverConfig:
    """One retrieval system.

    ``source`` names the embeddings / sparse-vector entry of each dataset used
    by dense and impact retrievers (defaults to the retriever name). Hybrid
    retrievers list ``members`` and either a ``model`` file or a ``train``
    block ``{"dataset": name, "params": {...}}``.
    """

    name: str
    kind: str
    params: dict[str, Any] = field(default_factory=dict)
    source: str | None = None
    members: list[str] = field(default_factory=list)
    model: Path | None = None
    train: dict[str, Any] | None = None


@dataclass
class BenchmarkConfig:
    datasets: list[DatasetConfig]
    retrievers: list[RetrieverConfig]
    cutoffs: dict[str, int] = field(default_factory=lambda: dict(DEFAULT_CUTOFFS))
    retrieval_depth: int = DEFAULT_DEPTH
    seed: int = 0
    output_dir: Path = Path("bench_out")
    exclude_from_average: list[str] = field(default_factory=list)

    def __post_init__(self):
        names = [d.name for d in self.datasets]
        dup = sorted({n for n in names if names.count(n) > 1})
        if dup:
            raise ValidationError(f"duplicate dataset names: {dup}")
        rnames = [r.name for r in self.retrievers]
        if len(set(rnames)) != len(rnames):
            raise ValidationError("duplicate retriever names")
        known = set()
        for r in self.retrievers:
            if r.kind not in RETRIEVER_KINDS:
                raise ValidationError(f"retriever {r.name!r}: unknown kind {r.kind!r}")
            if r.kind == "hybrid":
                if len(r.members) < 2:
                    raise ValidationError(f"hybrid retriever {r.name!r} needs at least 2 members")
                missing = [m for m in r.members if m not in known]
                if missing:
                    raise ValidationError(f"hybrid retriever {r.name!r}: members {missing} must be defined earlier")
                if (r.model is None) == (r.train is None):
                    raise ValidationError(f"hybrid retriever {r.name!r}: give exactly one of model / train")
                if r.train is not None and r.train.get("dataset") not in names:
                    raise ValidationError(f"hybrid retriever {r.name!r}: unknown training dataset")
            known.add(r.name)
        self.cutoffs = {**DEFAULT_CUTOFFS, **self.cutoffs}

    @property
    def grouping(self) -> dict[str, list[str]]:
        groups: dict[str, list[str]] = {}
        for d in self.datasets:
            groups.setdefault(d.group, []).append(d.name)
        return groups

    @classmethod
    def from_dict(cls, raw: dict, base: Path | str = ".") -> "BenchmarkConfig":
        base = Path(base)
        p = lambda v: None if v is None else base / v

        datasets = []
        for d in raw.get("datasets", []):
            emb = {k: EmbeddingPaths(*(p(v[f]) for f in ("docs", "doc_ids", "queries", "query_ids")))
                   for k, v in (d.get("embeddings") or {}).items()}
            sp = {k: SparsePaths(p(v["docs"]), p(v["queries"])) for k, v in (d.get("sparse") or {}).items()}
            datasets.append(DatasetConfig(d["name"], d.get("group", "default"), p(d["corpus"]),
                                          p(d["queries"]), p(d["qrels"]), emb, sp))
        retrievers = [RetrieverConfig(name=r["name"], kind=r["kind"], params=dict(r.get("params") or {}),
                                      source=r.get("source"), members=list(r.get("members") or []),
                                      model=p(r.get("model")), train=r.get("train"))
                      for r in raw.get("retrievers", [])]
        return cls(datasets=datasets, retrievers=retrievers,
                   cutoffs=dict(raw.get("cutoffs") or {}),
                   retrieval_depth=int(raw.get("retrieval_depth", DEFAULT_DEPTH)),
                   seed=int(raw.get("seed", 0)),
                   output_dir=base / raw.get("output_dir", "bench_out"),
                   exclude_from_average=list(raw.get("exclude_from_average") or []))

    @classmethod
    def from_file(cls, path) -> "BenchmarkConfig":
        path = Path(path)
        with open(path, encoding="utf-8") as fh:
            raw = yaml.safe_load(fh) or {}
        return cls.from_dict(raw, path.parent)


def _need(dataset: str, path: Path) -> Path:
    if not Path(path).exists():
        raise ArtifactMissingError(dataset, path)
    return path


def _retrieve(ds: DatasetConfig, r: RetrieverConfig, queries, depth: int) -> RetrievalRun:
    src = r.source or r.name
    if r.kind == "bm25":
        analyzer = AnalyzerConfig.from_dict(r.params.get("analyzer", {}))
        index = build_bm25_index(load_corpus(_need(ds.name, ds.corpus)), analyzer,
                                 k1=r.params.get("k1", 0.9), b=r.params.get("b", 0.4))
        return bm25_search(index, queries, depth, name=r.name)
    if r.kind == "impact":
        if src not in ds.sparse:
            raise ValidationError(f"dataset {ds.name!r} has no sparse vectors {src!r}")
        paths = ds.sparse[src]
        index = build_impact_index(load_sparse_vectors(_need(ds.name, paths.docs)))
        qvecs = load_sparse_vectors(_need(ds.name, paths.queries))
        return impact_search(index, qvecs, depth, name=r.name)
    if r.kind == "dense":
        if src not in ds.embeddings:
            raise ValidationError(f"dataset {ds.name!r} has no embeddings {src!r}")
        e = ds.embeddings[src]
        docs = normalize(load_embeddings(_need(ds.name, e.docs), _need(ds.name, e.doc_ids)))
        qs = load_embeddings(_need(ds.name, e.queries), _need(ds.name, e.query_ids))
        return dense_search_batch(docs, qs, depth, name=r.name)
    raise AssertionError(r.kind)


def run_benchmark(config: BenchmarkConfig, log=None) -> dict:
    """Run every retriever on every dataset, writing runs, reports and group tables.

    Layout under ``config.output_dir``::

        runs/<retriever>/<dataset>.trec
        reports/<retriever>/<dataset>.json
        models/<retriever>.lmrt          (trained hybrids only)
        summary.json, summary.txt

    Returns the summary dict that is also written to summary.json.
    """
    out = Path(config.output_dir)
    for ds in config.datasets:
        for p in (ds.corpus, ds.queries, ds.qrels):
            _need(ds.name, p)

    runs: dict[str, dict[str, RetrievalRun]] = {r.name: {} for r in config.retrievers}
    qrels: dict[str, QrelSet] = {}
    for ds in config.datasets:
        queries = load_queries(ds.queries)
        qrels[ds.name] = load_qrels(ds.qrels)
        for r in config.retrievers:
            if r.kind != "hybrid":
                runs[r.name][ds.name] = _retrieve(ds, r, queries, config.retrieval_depth)

    models: dict[str, TreeEnsemble] = {}
    for r in config.retrievers:
        if r.kind != "hybrid":
            continue
        if r.model is not None:
            models[r.name] = load_model(_need(r.name, r.model))
        else:
            train_ds = r.train["dataset"]
            member_runs = [runs[m][train_ds] for m in r.members]
            params = LtrParams(**(r.train.get("params") or {}))
            models[r.name] = train_fusion(member_runs, qrels[train_ds], params, seed=config.seed,
                                          per_index_depth=config.retrieval_depth)
            (out / "models").mkdir(parents=True, exist_ok=True)
            save_model(models[r.name], out / "models" / f"{r.name}.lmrt")
        for ds in config.datasets:
            member_runs = [runs[m][ds.name] for m in r.members]
            k = int(r.params.get("k", config.retrieval_depth))
            runs[r.name][ds.name] = fuse(member_runs, models[r.name], k,
                                         per_index_depth=config.retrieval_depth, name=r.name)

    names = metric_names(config.cutoffs)
    per_dataset: dict[str, dict[str, dict[str, float]]] = {}
    for r in config.retrievers:
        per_dataset[r.name] = {}
        for ds in config.datasets:
            run = runs[r.name][ds.name]
            (out / "runs" / r.name).mkdir(parents=True, exist_ok=True)
            (out / "reports" / r.name).mkdir(parents=True, exist_ok=True)
            write_trec(run, out / "runs" / r.name / f"{ds.name}.trec", tag=r.name)
            report = evaluate_run(run, qrels[ds.name], config.cutoffs)
            (out / "reports" / r.name / f"{ds.name}.json").write_text(report.to_json(), encoding="utf-8")
            per_dataset[r.name][ds.name] = report.means
            if log:
                log(f"{r.name} / {ds.name}: " + ", ".join(f"{k}={v:.4f}" for k, v in sorted(report.means.items())))

    grouping = config.grouping
    groups = {}
    text = []
    for metric in names.values():
        rows = {}
        for r in config.retrievers:
            scores = {d: m[metric] for d, m in per_dataset[r.name].items()}
            rows[r.name] = aggregate_groups(scores, grouping, config.exclude_from_average)
        groups[metric] = rows
        text.append(f"{metric}\n" + format_group_table(rows, grouping))
    summary = {"datasets": per_dataset, "groups": groups, "grouping": grouping,
               "cutoffs": config.cutoffs, "seed": config.seed}
    out.mkdir(parents=True, exist_ok=True)
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    (out / "summary.txt").write_text("\n".join(text), encoding="utf-8")
    return summary


def load_report(path) -> MetricReport:
    return MetricReport.from_json(Path(path).read_text(encoding="utf-8"))


# --- throughput -----------------------------------------------------------------


def random_ensemble(n_trees: int = 100, max_depth: int = 6, n_indexes: int = 2,
                    learning_rate: float = 0.3, seed: int = 0) -> TreeEnsemble:
    """Complete trees of exactly ``max_depth`` with random splits: the worst case for traversal."""
    rng = np.random.default_rng(seed)
    n_features = 4 * n_indexes
    n_internal = 2 ** max_depth - 1
    n_nodes = 2 ** (max_depth + 1) - 1
    trees = []
    for _ in range(n_trees):
        feature = np.full(n_nodes, -1)
        feature[:n_internal] = rng.integers(0, n_features, n_internal)
        threshold = np.zeros(n_nodes)
        threshold[:n_internal] = rng.uniform(0.0, 1.0, n_internal)
        idx = np.arange(n_nodes)
        left = np.where(idx < n_internal, 2 * idx + 1, -1)
        right = np.where(idx < n_internal, 2 * idx + 2, -1)
        value = np.where(idx < n_internal, 0.0, rng.normal(0.0, 1.0, n_nodes))
        trees.append(Tree(feature, threshold, left, right, value))
    names = tuple(f"index{i}" for i in range(n_indexes))
    params = LtrParams(n_trees=n_trees, max_depth=max_depth, learning_rate=learning_rate)
    return TreeEnsemble(tuple(trees), learning_rate, n_features, params, names, seed)


@dataclass
class ThroughputReport:
    n_queries: int
    candidates_per_query: int
    n_trees: int
    max_depth: int
    threads: int
    single_thread_qps: float
    multi_thread_qps: float
    single_thread_seconds: float
    multi_thread_seconds: float
    reference_qps: float = REFERENCE_QPS

    def to_dict(self) -> dict:
        return asdict(self)

    def summary(self) -> str:
        return (f"{self.n_queries} queries x {self.candidates_per_query} candidates, "
                f"{self.n_trees} trees (depth <= {self.max_depth}): "
                f"{self.single_thread_qps:.0f} q/s single-thread, "
                f"{self.multi_thread_qps:.0f} q/s with {self.threads} threads "
                f"(reference ~{self.reference_qps:.0f} q/s)")


def throughput_bench(ensemble: TreeEnsemble, n_queries: int, candidates_per_query: int = 200,
                     threads: int | None = None, seed: int = 0, k: int = 10) -> ThroughputReport:
    """Queries per second for pooling + feature extraction + prediction + top-k.

    Member runs are synthetic with a fixed seed, with disjoint documents so
    each pool holds exactly ``candidates_per_query`` candidates.
    """
    n_indexes = ensemble.feature_count // 4
    runs = throughput_runs(n_queries, candidates_per_query, n_indexes, seed)
    depth = max(1, candidates_per_query // n_indexes)
    per_query = [[run[qid] for run in runs] for qid in (runs[0] if runs else [])]
    if per_query:
        fuse_query(per_query[0], ensemble, k, depth)  # compile / warm caches outside the timing
    threads = threads or thread_count()

    t0 = time.perf_counter()
    for rankings in per_query:
        fuse_query(rankings, ensemble, k, depth)
    single = time.perf_counter() - t0

    t0 = time.perf_counter()
    if threads > 1 and len(per_query) > 1:
        chunks = [per_query[i::threads] for i in range(threads)]

        def work(chunk):
            for rankings in chunk:
                fuse_query(rankings, ensemble, k, depth)

        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(work, chunks))
    else:
        for rankings in per_query:
            fuse_query(rankings, ensemble, k, depth)
    multi = time.perf_counter() - t0

    qps = lambda secs: n_queries / secs if n_queries and secs > 0 else 0.0
    max_depth = max((t.depth() for t in ensemble.trees), default=0)
    return ThroughputReport(n_queries, candidates_per_query, len(ensemble.trees), max_depth, threads,
                            qps(single), qps(multi), single, multi)
