"""hybridir: sparse, dense and learned-hybrid retrieval with an IR evaluation harness."""

from .corpus import (CorpusRecord, CorpusStore, QrelSet, QueryRecord, QuerySet, ValidationReport,
                     load_corpus, load_qrels, load_queries, validate_dataset)
from .dense import EmbeddingStore, dense_search, load_embeddings, normalize, save_embeddings
from .errors import ArtifactMissingError, FormatError, HybridIRError, ParseError, ValidationError
from .metrics import MetricReport, accuracy_at_1, aggregate_groups, evaluate_run, mrr_at_k, ndcg_at_k, recall_at_k
from .runs import RetrievalRun, read_trec, write_trec
from .sparse import (AnalyzerConfig, Bm25Index, ImpactIndex, bm25_score, bm25_search, build_bm25_index,
                     build_impact_index, impact_search)

__version__ = "0.1.0"

__all__ = [
    "AnalyzerConfig", "ArtifactMissingError", "Bm25Index", "CorpusRecord", "CorpusStore", "EmbeddingStore",
    "FormatError", "HybridIRError", "ImpactIndex", "MetricReport", "ParseError", "QrelSet", "QueryRecord",
    "QuerySet", "RetrievalRun", "ValidationError", "ValidationReport", "accuracy_at_1", "aggregate_groups",
    "bm25_score", "bm25_search", "build_bm25_index", "build_impact_index", "dense_search", "evaluate_run",
    "impact_search", "load_corpus", "load_embeddings", "load_qrels", "load_queries", "mrr_at_k", "ndcg_at_k",
    "normalize", "read_trec", "recall_at_k", "save_embeddings", "validate_dataset", "write_trec",
]
