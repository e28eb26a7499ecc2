"""Command-line entry point: ``hybridir <subcommand> ...``.

Failures exit with status 1 and a one-line JSON error record on stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import bench
from .corpus import load_corpus, load_qrels, load_queries
from .dense import dense_search_batch, load_embeddings, normalize
from .errors import ArtifactMissingError, HybridIRError, ParseError
from .hybrid import LtrParams, fuse, load_model, save_model, train_fusion
from .losses import gradient_check
from .metrics import evaluate_run
from .runs import read_trec, write_trec
from .sparse import (AnalyzerConfig, Bm25Index, ImpactIndex, bm25_search, build_bm25_index,
                     build_impact_index, impact_search, load_sparse_vectors)
from .textprep import PrepConfig, load_pairs, preprocess_pairs, read_lemma_dictionary, read_word_list, write_pairs


def _emit(obj) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False))


def cmd_index(args) -> None:
    if args.kind == "bm25":
        analyzer = AnalyzerConfig(
            stopwords=frozenset(read_word_list(args.stopwords)) if args.stopwords else frozenset(),
            lemma_dictionary=read_lemma_dictionary(args.lemmas) if args.lemmas else None)
        index = build_bm25_index(load_corpus(args.input), analyzer, k1=args.k1, b=args.b)
        index.save(args.out)
        _emit({"kind": "bm25", "documents": len(index.doc_ids), "terms": len(index.postings)})
    else:
        index = build_impact_index(load_sparse_vectors(args.input))
        index.save(args.out)
        _emit({"kind": "impact", "documents": len(index.doc_ids), "terms": len(index.postings)})


def cmd_search(args) -> None:
    tag = args.tag or args.kind
    if args.kind == "bm25":
        run = bm25_search(Bm25Index.load(args.index), load_queries(args.queries), args.k, name=tag)
    elif args.kind == "impact":
        run = impact_search(ImpactIndex.load(args.index), load_sparse_vectors(args.queries), args.k, name=tag)
    else:
        if not (args.doc_ids and args.query_ids):
            raise HybridIRError("dense search needs --doc-ids and --query-ids")
        docs = normalize(load_embeddings(args.index, args.doc_ids))
        queries = load_embeddings(args.queries, args.query_ids)
        run = dense_search_batch(docs, queries, args.k, threads=args.threads, name=tag)
    write_trec(run, args.out, tag=tag)
    _emit({"queries": len(run), "out": str(args.out)})


def cmd_fuse_train(args) -> None:
    runs = [read_trec(p) for p in args.runs]
    params = LtrParams(n_trees=args.trees, max_depth=args.max_depth, row_subsample=args.row_subsample,
                       col_subsample_per_tree=args.col_subsample, learning_rate=args.learning_rate)
    model = train_fusion(runs, load_qrels(args.qrels), params, seed=args.seed, per_index_depth=args.depth)
    save_model(model, args.out)
    _emit({"trees": len(model.trees), "features": model.feature_count, "indexes": list(model.index_names)})


def cmd_fuse(args) -> None:
    model = load_model(args.model)
    runs = [read_trec(p) for p in args.runs]
    fused = fuse(runs, model, args.k, per_index_depth=args.depth, check_names=not args.ignore_names,
                 name=args.tag)
    write_trec(fused, args.out, tag=args.tag)
    _emit({"queries": len(fused), "out": str(args.out)})


def cmd_evaluate(args) -> None:
    cutoffs = {"ndcg": args.ndcg_k, "mrr": args.mrr_k, "recall": args.recall_k}
    report = evaluate_run(read_trec(args.run), load_qrels(args.qrels), cutoffs)
    if args.out:
        Path(args.out).write_text(report.to_json(), encoding="utf-8")
    _emit(report.means)


def cmd_preprocess(args) -> None:
    config = PrepConfig.from_file(args.config)
    pairs = load_pairs(args.input)
    kept = preprocess_pairs(pairs, config)
    write_pairs(kept, args.output)
    _emit({"input": len(pairs), "kept": len(kept)})


def cmd_bench_throughput(args) -> None:
    if args.model:
        model = load_model(args.model)
    else:
        model = bench.random_ensemble(args.trees, args.max_depth, n_indexes=2, seed=args.seed)
    report = bench.throughput_bench(model, args.queries, args.candidates, threads=args.threads, seed=args.seed)
    _emit(report.to_dict())
    print(report.summary(), file=sys.stderr)


def cmd_losses_check(args) -> None:
    errors = gradient_check(n_points=args.points, seed=args.seed)
    _emit({"max_relative_error": errors, "tolerance": 1e-4,
           "ok": all(v < 1e-4 for v in errors.values())})


def cmd_benchmark(args) -> None:
    config = bench.BenchmarkConfig.from_file(args.config)
    if args.output_dir:
        config.output_dir = Path(args.output_dir)
    log = (lambda m: print(m, file=sys.stderr)) if args.verbose else None
    summary = bench.run_benchmark(config, log=log)
    print((Path(config.output_dir) / "summary.txt").read_text(encoding="utf-8"), end="")
    return summary


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hybridir", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("index", help="build a BM25 or impact index")
    p.add_argument("--kind", choices=["bm25", "impact"], default="bm25")
    p.add_argument("--input", required=True, help="corpus.jsonl (bm25) or sparse doc vectors (impact)")
    p.add_argument("--out", required=True)
    p.add_argument("--k1", type=float, default=0.9)
    p.add_argument("--b", type=float, default=0.4)
    p.add_argument("--stopwords")
    p.add_argument("--lemmas", help="TSV surface<TAB>lemma")
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("search", help="retrieve top-k for a query file")
    p.add_argument("--kind", choices=["bm25", "impact", "dense"], required=True)
    p.add_argument("--index", required=True, help="index file, or doc embeddings for dense")
    p.add_argument("--queries", required=True, help="queries.jsonl, query sparse vectors, or query embeddings")
    p.add_argument("--doc-ids")
    p.add_argument("--query-ids")
    p.add_argument("--k", type=int, default=100)
    p.add_argument("--threads", type=int)
    p.add_argument("--tag")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("fuse-train", help="train a LambdaMART fusion model")
    p.add_argument("--runs", nargs="+", required=True)
    p.add_argument("--qrels", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--depth", type=int, default=100, help="candidates taken from each run")
    p.add_argument("--trees", type=int, default=100)
    p.add_argument("--max-depth", type=int, default=6)
    p.add_argument("--row-subsample", type=float, default=0.75)
    p.add_argument("--col-subsample", type=float, default=0.9)
    p.add_argument("--learning-rate", type=float, default=0.3)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_fuse_train)

    p = sub.add_parser("fuse", help="rescore member runs with a fusion model")
    p.add_argument("--model", required=True)
    p.add_argument("--runs", nargs="+", required=True)
    p.add_argument("--k", type=int, default=100)
    p.add_argument("--depth", type=int, default=100)
    p.add_argument("--tag", default="hybrid")
    p.add_argument("--ignore-names", action="store_true", help="skip the run-name order check")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("evaluate", help="score a TREC run against qrels")
    p.add_argument("--run", required=True)
    p.add_argument("--qrels", required=True)
    p.add_argument("--ndcg-k", type=int, default=10)
    p.add_argument("--mrr-k", type=int, default=10)
    p.add_argument("--recall-k", type=int, default=100)
    p.add_argument("--out")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("preprocess", help="clean question-answer pairs")
    p.add_argument("--input", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("bench-throughput", help="measure fusion rescoring speed")
    p.add_argument("--model", help="model file; default is a random complete-tree ensemble")
    p.add_argument("--queries", type=int, default=2000)
    p.add_argument("--candidates", type=int, default=200)
    p.add_argument("--trees", type=int, default=100)
    p.add_argument("--max-depth", type=int, default=6)
    p.add_argument("--threads", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_bench_throughput)

    p = sub.add_parser("losses", help="loss kernel utilities")
    lsub = p.add_subparsers(dest="losses_command", required=True)
    c = lsub.add_parser("check", help="finite-difference gradient check")
    c.add_argument("--points", type=int, default=20)
    c.add_argument("--seed", type=int, default=0)
    c.set_defaults(func=cmd_losses_check)

    p = sub.add_parser("benchmark", help="run a benchmark config end to end")
    p.add_argument("--config", required=True)
    p.add_argument("--output-dir")
    p.add_argument("-v", "--verbose", action="store_true")
    p.set_defaults(func=cmd_benchmark)
    return parser


def error_record(exc: BaseException) -> dict:
    record = {"error": type(exc).__name__, "message": str(exc)}
    if isinstance(exc, ParseError):
        record.update(path=exc.path, line=exc.line)
    if isinstance(exc, ArtifactMissingError):
        record.update(dataset=exc.dataset, path=exc.path)
    elif isinstance(exc, OSError) and getattr(exc, "filename", None):
        record["path"] = str(exc.filename)
    return record


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except (HybridIRError, OSError, ValueError, KeyError) as exc:
        print(json.dumps(error_record(exc), ensure_ascii=False), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
