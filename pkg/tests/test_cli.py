import json
from pathlib import Path

import pytest

from hybridir.cli import main
from hybridir.runs import read_trec

FIXTURES = Path(__file__).parent / "fixtures"
ALPHA = FIXTURES / "toy_bench" / "alpha"


def _ok(capsys, argv):
    assert main([str(a) for a in argv]) == 0
    return json.loads(capsys.readouterr().out)


def _fails(capsys, argv):
    assert main([str(a) for a in argv]) == 1
    return json.loads(capsys.readouterr().err.strip().splitlines()[-1])


def test_index_search_evaluate(tmp_path, capsys):
    info = _ok(capsys, ["index", "--input", ALPHA / "corpus.jsonl", "--out", tmp_path / "a.bm25"])
    assert info["kind"] == "bm25" and info["documents"] > 0
    _ok(capsys, ["search", "--kind", "bm25", "--index", tmp_path / "a.bm25", "--queries", ALPHA / "queries.jsonl",
                 "--k", 5, "--out", tmp_path / "bm25.trec"])
    assert read_trec(tmp_path / "bm25.trec").name == "bm25"
    means = _ok(capsys, ["evaluate", "--run", tmp_path / "bm25.trec", "--qrels", ALPHA / "qrels.tsv",
                         "--out", tmp_path / "report.json"])
    assert 0 <= means["NDCG@10"] <= 1 and (tmp_path / "report.json").exists()


def test_impact_and_dense_search(tmp_path, capsys):
    _ok(capsys, ["index", "--kind", "impact", "--input", ALPHA / "splade_docs.jsonl", "--out", tmp_path / "s.spix"])
    _ok(capsys, ["search", "--kind", "impact", "--index", tmp_path / "s.spix",
                 "--queries", ALPHA / "splade_queries.jsonl", "--out", tmp_path / "splade.trec"])
    _ok(capsys, ["search", "--kind", "dense", "--index", ALPHA / "e5_docs.emb", "--doc-ids", ALPHA / "e5_docs.ids.jsonl",
                 "--queries", ALPHA / "e5_queries.emb", "--query-ids", ALPHA / "e5_queries.ids.jsonl",
                 "--tag", "e5", "--out", tmp_path / "e5.trec"])
    assert len(read_trec(tmp_path / "e5.trec")) > 0
    record = _fails(capsys, ["search", "--kind", "dense", "--index", ALPHA / "e5_docs.emb",
                             "--queries", ALPHA / "e5_queries.emb", "--out", tmp_path / "x.trec"])
    assert record["error"] == "HybridIRError"


def test_fuse_train_and_fuse(tmp_path, capsys):
    _ok(capsys, ["index", "--input", ALPHA / "corpus.jsonl", "--out", tmp_path / "a.bm25"])
    _ok(capsys, ["search", "--kind", "bm25", "--index", tmp_path / "a.bm25", "--queries", ALPHA / "queries.jsonl",
                 "--out", tmp_path / "bm25.trec"])
    _ok(capsys, ["search", "--kind", "dense", "--index", ALPHA / "e5_docs.emb", "--doc-ids", ALPHA / "e5_docs.ids.jsonl",
                 "--queries", ALPHA / "e5_queries.emb", "--query-ids", ALPHA / "e5_queries.ids.jsonl",
                 "--tag", "e5", "--out", tmp_path / "e5.trec"])
    runs = [tmp_path / "bm25.trec", tmp_path / "e5.trec"]
    info = _ok(capsys, ["fuse-train", "--runs", *runs, "--qrels", ALPHA / "qrels.tsv", "--out", tmp_path / "m.lmrt",
                        "--trees", 5, "--max-depth", 2, "--row-subsample", 1.0, "--col-subsample", 1.0])
    assert info == {"trees": 5, "features": 8, "indexes": ["bm25", "e5"]}
    _ok(capsys, ["fuse", "--model", tmp_path / "m.lmrt", "--runs", *runs, "--k", 3, "--out", tmp_path / "h.trec"])
    fused = read_trec(tmp_path / "h.trec")
    assert fused.name == "hybrid" and all(len(fused[q]) <= 3 for q in fused)
    record = _fails(capsys, ["fuse", "--model", tmp_path / "m.lmrt", "--runs", *runs[::-1],
                             "--out", tmp_path / "bad.trec"])
    assert record["error"] == "ValidationError" and "order" in record["message"]


def test_preprocess_matches_golden(tmp_path, capsys):
    prep = FIXTURES / "prep"
    info = _ok(capsys, ["preprocess", "--input", prep / "raw_pairs.jsonl", "--config", prep / "config.json",
                        "--output", tmp_path / "clean.jsonl"])
    assert info == {"input": 30, "kept": 23}
    assert (tmp_path / "clean.jsonl").read_bytes() == (prep / "clean_pairs.jsonl").read_bytes()


def test_losses_check(capsys):
    out = _ok(capsys, ["losses", "check", "--points", 3])
    assert out["ok"] and set(out["max_relative_error"]) == {"margin_mse", "mnr_loss", "distill_mse"}


def test_bench_throughput(capsys):
    out = _ok(capsys, ["bench-throughput", "--queries", 20, "--candidates", 20, "--trees", 5, "--max-depth", 3])
    assert out["n_queries"] == 20 and out["single_thread_qps"] > 0


def test_benchmark_subcommand(tmp_path, capsys):
    assert main(["benchmark", "--config", str(FIXTURES / "toy_bench" / "bench.yaml"),
                 "--output-dir", str(tmp_path / "out")]) == 0
    assert "NDCG@10" in capsys.readouterr().out
    assert (tmp_path / "out" / "summary.json").exists()


def test_parse_error_record_has_path_and_line(tmp_path, capsys):
    bad = tmp_path / "run.trec"
    bad.write_text("q1 Q0 d1 1 1.0 x\nbroken\n")
    record = _fails(capsys, ["evaluate", "--run", bad, "--qrels", ALPHA / "qrels.tsv"])
    assert record["error"] == "ParseError" and record["line"] == 2 and record["path"] == str(bad)


def test_missing_file_record(tmp_path, capsys):
    record = _fails(capsys, ["index", "--input", tmp_path / "nope.jsonl", "--out", tmp_path / "x"])
    assert record["error"] == "FileNotFoundError" and record["path"].endswith("nope.jsonl")


def test_unknown_subcommand_exits_nonzero():
    with pytest.raises(SystemExit) as err:
        main(["frobnicate"])
    assert err.value.code != 0
