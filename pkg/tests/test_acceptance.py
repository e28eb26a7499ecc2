"""Acceptance checks, one criterion each.

Run with ``pytest tests/test_acceptance.py`` (a PASS/FAIL line per criterion is
printed in the terminal summary) or directly with ``python3 tests/test_acceptance.py``.
"""

import itertools
import math
import shutil
import sys
import time
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hybridir import bench
from hybridir.corpus import CorpusRecord, QrelSet
from hybridir.hybrid import LtrParams, build_training_groups, extract_features, fuse, save_model, train_lambdamart
from hybridir.hybrid.features import build_candidate_pool, query_features
from hybridir.hybrid.lambdamart import group_ndcg
from hybridir.losses import distill_mse, margin_mse, mnr_loss
from hybridir.metrics import accuracy_at_1, evaluate_run, mrr_at_k, ndcg_at_k, recall_at_k
from hybridir.runs import RetrievalRun, canonical_sort
from hybridir.sparse import bm25_score, build_bm25_index
from hybridir.synthetic import complementary_runs
from hybridir.textprep import PrepConfig, load_pairs, preprocess_pair, preprocess_pairs, write_pairs

FIXTURES = Path(__file__).parent / "fixtures"


# --- metrics -------------------------------------------------------------------

_PERMS = {n: np.array(list(itertools.permutations(range(n))), dtype=np.int64) for n in range(1, 7)}


def _oracle_metrics(ranking, qrels, k):
    """Direct definitions; IDCG is the best DCG over every ordering of the judged grades."""
    disc = lambda i: 1.0 / math.log2(i + 2)
    dcg = sum(qrels.get(d, 0) * disc(i) for i, d in enumerate(ranking[:k]))
    grades = np.array(list(qrels.values()), dtype=float)
    n = grades.size
    if n:
        dvec = np.array([disc(i) if i < k else 0.0 for i in range(n)])
        idcg = float((grades[_PERMS[n]] * dvec).sum(axis=1).max())
    else:
        idcg = 0.0
    ndcg = dcg / idcg if idcg > 0 else 0.0
    mrr = 0.0
    for i, d in enumerate(ranking[:k]):
        if qrels.get(d, 0) > 0:
            mrr = 1.0 / (i + 1)
            break
    relevant = {d for d, g in qrels.items() if g > 0}
    recall = len(relevant & set(ranking[:k])) / len(relevant) if relevant else None
    acc = 1.0 if ranking and qrels.get(ranking[0], 0) > 0 else 0.0
    return ndcg, mrr, recall, acc


@pytest.mark.criterion("metric oracle equivalence")
def test_metric_oracle_equivalence():
    rng = np.random.default_rng(2024)
    universe = [f"d{i}" for i in range(6)]
    start = time.perf_counter()
    worst = 0.0
    for _ in range(10_000):
        n_judged = int(rng.integers(0, 7))
        judged = rng.choice(universe, size=n_judged, replace=False)
        qrels = {str(d): int(rng.integers(0, 3)) for d in judged}
        n_ret = int(rng.integers(0, 7))
        ranking = [str(d) for d in rng.choice(universe, size=n_ret, replace=False)]
        run = [(d, float(n_ret - i)) for i, d in enumerate(ranking)]
        k = int(rng.integers(1, 8))
        ndcg, mrr, recall, acc = _oracle_metrics(ranking, qrels, k)
        got = (ndcg_at_k(run, qrels, k), mrr_at_k(run, qrels, k), recall_at_k(run, qrels, k),
               accuracy_at_1(run, qrels))
        assert (got[2] is None) == (recall is None)
        pairs = [(got[0], ndcg), (got[1], mrr), (got[3], acc)] + ([(got[2], recall)] if recall is not None else [])
        for a, b in pairs:
            worst = max(worst, abs(a - b))
    elapsed = time.perf_counter() - start
    print(f"max abs difference {worst:.2e} in {elapsed:.1f}s")
    assert worst <= 1e-9
    assert elapsed < 60


# --- BM25 --------------------------------------------------------------------


def _docs(mapping):
    return [CorpusRecord(k, v) for k, v in mapping.items()]


# 5 docs, avgdl = 13/5 = 2.6, k1 = 0.9, b = 0.4.
# "w": df = 2 -> IDF = ln(1 + 3.5/2.5) = ln 2.4. For d5 (dl 1):
# K = 0.9 * (0.6 + 0.4 * 1/2.6) = 0.678462, tf part = 1/1.678462 = 0.595788, score 0.521590.
FIVE_DOCS = {"d1": "x x y", "d2": "y z", "d3": "z z z", "d4": "x y z w", "d5": "w"}
FIVE_DOC_SCORES = {
    ("x", "w"): {"d1": 0.5924567197085215, "d4": 0.8362302414107787, "d5": 0.5215899901741842},
    ("z",): {"d2": 0.2966534508689641, "d3": 0.4088071475802178, "d4": 0.25741934274522166},
    ("y",): {"d1": 0.27564730564614215, "d2": 0.2966534508689641, "d4": 0.25741934274522166},
}


def _oracle_bm25(tokens: dict, query: list, k1=0.9, b=0.4):
    n = len(tokens)
    avgdl = sum(len(t) for t in tokens.values()) / n
    out = {}
    for d, toks in tokens.items():
        s = 0.0
        for t in query:
            tf = toks.count(t)
            if tf:
                df = sum(t in other for other in tokens.values())
                idf = math.log(1 + (n - df + 0.5) / (df + 0.5))
                s += idf * tf / (tf + k1 * (1 - b + b * len(toks) / avgdl))
        out[d] = s
    return out


@pytest.mark.criterion("bm25 fixture and exhaustive oracle")
def test_bm25_worked_example():
    index = build_bm25_index(_docs({"d1": "x x y", "d2": "y z"}))
    assert abs(bm25_score(index, ["x"], "d1") - math.log(2) * 2 / 2.972) < 1e-12
    assert abs(bm25_score(index, ["x"], "d1") - 0.4665) < 1e-4


@pytest.mark.criterion("bm25 fixture and exhaustive oracle")
def test_bm25_five_document_fixture():
    index = build_bm25_index(_docs(FIVE_DOCS))
    for query, expected in FIVE_DOC_SCORES.items():
        for d in FIVE_DOCS:
            assert abs(bm25_score(index, list(query), d) - expected.get(d, 0.0)) < 1e-6
        ranking = index.search(" ".join(query), 10)
        want = sorted(expected.items(), key=lambda kv: (-kv[1], kv[0]))
        assert [d for d, _ in ranking] == [d for d, _ in want]


@pytest.mark.criterion("bm25 fixture and exhaustive oracle")
def test_bm25_search_matches_exhaustive_rescoring():
    rng = np.random.default_rng(7)
    vocab = [f"t{i}" for i in range(12)]
    for _ in range(1000):
        n_docs = int(rng.integers(1, 51))
        tokens = {f"doc{j:02d}": [str(w) for w in rng.choice(vocab, size=int(rng.integers(0, 9)))]
                  for j in range(n_docs)}
        index = build_bm25_index(_docs({d: " ".join(t) for d, t in tokens.items()}))
        query = [str(w) for w in rng.choice(vocab, size=int(rng.integers(1, 4)))]
        k = int(rng.integers(1, n_docs + 2))
        oracle = _oracle_bm25(tokens, query)
        want = sorted(((d, s) for d, s in oracle.items() if s > 0), key=lambda kv: (-kv[1], kv[0]))[:k]
        got = index.search_terms(query, k)
        assert [d for d, _ in got] == [d for d, _ in want]
        assert np.allclose([s for _, s in got], [s for _, s in want], rtol=0, atol=1e-9)


# --- losses --------------------------------------------------------------------


def _central_diff(f, x, h=1e-5):
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        orig = x[idx]
        x[idx] = orig + h
        fp = f(x)
        x[idx] = orig - h
        fm = f(x)
        x[idx] = orig
        g[idx] = (fp - fm) / (2 * h)
    return g


def _rel(a, b):
    scale = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / scale)


@pytest.mark.criterion("loss gradient checks")
def test_loss_gradients_match_finite_differences():
    rng = np.random.default_rng(11)
    worst = {"margin_mse": 0.0, "mnr_loss": 0.0, "distill_mse": 0.0}
    for _ in range(20):
        s_pos, s_neg, p, n = rng.normal(size=(4, 5))
        _, gp, gn = margin_mse(s_pos, s_neg, p, n)
        worst["margin_mse"] = max(worst["margin_mse"],
                                  _rel(gp, _central_diff(lambda v: margin_mse(s_pos, s_neg, v, n)[0], p.copy())),
                                  _rel(gn, _central_diff(lambda v: margin_mse(s_pos, s_neg, p, v)[0], n.copy())))

        q, dp, dn = rng.normal(size=(3, 4, 6))
        tau = 0.5  # well-conditioned for finite differences; tau=0.01 is checked below
        _, gq, gdp, gdn = mnr_loss(q, dp, dn, tau)
        worst["mnr_loss"] = max(worst["mnr_loss"],
                                _rel(gq, _central_diff(lambda v: mnr_loss(v, dp, dn, tau)[0], q.copy())),
                                _rel(gdp, _central_diff(lambda v: mnr_loss(q, v, dn, tau)[0], dp.copy())),
                                _rel(gdn, _central_diff(lambda v: mnr_loss(q, dp, v, tau)[0], dn.copy())))

        t, s = rng.normal(size=(2, 3, 5))
        _, gs = distill_mse(t, s)
        worst["distill_mse"] = max(worst["distill_mse"], _rel(gs, _central_diff(lambda v: distill_mse(t, v)[0], s.copy())))
    print("max relative errors:", worst)
    assert all(v < 1e-4 for v in worst.values()), worst


@pytest.mark.criterion("loss gradient checks")
def test_mnr_gradient_at_default_temperature():
    # tau = 0.01 amplifies logits 100x; scale the inputs so the softmax is not saturated
    rng = np.random.default_rng(12)
    for _ in range(20):
        base = rng.normal(size=6)
        q, dp, dn = base + 0.01 * rng.normal(size=(3, 3, 6))
        _, gq, _, _ = mnr_loss(q, dp, dn)
        assert _rel(gq, _central_diff(lambda v: mnr_loss(v, dp, dn)[0], q.copy())) < 1e-4


@pytest.mark.criterion("loss gradient checks")
def test_mnr_hand_value_ln2():
    # K=2, every query orthogonal to every document: all s = 0, loss = 0 + log(e^0) + log(2 e^0) = ln 2
    q = np.array([[1.0, 0, 0, 0], [0, 1.0, 0, 0]])
    d = np.array([[0, 0, 1.0, 0], [0, 0, 0, 1.0]])
    loss = mnr_loss(q, d, d.copy())[0]
    assert abs(loss - math.log(2)) < 1e-9


# --- hybrid features ------------------------------------------------------------

_ranking = st.dictionaries(st.sampled_from([f"d{i}" for i in range(15)]),
                           st.floats(-1e6, 1e6, allow_nan=False, width=32), max_size=12)


@pytest.mark.criterion("hybrid feature contract")
@settings(max_examples=300)
@given(st.lists(_ranking, min_size=1, max_size=4), st.integers(1, 12))
def test_feature_contract(raw_runs, depth):
    runs = [RetrievalRun({"q": canonical_sort(r.items())})["q"] for r in raw_runs]
    pool, x = query_features(runs, depth)
    assert pool == build_candidate_pool(runs, depth)
    for row, cand in zip(x, pool):
        assert np.array_equal(row, extract_features(runs, cand, depth))
        for i, run in enumerate(runs):
            score, hi, lo, present = row[4 * i: 4 * i + 4]
            top = dict(run[:depth])
            if present == 0:
                assert (score, hi, lo) == (0, 0, 0)
                assert cand not in top
            else:
                assert present == 1 and lo <= score <= hi
                assert score == top[cand]


# --- fusion efficacy, determinism ---------------------------------------------


def _subset(run, ids):
    return RetrievalRun({q: run[q] for q in ids}, name=run.name)


@pytest.fixture(scope="module")
def synthetic():
    return complementary_runs(seed=0)


@pytest.mark.criterion("fusion efficacy on synthetic data")
def test_fusion_beats_best_single_index(synthetic):
    start = time.perf_counter()
    d = synthetic
    train_qrels = QrelSet({q: d.qrels[q] for q in d.train_ids})
    test_qrels = QrelSet({q: d.qrels[q] for q in d.test_ids})
    train_runs = [_subset(r, d.train_ids) for r in d.runs]
    test_runs = [_subset(r, d.test_ids) for r in d.runs]
    groups = build_training_groups(train_runs, train_qrels)
    model = train_lambdamart(groups, LtrParams(), seed=0, index_names=[r.name for r in d.runs])
    fused = fuse(test_runs, model, k=100)
    ndcg = lambda run: evaluate_run(run, test_qrels).means["NDCG@10"]
    singles = [ndcg(r) for r in test_runs]
    got = ndcg(fused)
    elapsed = time.perf_counter() - start
    print(f"held-out NDCG@10 fused {got:.4f} vs singles {singles} ({elapsed:.1f}s)")
    assert got >= max(singles) + 0.05
    assert elapsed < 120


@pytest.fixture(scope="module")
def no_subsample_training(synthetic, tmp_path_factory):
    d = synthetic
    qrels = QrelSet({q: d.qrels[q] for q in d.train_ids})
    groups = build_training_groups([_subset(r, d.train_ids) for r in d.runs], qrels)
    bounds = np.cumsum([0] + [g.features.shape[0] for g in groups])
    params = LtrParams(row_subsample=1.0, col_subsample_per_tree=1.0)
    history = []

    def monitor(_round, scores):
        history.append(np.mean([group_ndcg(scores[a:b], g.labels, 10)
                                for a, b, g in zip(bounds[:-1], bounds[1:], groups)]))

    out = tmp_path_factory.mktemp("models")
    first = train_lambdamart(groups, params, seed=3, on_round=monitor)
    second = train_lambdamart(groups, params, seed=3)
    save_model(first, out / "a.lmrt")
    save_model(second, out / "b.lmrt")
    return (out / "a.lmrt").read_bytes(), (out / "b.lmrt").read_bytes(), np.array(history)


@pytest.mark.criterion("lambdamart determinism and monotone training ndcg")
def test_lambdamart_byte_identical_models(no_subsample_training):
    a, b, _ = no_subsample_training
    assert a == b


@pytest.mark.criterion("lambdamart determinism and monotone training ndcg")
def test_lambdamart_training_ndcg_non_decreasing(no_subsample_training):
    _, _, history = no_subsample_training
    steps = np.diff(history)
    summary = f"rounds {history.size}, decreasing steps {int((steps < 0).sum())}, worst {steps.min():.3e}"
    print(summary)
    assert (steps >= 0).all(), summary


# --- throughput ------------------------------------------------------------------


@pytest.mark.criterion("rescoring throughput")
def test_throughput_single_thread():
    model = bench.random_ensemble(n_trees=100, max_depth=6, n_indexes=2, seed=0)
    report = bench.throughput_bench(model, n_queries=2000, candidates_per_query=200, threads=1)
    print(report.summary())
    assert report.n_trees == 100 and report.max_depth == 6
    assert report.single_thread_qps >= 500


# --- preprocessing ---------------------------------------------------------------


@pytest.mark.criterion("preprocessing golden files")
def test_preprocessing_golden_files(tmp_path):
    prep = FIXTURES / "prep"
    config = PrepConfig.from_file(prep / "config.json")
    raw = load_pairs(prep / "raw_pairs.jsonl")
    assert len(raw) == 30
    out = tmp_path / "clean.jsonl"
    write_pairs(preprocess_pairs(raw, config), out)
    assert out.read_bytes() == (prep / "clean_pairs.jsonl").read_bytes()


@pytest.mark.criterion("preprocessing golden files")
def test_preprocessing_idempotent_on_fixture():
    prep = FIXTURES / "prep"
    config = PrepConfig.from_file(prep / "config.json")
    for pair in load_pairs(prep / "raw_pairs.jsonl"):
        once = preprocess_pair(pair, config)
        if once is not None:
            assert preprocess_pair(once, config) == once


# --- end to end -------------------------------------------------------------------

C = 1 / math.log2(3)  # NDCG@10 with the single relevant doc at rank 2
# Toy datasets (scripts/make_toy_benchmark.py). Rank of the relevant doc per query:
#   bm25   alpha 1,2      beta 2,1,none   gamma 1,1
#   splade alpha 1,1      beta 2,2,1      gamma 1,2
#   e5     alpha 1,2      beta 1,1,1      gamma 2,1
# Groups: A = {alpha, beta}, B = {gamma}; overall = mean of the three datasets.
HAND_NDCG = {
    "bm25": {"alpha": (1 + C) / 2, "beta": (1 + C) / 3, "gamma": 1.0},
    "splade": {"alpha": 1.0, "beta": (1 + 2 * C) / 3, "gamma": (1 + C) / 2},
    "e5": {"alpha": (1 + C) / 2, "beta": 1.0, "gamma": (1 + C) / 2},
}


def _run_toy(root: Path) -> dict:
    shutil.copytree(FIXTURES / "toy_bench", root)
    config = bench.BenchmarkConfig.from_file(root / "bench.yaml")
    return bench.run_benchmark(config)


@pytest.mark.criterion("end-to-end toy benchmark")
def test_end_to_end_toy_benchmark(tmp_path):
    first = _run_toy(tmp_path / "one")
    _run_toy(tmp_path / "two")
    out1, out2 = tmp_path / "one" / "out", tmp_path / "two" / "out"
    files1 = sorted(p.relative_to(out1) for p in out1.rglob("*") if p.is_file())
    files2 = sorted(p.relative_to(out2) for p in out2.rglob("*") if p.is_file())
    assert files1 == files2 and len(files1) == 2 * 4 * 3 + 3
    for rel in files1:
        assert (out1 / rel).read_bytes() == (out2 / rel).read_bytes(), rel

    table = first["groups"]["NDCG@10"]
    for model, per_ds in HAND_NDCG.items():
        want = {"A": (per_ds["alpha"] + per_ds["beta"]) / 2, "B": per_ds["gamma"],
                "overall": sum(per_ds.values()) / 3}
        for key, value in want.items():
            assert abs(table[model][key] - value) < 1e-9, (model, key)

    # hybrid: recompute group means from the per-query reports
    per_ds = {}
    for ds in ("alpha", "beta", "gamma"):
        report = bench.load_report(out1 / "reports" / "hybrid" / f"{ds}.json")
        vals = [v["NDCG@10"] for v in report.per_query.values()]
        per_ds[ds] = sum(vals) / len(vals)
    assert abs(table["hybrid"]["A"] - (per_ds["alpha"] + per_ds["beta"]) / 2) < 1e-9
    assert abs(table["hybrid"]["overall"] - sum(per_ds.values()) / 3) < 1e-9


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
