#!/usr/bin/env python3
"""Learned fusion on two synthetic, complementary indexes.

Each index ranks the relevant documents first on its own half of the queries
and is random on the other half. The script trains LambdaMART on the training
queries and reports held-out NDCG@10 for each index alone and for the fused
run, optionally sweeping seeds.

    python3 scripts/fusion_synthetic.py --seeds 0 1 2
"""

import argparse
import json
import time

from hybridir.corpus import QrelSet
from hybridir.hybrid import LtrParams, build_training_groups, fuse, train_lambdamart
from hybridir.metrics import evaluate_run
from hybridir.runs import RetrievalRun
from hybridir.synthetic import complementary_runs


def subset(run, qids):
    return RetrievalRun({q: run[q] for q in qids if q in run}, name=run.name)


def one_seed(seed, n_queries, n_train, trees):
    data = complementary_runs(n_queries=n_queries, n_train=n_train, seed=seed)
    train_qrels = QrelSet({q: data.qrels[q] for q in data.train_ids})
    test_qrels = QrelSet({q: data.qrels[q] for q in data.test_ids})
    groups = build_training_groups([subset(r, data.train_ids) for r in data.runs], train_qrels)
    start = time.perf_counter()
    model = train_lambdamart(groups, LtrParams(n_trees=trees), seed=seed,
                             index_names=[r.name for r in data.runs])
    train_seconds = time.perf_counter() - start
    test_runs = [subset(r, data.test_ids) for r in data.runs]
    ndcg = lambda run: evaluate_run(run, test_qrels).means["NDCG@10"]
    row = {r.name: ndcg(r) for r in test_runs}
    row["fused"] = ndcg(fuse(test_runs, model, k=100))
    row["seed"] = seed
    row["train_seconds"] = round(train_seconds, 2)
    return row


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--seeds", type=int, nargs="+", default=[0])
    parser.add_argument("--queries", type=int, default=200)
    parser.add_argument("--train", type=int, default=100)
    parser.add_argument("--trees", type=int, default=100)
    args = parser.parse_args()
    for seed in args.seeds:
        row = one_seed(seed, args.queries, args.train, args.trees)
        print(json.dumps(row, sort_keys=True))


if __name__ == "__main__":
    main()
