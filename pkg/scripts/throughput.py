#!/usr/bin/env python3
"""Fusion rescoring throughput, with a sweep over pool size and ensemble size.

The default ensemble is 100 complete random trees of depth 6, the worst case
for traversal cost at the default hyperparameters. Pass --model to time a
trained model instead.

    python3 scripts/throughput.py --queries 2000
    python3 scripts/throughput.py --sweep
"""

import argparse
import json

from hybridir.bench import random_ensemble, throughput_bench
from hybridir.hybrid import load_model


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--model")
    parser.add_argument("--queries", type=int, default=2000)
    parser.add_argument("--candidates", type=int, default=200)
    parser.add_argument("--threads", type=int)
    parser.add_argument("--sweep", action="store_true", help="vary candidates and tree count")
    args = parser.parse_args()

    if not args.sweep:
        model = load_model(args.model) if args.model else random_ensemble()
        report = throughput_bench(model, args.queries, args.candidates, threads=args.threads)
        print(json.dumps(report.to_dict(), sort_keys=True))
        print(report.summary())
        return

    for n_trees in (25, 50, 100):
        model = random_ensemble(n_trees=n_trees)
        for candidates in (50, 100, 200, 400):
            report = throughput_bench(model, args.queries, candidates, threads=args.threads)
            us = 1e6 / report.single_thread_qps if report.single_thread_qps else float("nan")
            print(f"trees={n_trees:3d} candidates={candidates:3d} "
                  f"{report.single_thread_qps:8.0f} q/s  {us:7.1f} us/query")


if __name__ == "__main__":
    main()
