"""End-to-end benchmark reproduction.

Generates a hard training set and a held-out set, trains the speedup model
by imitating the exact solver, then prints the method-comparison table
(validity, F1 against gold and against the solver, oracle call counts) and
a separate wall-clock table.  Everything is seeded; rerunning with the same
seed reproduces the metric table byte for byte.

Usage: python scripts/reproduce_benchmark.py [--seed N] [--train-size N]
       [--test-size N] [--epochs N] [--width N] [--repeat N]
"""
import argparse
import sys
import time

import numpy as np

from speedup_search.er_task import ERFeatureExtractor, build_instance
from speedup_search.evaluation import evaluate, metrics_lines, timing_lines
from speedup_search.learning import train


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--train-size", type=int, default=300)
    parser.add_argument("--test-size", type=int, default=1000)
    parser.add_argument("--epochs", type=int, default=5)
    parser.add_argument("--width", type=int, default=4)
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)

    rng = np.random.default_rng(args.seed)
    train_set = [build_instance(2, rng, "hard") for _ in range(args.train_size)]
    test_set = [build_instance(2, rng, "hard") for _ in range(args.test_size)]

    start = time.perf_counter()
    result = train(
        [er.problem for er in train_set],
        width=args.width,
        epochs=args.epochs,
        extractor=ERFeatureExtractor(train_set[0].layout),
    )
    print(
        f"training: {result.model.update_count} updates over "
        f"{result.epochs_run} epochs in {time.perf_counter() - start:.1f}s "
        f"(per epoch: {result.model.epoch_log})"
    )

    report = evaluate(
        test_set, result.model,
        widths=(1,), thetas=(0.0, 0.25, 0.5), repeat=args.repeat,
    )
    print("\nmetrics (deterministic):")
    for line in metrics_lines(report):
        print("  " + line)
    print("\nwall clock (mean +/- std seconds per instance):")
    for line in timing_lines(report):
        print("  " + line)
    return 0


if __name__ == "__main__":
    sys.exit(main())
