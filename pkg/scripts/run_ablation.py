#!/usr/bin/env python3
"""Generate the synthetic benchmark and run the full 5-arm ablation matrix
through the CLI, leaving all artifacts (per-arm checkpoints, scores, and the
comparison table) under the given output directory.

Usage: python3 scripts/run_ablation.py --out runs/ablation [--seed 1]
"""

import argparse
import json
import os
import sys

from mcoc.cli import main as cli
from mcoc.data import benchmark_spec
from mcoc.training import benchmark_train_config


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="runs/ablation")
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()
    os.makedirs(args.out, exist_ok=True)

    train_spec = os.path.join(args.out, "train_spec.json")
    test_spec = os.path.join(args.out, "test_spec.json")
    with open(train_spec, "w") as fh:
        json.dump(benchmark_spec(args.seed, train=True).to_dict(), fh)
    with open(test_spec, "w") as fh:
        json.dump(benchmark_spec(args.seed, train=False).to_dict(), fh)
    config = os.path.join(args.out, "train_config.json")
    with open(config, "w") as fh:
        json.dump(benchmark_train_config(args.seed).to_dict(), fh)

    steps = [
        ["gen", "--spec", train_spec, "--out", os.path.join(args.out, "train_data")],
        ["gen", "--spec", test_spec, "--out", os.path.join(args.out, "test_data")],
        ["ablate", "--config", config,
         "--data", os.path.join(args.out, "train_data", "data.jsonl"),
         "--test", os.path.join(args.out, "test_data", "data.jsonl"),
         "--out", os.path.join(args.out, "matrix")],
    ]
    for argv in steps:
        rc = cli(argv)
        if rc != 0:
            sys.exit(rc)
    print(f"ablation table: {os.path.join(args.out, 'matrix', 'ablation.csv')}")


if __name__ == "__main__":
    main()
