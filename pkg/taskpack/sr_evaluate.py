#!/usr/bin/env python3
"""Symbolic-regression example evaluator.

Usage: sr_evaluate.py <program.py>

The candidate program must define ``predict(x1, x2) -> float``.  The reward
is -log10(MSE) over the shipped dataset, capped at 12.0 (an exact fit would
otherwise be -log10(0)).  The last stdout line is {"reward": <float>}; any
failure to load or run the program exits nonzero, which the consuming
engine maps to its floor reward.
"""

import csv
import importlib.util
import json
import math
import os
import sys

REWARD_CEILING = 12.0
DATASET = os.path.join(os.path.dirname(os.path.abspath(__file__)), "data", "sr_dataset_v1.csv")


def load_dataset(path):
    with open(path, newline="") as fh:
        return [(float(r["x1"]), float(r["x2"]), float(r["y"])) for r in csv.DictReader(fh)]


def load_predict(program_path):
    spec = importlib.util.spec_from_file_location("candidate", program_path)
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    predict = getattr(module, "predict", None)
    if not callable(predict):
        raise TypeError("program must define a callable predict(x1, x2)")
    return predict


def main(argv):
    if len(argv) != 2:
        print("usage: sr_evaluate.py <program.py>", file=sys.stderr)
        return 2
    predict = load_predict(argv[1])
    rows = load_dataset(DATASET)
    mse = sum((float(predict(x1, x2)) - y) ** 2 for x1, x2, y in rows) / len(rows)
    if not math.isfinite(mse):
        raise ValueError("non-finite predictions")
    reward = REWARD_CEILING if mse <= 10.0**-REWARD_CEILING else -math.log10(mse)
    print(json.dumps({"reward": reward}))
    return 0


if __name__ == "__main__":
    sys.exit(main(sys.argv))
