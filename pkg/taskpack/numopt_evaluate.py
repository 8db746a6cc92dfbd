#!/usr/bin/env python3
"""Toy numeric-optimization example evaluator.

Usage: numopt_evaluate.py <program.py>

The candidate program must define ``solution() -> sequence of 4 floats``.
The reward is 1 / (1 + Rosenbrock(v)), so it lies in (0, 1] and reaches 1
exactly at v = (1, 1, 1, 1).  Output and failure semantics follow the same
subprocess contract as sr_evaluate.py.
"""

import importlib.util
import json
import math
import sys

DIMENSION = 4


def rosenbrock(v):
    return sum(100.0 * (v[i + 1] - v[i] ** 2) ** 2 + (1.0 - v[i]) ** 2 for i in range(len(v) - 1))


def main(argv):
    if len(argv) != 2:
        print("usage: numopt_evaluate.py <program.py>", file=sys.stderr)
        return 2
    spec = importlib.util.spec_from_file_location("candidate", argv[1])
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    solution = getattr(module, "solution", None)
    if not callable(solution):
        raise TypeError("program must define a callable solution()")
    v = [float(x) for x in solution()]
    if len(v) != DIMENSION:
        raise ValueError(f"solution must have {DIMENSION} components, got {len(v)}")
    value = rosenbrock(v)
    if not math.isfinite(value):
        raise ValueError("non-finite objective")
    print(json.dumps({"reward": 1.0 / (1.0 + value)}))
    return 0


if __name__ == "__main__":
    sys.exit(main(sys.argv))
