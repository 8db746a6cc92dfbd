"""Reward evaluation: the evaluator contract, a subprocess evaluator, and
synthetic in-process evaluators used by tests and oracle experiments.

Evaluators never raise past their boundary: any failure degrades to
RewardValue(reward_floor, valid=False) with the cause recorded.
"""

from __future__ import annotations

import json
import math
import os
import subprocess
import tempfile
from dataclasses import dataclass, field
from typing import Protocol, runtime_checkable

from .core import Program, RewardValue

__all__ = [
    "Evaluator",
    "EvalSpec",
    "SubprocessEvaluator",
    "BitstringEvaluator",
    "CallableEvaluator",
    "evaluate_bitstring",
]

DEFAULT_TIMEOUT_S = 90.0

_ENV_ALLOWLIST = ("PATH", "HOME", "LANG", "LC_ALL", "PYTHONHASHSEED", "TMPDIR")


@runtime_checkable
class Evaluator(Protocol):
    deterministic: bool

    def evaluate(self, program: Program) -> RewardValue: ...


@dataclass(frozen=True)
class EvalSpec:
    """Subprocess protocol: program source goes to a temp file, the command
    is invoked with that path appended, and the last stdout line must be a
    JSON object {"reward": <finite number>}."""

    command: tuple[str, ...]
    timeout_s: float = DEFAULT_TIMEOUT_S
    reward_floor: float = 0.0
    source_suffix: str = ".py"

    def __post_init__(self):
        if not self.command:
            raise ValueError("EvalSpec needs a command")
        if self.timeout_s <= 0:
            raise ValueError("timeout must be > 0")


class SubprocessEvaluator:
    """Hermetic external evaluator: fresh temp working directory per call,
    allow-listed environment, wall-clock timeout."""

    deterministic = False

    def __init__(self, spec: EvalSpec):
        self.spec = spec
        self.last_failure: str | None = None

    def evaluate(self, program: Program) -> RewardValue:
        self.last_failure = None
        floor = RewardValue(self.spec.reward_floor, valid=False)
        with tempfile.TemporaryDirectory(prefix="evosmc-eval-") as workdir:
            src_path = os.path.join(workdir, "candidate" + self.spec.source_suffix)
            with open(src_path, "w", encoding="utf-8") as fh:
                fh.write(program.source)
            env = {k: v for k, v in os.environ.items() if k in _ENV_ALLOWLIST}
            try:
                proc = subprocess.run(
                    [*self.spec.command, src_path],
                    cwd=workdir,
                    env=env,
                    capture_output=True,
                    text=True,
                    timeout=self.spec.timeout_s,
                )
            except subprocess.TimeoutExpired:
                self.last_failure = "Timeout"
                return floor
            except OSError as exc:
                self.last_failure = f"SpawnError: {exc}"
                return floor
        if proc.returncode != 0:
            self.last_failure = f"BadOutput: exit status {proc.returncode}"
            return floor
        lines = [ln for ln in proc.stdout.splitlines() if ln.strip()]
        if not lines:
            self.last_failure = "BadOutput: empty stdout"
            return floor
        try:
            payload = json.loads(lines[-1])
            value = float(payload["reward"])
        except (json.JSONDecodeError, KeyError, TypeError, ValueError):
            self.last_failure = f"BadOutput: unparseable reward line {lines[-1]!r}"
            return floor
        if not math.isfinite(value):
            self.last_failure = "BadOutput: non-finite reward"
            return floor
        return RewardValue(value, valid=True)


def evaluate_bitstring(program: Program, n_bits: int, reward_floor: float = 0.0) -> RewardValue:
    """popcount/n for a valid length-n string over {0,1}; floor otherwise."""
    src = program.source
    if len(src) != n_bits or any(c not in "01" for c in src):
        return RewardValue(reward_floor, valid=False)
    return RewardValue(src.count("1") / n_bits, valid=True)


@dataclass
class BitstringEvaluator:
    """Synthetic desk-scale fixture: reward = popcount / n_bits on {0,1}^n,
    so the reward range is [0, 1] with oscillation 1."""

    n_bits: int
    reward_floor: float = 0.0
    deterministic: bool = True

    def evaluate(self, program: Program) -> RewardValue:
        return evaluate_bitstring(program, self.n_bits, self.reward_floor)


@dataclass
class CallableEvaluator:
    """Wrap a plain function Program -> float; exceptions degrade to floor."""

    fn: object
    reward_floor: float = 0.0
    deterministic: bool = True
    failures: int = field(default=0)

    def evaluate(self, program: Program) -> RewardValue:
        try:
            value = float(self.fn(program))
        except Exception:
            self.failures += 1
            return RewardValue(self.reward_floor, valid=False)
        if not math.isfinite(value):
            self.failures += 1
            return RewardValue(self.reward_floor, valid=False)
        return RewardValue(value, valid=True)
