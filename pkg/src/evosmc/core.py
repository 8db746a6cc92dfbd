"""Shared domain types: programs, particles, anneal state, run configuration.

Everything here is an immutable value object, safe to copy between threads.
RNG streams are derived from the single config seed via `derive_rng` so that
runs are bit-reproducible at fixed parallelism.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field, replace

import numpy as np

__all__ = [
    "EmptySource",
    "Program",
    "RewardValue",
    "Particle",
    "AnnealState",
    "RunConfig",
    "RewardBounds",
    "make_program",
    "effective_beta",
    "derive_rng",
]


class EmptySource(ValueError):
    """Raised when a program is constructed from empty source text."""


def _content_digest(source: str) -> str:
    # blake2b over raw bytes: stable across platforms and process restarts,
    # 64-bit output is plenty for content addressing at our population sizes.
    return hashlib.blake2b(source.encode("utf-8"), digest_size=8).hexdigest()


@dataclass(frozen=True)
class Program:
    """Immutable candidate-solution source text, content-addressed by digest."""

    source: str
    language_tag: str = "python"
    digest: str = field(init=False)

    def __post_init__(self):
        if not self.source:
            raise EmptySource("program source must be non-empty")
        object.__setattr__(self, "digest", _content_digest(self.source))


def make_program(source: str, language_tag: str = "python") -> Program:
    return Program(source=source, language_tag=language_tag)


@dataclass(frozen=True)
class RewardValue:
    """Evaluated reward. `valid` is False for failed evaluations, whose value
    is the configured reward floor (never NaN or infinity)."""

    value: float
    valid: bool = True

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise ValueError(f"reward must be finite, got {self.value!r}")


@dataclass(frozen=True)
class Particle:
    """One program plus its evaluated reward; the unit that is resampled
    and mutated."""

    program: Program
    reward: RewardValue
    born_iteration: int = 0
    island_id: int = 0
    lineage_id: int = 0


@dataclass(frozen=True)
class AnnealState:
    """Temperature-schedule state.

    `lambda_` walks from 0 to 1 strictly increasingly; the effective
    inverse temperature at any point is ``lambda_ * beta_target``.
    """

    lambda_: float = 0.0
    beta_target: float = 20.0
    iteration: int = 0
    terminated: bool = False

    def __post_init__(self):
        if not 0.0 <= self.lambda_ <= 1.0:
            raise ValueError(f"lambda must be in [0, 1], got {self.lambda_}")
        if self.beta_target <= 0:
            raise ValueError("beta_target must be > 0")
        if self.terminated != (self.lambda_ == 1.0):
            raise ValueError("terminated must hold exactly when lambda == 1")


def effective_beta(state: AnnealState) -> float:
    return state.lambda_ * state.beta_target


@dataclass(frozen=True)
class RewardBounds:
    """Known reward range of a task; `delta_r` is the oscillation."""

    r_minus: float
    r_plus: float

    @property
    def delta_r(self) -> float:
        return self.r_plus - self.r_minus

    def __post_init__(self):
        if self.r_plus < self.r_minus:
            raise ValueError("r_plus must be >= r_minus")


KERNEL_IDS = (
    "diff_no_inspo",
    "diff_with_inspo",
    "rewrite_no_inspo",
    "rewrite_with_inspo",
)


@dataclass(frozen=True)
class RunConfig:
    """Engine hyperparameters. Defaults are the reference operating point."""

    n_islands: int = 2
    particles_per_island: int = 8
    n_proposals: int = 2
    beta: float = 20.0
    kappa: float = 0.9
    min_iterations: int = 3
    max_iterations: int = 15
    migration_interval: int = 3
    migration_size: int = 1
    top_k_inspiration: int = 2
    diverse_inspirations: int = 2
    reward_floor: float = 0.0
    seed: int = 0
    kernel_selection: str = "adaptive"  # adaptive | uniform | fixed:<kernel_id>
    acceptance_mode: str = "reward_only"  # reward_only | full_ratio

    def __post_init__(self):
        if self.n_islands < 1:
            raise ValueError("n_islands must be >= 1")
        if self.particles_per_island < 1:
            raise ValueError("particles_per_island must be >= 1")
        if self.n_proposals < 1:
            raise ValueError("n_proposals must be >= 1")
        if self.beta <= 0:
            raise ValueError("beta must be > 0")
        if not 0.0 < self.kappa < 1.0:
            raise ValueError("kappa must be in (0, 1)")
        if self.min_iterations < 1:
            raise ValueError("min_iterations must be >= 1")
        if self.max_iterations < self.min_iterations:
            raise ValueError("max_iterations must be >= min_iterations")
        if self.migration_interval < 1:
            raise ValueError("migration_interval must be >= 1")
        if not 0 <= self.migration_size <= self.particles_per_island:
            raise ValueError("migration_size must be in [0, N]")
        if self.top_k_inspiration < 0 or self.diverse_inspirations < 0:
            raise ValueError("inspiration counts must be >= 0")
        if not math.isfinite(self.reward_floor):
            raise ValueError("reward_floor must be finite")
        if self.kernel_selection not in ("adaptive", "uniform") and not self.kernel_selection.startswith("fixed:"):
            raise ValueError(f"bad kernel_selection {self.kernel_selection!r}")
        if self.acceptance_mode not in ("reward_only", "full_ratio"):
            raise ValueError(f"bad acceptance_mode {self.acceptance_mode!r}")

    def with_seed(self, seed: int) -> "RunConfig":
        return replace(self, seed=seed)


# Stream-derivation rule: one numpy PCG64 generator per (island, purpose),
# seeded by SeedSequence([config.seed, island_id, purpose_code]).  Purpose
# codes are fixed below; adding a purpose never perturbs existing streams.
_RNG_PURPOSES = {
    "init": 0,
    "resample": 1,
    "thompson": 2,
    "mh_accept": 3,
    "proposal": 4,
    "migration": 5,
    "ensemble": 6,
}


def derive_rng(seed: int, island_id: int, purpose: str) -> np.random.Generator:
    """Deterministically derive an independent RNG stream from the run seed."""
    try:
        code = _RNG_PURPOSES[purpose]
    except KeyError:
        raise ValueError(f"unknown rng purpose {purpose!r}") from None
    return np.random.default_rng(np.random.SeedSequence([seed & (2**64 - 1), island_id, code]))
