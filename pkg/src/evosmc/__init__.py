"""Evolutionary program search by annealed sequential Monte Carlo.

A population of candidate programs is reweighted toward a reward-tilted
target along an adaptive temperature ladder, systematically resampled, and
mutated through short Metropolis-Hastings chains whose proposal kernels
(including LLM-backed ones) are mixed by Thompson sampling.  Multiple
islands run independent schedules and periodically exchange their best
candidates.
"""

from .core import (
    AnnealState,
    Particle,
    Program,
    RewardBounds,
    RewardValue,
    RunConfig,
    derive_rng,
    make_program,
)
from .evaluators import BitstringEvaluator, CallableEvaluator, EvalSpec, SubprocessEvaluator
from .island import EngineResult, init_island, migrate, run_engine, run_iteration
from .resample import compute_weights, systematic_resample
from .schedule import ess, next_lambda

__version__ = "0.1.0"

__all__ = [
    "AnnealState",
    "Particle",
    "Program",
    "RewardBounds",
    "RewardValue",
    "RunConfig",
    "derive_rng",
    "make_program",
    "BitstringEvaluator",
    "CallableEvaluator",
    "EvalSpec",
    "SubprocessEvaluator",
    "EngineResult",
    "init_island",
    "migrate",
    "run_engine",
    "run_iteration",
    "compute_weights",
    "systematic_resample",
    "ess",
    "next_lambda",
    "__version__",
]
