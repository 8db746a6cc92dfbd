"""The forward kernel: proposal abstraction, MH acceptance, K-step chains,
and the Thompson-sampled kernel mixture.

A one-step move is propose -> evaluate -> accept/reject; a particle is
mutated by running K such steps as a chain whose state carries over between
steps.  Acceptance uses either the reward-only rule (black-box proposers) or
the full ratio (density-known proposers on enumerable spaces).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Protocol, Sequence, runtime_checkable

import numpy as np

from .core import KERNEL_IDS, Particle, Program, RewardValue

__all__ = [
    "DensityUnavailable",
    "MutationContext",
    "ProposalResult",
    "ProposalRecord",
    "ProposalKernel",
    "KernelStats",
    "acceptance_reward_only",
    "acceptance_full_ratio",
    "thompson_select",
    "thompson_update",
    "select_kernel_id",
    "mh_chain",
]


class DensityUnavailable(RuntimeError):
    """The selected kernel does not expose a proposal density."""


@dataclass(frozen=True)
class MutationContext:
    """Everything a proposal kernel may condition on besides the parent."""

    iteration: int
    beta_t: float
    kernel_id: str
    task_description: str = ""
    inspirations: tuple[tuple[Program, RewardValue], ...] = ()


@dataclass(frozen=True)
class ProposalResult:
    """Outcome of one kernel invocation; `candidate` is None when the raw
    response could not be parsed into a program."""

    candidate: Program | None
    kernel_id: str
    raw_response: str = ""
    parse_ok: bool = True

    def __post_init__(self):
        if not self.parse_ok and self.candidate is not None:
            raise ValueError("parse failures carry no candidate")


@dataclass(frozen=True)
class ProposalRecord:
    """One MH step in a chain, kept for the archive whether accepted or not."""

    kernel_id: str
    candidate: Program | None
    reward: RewardValue | None
    parse_ok: bool
    accepted: bool
    acceptance_prob: float
    thompson_success: bool
    raw_response: str = ""


@runtime_checkable
class ProposalKernel(Protocol):
    def propose(self, parent: Program, context: MutationContext, rng: np.random.Generator) -> ProposalResult: ...


@dataclass(frozen=True)
class KernelStats:
    """Beta posterior parameters per kernel; plain success/failure counts."""

    params: Mapping[str, tuple[float, float]] = field(
        default_factory=lambda: {k: (1.0, 1.0) for k in KERNEL_IDS}
    )

    @classmethod
    def fresh(cls, kernel_ids: Sequence[str]) -> "KernelStats":
        return cls(params={k: (1.0, 1.0) for k in kernel_ids})


def acceptance_reward_only(reward_current: float, reward_proposed: float, beta_t: float) -> float:
    """min{1, exp(beta_t * (R' - R))}: always accepts improvements, accepts
    regressions with probability decaying in the reward gap."""
    if beta_t < 0:
        raise ValueError("beta_t must be >= 0")
    return min(1.0, math.exp(min(0.0, beta_t * (reward_proposed - reward_current))))


def acceptance_full_ratio(p_t_ratio: float, forward_density: float, reverse_density: float) -> float:
    """min{1, p_t_ratio * reverse / forward} for density-known kernels."""
    if p_t_ratio <= 0 or forward_density <= 0 or reverse_density <= 0:
        raise ValueError("full-ratio acceptance requires strictly positive inputs")
    return min(1.0, p_t_ratio * reverse_density / forward_density)


def thompson_select(stats: KernelStats, rng: np.random.Generator, available: Sequence[str]) -> str:
    """Sample each available kernel's Beta posterior, return the argmax.
    Ties break toward the earlier kernel in `available` order."""
    if not available:
        raise ValueError("no kernels available")
    best_id, best_draw = None, -1.0
    for kid in available:
        a, b = stats.params[kid]
        draw = rng.beta(a, b)
        if draw > best_draw:
            best_id, best_draw = kid, draw
    return best_id


def thompson_update(stats: KernelStats, kernel_id: str, success: bool) -> KernelStats:
    a, b = stats.params[kernel_id]
    updated = dict(stats.params)
    updated[kernel_id] = (a + 1.0, b) if success else (a, b + 1.0)
    return KernelStats(params=updated)


def select_kernel_id(
    mode: str,
    stats: KernelStats,
    rng: np.random.Generator,
    available: Sequence[str],
) -> str:
    """Kernel choice under the configured selection policy."""
    if not available:
        raise ValueError("no kernels available")
    if mode == "adaptive":
        return thompson_select(stats, rng, available)
    if mode == "uniform":
        return available[int(rng.integers(len(available)))]
    if mode.startswith("fixed:"):
        kid = mode.split(":", 1)[1]
        if kid not in available:
            raise ValueError(f"fixed kernel {kid!r} not among available kernels")
        return kid
    raise ValueError(f"bad kernel_selection {mode!r}")


def _fallback_no_inspo(kernel_id: str, available: Sequence[str]) -> str:
    twin = kernel_id.replace("_with_inspo", "_no_inspo")
    return twin if twin != kernel_id and twin in available else kernel_id


def mh_chain(
    parent: Particle,
    k_steps: int,
    context_builder: Callable[[Program, str], MutationContext],
    kernel_selector: Callable[[np.random.Generator], str],
    kernels: Mapping[str, ProposalKernel],
    evaluator,
    rng: np.random.Generator,
    *,
    acceptance_mode: str = "reward_only",
    prior_log_density: Callable[[Program], float] | None = None,
) -> tuple[Particle, list[ProposalRecord]]:
    """Run a K-step MH chain from `parent` and return the final state plus a
    record of every proposal (accepted, rejected, or failed).

    Per-proposal failures (parse failures, evaluator failures) auto-reject and
    never abort the chain.
    """
    if k_steps < 1:
        raise ValueError("k_steps must be >= 1")

    z_prog = parent.program
    z_reward = parent.reward
    records: list[ProposalRecord] = []

    for _ in range(k_steps):
        kernel_id = kernel_selector(rng)
        context = context_builder(z_prog, kernel_id)
        if not context.inspirations:
            downgraded = _fallback_no_inspo(kernel_id, list(kernels))
            if downgraded != kernel_id:
                kernel_id = downgraded
                context = context_builder(z_prog, kernel_id)
        kernel = kernels[kernel_id]

        result = kernel.propose(z_prog, context, rng)
        if not result.parse_ok or result.candidate is None:
            records.append(
                ProposalRecord(
                    kernel_id=kernel_id,
                    candidate=None,
                    reward=None,
                    parse_ok=False,
                    accepted=False,
                    acceptance_prob=0.0,
                    thompson_success=False,
                    raw_response=result.raw_response,
                )
            )
            continue

        candidate = result.candidate
        reward = evaluator.evaluate(candidate)

        if acceptance_mode == "reward_only":
            alpha = acceptance_reward_only(z_reward.value, reward.value, context.beta_t)
        elif acceptance_mode == "full_ratio":
            density = getattr(kernel, "density", None)
            if density is None:
                raise DensityUnavailable(f"kernel {kernel_id!r} exposes no density")
            forward = density(z_prog, candidate, context)
            reverse = density(candidate, z_prog, context)
            log_prior = 0.0
            if prior_log_density is not None:
                log_prior = prior_log_density(candidate) - prior_log_density(z_prog)
            p_t_ratio = math.exp(log_prior + context.beta_t * (reward.value - z_reward.value))
            alpha = acceptance_full_ratio(p_t_ratio, forward, reverse)
        else:
            raise ValueError(f"bad acceptance_mode {acceptance_mode!r}")

        # Evaluator failures degrade to the floor reward; an invalid reward
        # competes through its floor value with no extra special-casing.
        accepted = bool(rng.uniform() < alpha)
        success = accepted and reward.value >= z_reward.value
        records.append(
            ProposalRecord(
                kernel_id=kernel_id,
                candidate=candidate,
                reward=reward,
                parse_ok=True,
                accepted=accepted,
                acceptance_prob=alpha,
                thompson_success=success,
                raw_response=result.raw_response,
            )
        )
        if accepted:
            z_prog, z_reward = candidate, reward

    mutated = Particle(
        program=z_prog,
        reward=z_reward,
        born_iteration=parent.born_iteration,
        island_id=parent.island_id,
        lineage_id=parent.lineage_id,
    )
    return mutated, records
