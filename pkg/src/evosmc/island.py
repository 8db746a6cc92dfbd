"""Per-island orchestration of the sampler loop, inter-island migration,
and the multi-island engine entry point.

One iteration is: choose the next temperature by ESS bisection, reweight
and systematically resample parents, mutate every parent through a K-step
MH chain, archive every proposal, and advance the anneal state.  Islands
run independent schedules and exchange top particles every
`migration_interval` epochs.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .archive import Archive, ArchiveEntry, EmbeddingProvider
from .core import AnnealState, Particle, Program, RunConfig, derive_rng
from .mutate import (
    KernelStats,
    MutationContext,
    ProposalKernel,
    mh_chain,
    select_kernel_id,
    thompson_update,
)
from .resample import compute_weights, systematic_resample
from .schedule import advance, next_lambda

__all__ = ["InitFailure", "IslandState", "IslandDeps", "init_island", "run_iteration", "migrate", "run_engine", "EngineResult"]

logger = logging.getLogger(__name__)


class InitFailure(RuntimeError):
    """Every initial particle failed evaluation."""


def _no_emit(kind: str, payload: dict) -> None:
    pass


@dataclass
class IslandState:
    island_id: int
    particles: list[Particle]
    anneal: AnnealState
    kernel_stats: KernelStats
    rngs: dict[str, np.random.Generator]
    epoch: int = 0
    archive: Archive = field(default_factory=Archive)
    proposal_count: int = 0

    @property
    def terminated(self) -> bool:
        return self.anneal.terminated

    def best_particle(self) -> Particle:
        return max(self.particles, key=lambda p: p.reward.value)


@dataclass
class IslandDeps:
    config: RunConfig
    kernels: Mapping[str, ProposalKernel]
    evaluator: object
    task_description: str = ""
    prior_log_density: Callable[[Program], float] | None = None
    emit: Callable[[str, dict], None] = _no_emit


def init_island(
    config: RunConfig,
    prior: Callable[[np.random.Generator], Program],
    evaluator,
    island_id: int,
    embedding: EmbeddingProvider | None = None,
    emit: Callable[[str, dict], None] = _no_emit,
) -> IslandState:
    """Draw N particles from the prior proposal and evaluate each."""
    rngs = {
        purpose: derive_rng(config.seed, island_id, purpose)
        for purpose in ("init", "resample", "thompson", "mh_accept", "proposal")
    }
    archive = Archive(embedding=embedding)
    particles: list[Particle] = []
    for n in range(config.particles_per_island):
        program = prior(rngs["init"])
        reward = evaluator.evaluate(program)
        particle = Particle(
            program=program, reward=reward, born_iteration=0, island_id=island_id, lineage_id=n
        )
        particles.append(particle)
        archive.record(
            ArchiveEntry(
                program=program,
                reward=reward,
                iteration=0,
                kernel_id="init",
                accepted=True,
                island_id=island_id,
            )
        )
        emit(
            "init_particle",
            {
                "island": island_id,
                "n": n,
                "digest": program.digest,
                "reward": reward.value,
                "valid": reward.valid,
            },
        )
    if not any(p.reward.valid for p in particles):
        raise InitFailure(f"island {island_id}: all {config.particles_per_island} initial evaluations failed")
    return IslandState(
        island_id=island_id,
        particles=particles,
        anneal=AnnealState(lambda_=0.0, beta_target=config.beta, iteration=0, terminated=False),
        kernel_stats=KernelStats(params={}),  # filled once the kernel set is known
        rngs=rngs,
        archive=archive,
    )


def run_iteration(state: IslandState, deps: IslandDeps) -> IslandState:
    """Execute one full sampler iteration in place and return the state."""
    config = deps.config
    if state.terminated:
        raise RuntimeError(f"island {state.island_id} already terminated")
    if not state.kernel_stats.params:
        state.kernel_stats = KernelStats.fresh(list(deps.kernels))

    rewards = [p.reward.value for p in state.particles]
    t_next = state.anneal.iteration + 1

    lam = next_lambda(rewards, state.anneal, config.kappa, config.min_iterations)
    if t_next >= config.max_iterations:
        # Hard iteration cap: force the final stage to the endpoint.
        lam = 1.0
    delta_beta = (lam - state.anneal.lambda_) * config.beta
    beta_t = lam * config.beta
    n = len(state.particles)
    deps.emit(
        "iteration_start",
        {
            "island": state.island_id,
            "t": t_next,
            "lambda": lam,
            "delta_beta": delta_beta,
            "beta_t": beta_t,
        },
    )

    weights = compute_weights(rewards, delta_beta)
    from .schedule import ess as _ess  # local import avoids cycle at module load

    deps.emit(
        "weights",
        {
            "island": state.island_id,
            "t": t_next,
            "normalized": list(weights.normalized),
            "ess": _ess(rewards, state.anneal.lambda_, lam, config.beta),
            "rewards": rewards,
        },
    )
    ancestors = systematic_resample(weights, state.rngs["resample"])
    deps.emit(
        "resample",
        {"island": state.island_id, "t": t_next, "ancestors": list(ancestors.indices)},
    )

    available = list(deps.kernels)

    def context_builder(parent_prog: Program, kernel_id: str) -> MutationContext:
        if kernel_id.endswith("_with_inspo"):
            inspirations = tuple(
                state.archive.select_inspirations(
                    parent_prog, config.top_k_inspiration, config.diverse_inspirations
                )
            )
        else:
            inspirations = ()
        return MutationContext(
            iteration=t_next,
            beta_t=beta_t,
            kernel_id=kernel_id,
            task_description=deps.task_description,
            inspirations=inspirations,
        )

    new_particles: list[Particle] = []
    for slot, ancestor_idx in enumerate(ancestors.indices):
        parent = state.particles[ancestor_idx]
        parent = Particle(
            program=parent.program,
            reward=parent.reward,
            born_iteration=parent.born_iteration,
            island_id=state.island_id,
            lineage_id=ancestor_idx,
        )
        stats_snapshot = state.kernel_stats

        def kernel_selector(rng: np.random.Generator) -> str:
            return select_kernel_id(config.kernel_selection, stats_snapshot, rng, available)

        mutated, records = mh_chain(
            parent,
            config.n_proposals,
            context_builder,
            kernel_selector,
            deps.kernels,
            deps.evaluator,
            state.rngs["mh_accept"],
            acceptance_mode=config.acceptance_mode,
            prior_log_density=deps.prior_log_density,
        )
        for k, rec in enumerate(records):
            state.proposal_count += 1
            if rec.candidate is not None and rec.reward is not None:
                state.archive.record(
                    ArchiveEntry(
                        program=rec.candidate,
                        reward=rec.reward,
                        iteration=t_next,
                        kernel_id=rec.kernel_id,
                        accepted=rec.accepted,
                        island_id=state.island_id,
                    )
                )
            state.kernel_stats = thompson_update(
                state.kernel_stats, rec.kernel_id, rec.thompson_success
            )
            deps.emit(
                "proposal",
                {
                    "island": state.island_id,
                    "t": t_next,
                    "slot": slot,
                    "step": k,
                    "kernel_id": rec.kernel_id,
                    "parse_ok": rec.parse_ok,
                    "accepted": rec.accepted,
                    "acceptance_prob": rec.acceptance_prob,
                    "reward": rec.reward.value if rec.reward is not None else None,
                    "digest": rec.candidate.digest if rec.candidate is not None else None,
                },
            )
        if mutated.program.digest != parent.program.digest:
            mutated = Particle(
                program=mutated.program,
                reward=mutated.reward,
                born_iteration=t_next,
                island_id=state.island_id,
                lineage_id=ancestor_idx,
            )
        new_particles.append(mutated)

    state.particles = new_particles
    state.anneal = advance(state.anneal, lam)
    state.epoch += 1
    deps.emit(
        "iteration_end",
        {
            "island": state.island_id,
            "t": state.anneal.iteration,
            "lambda": state.anneal.lambda_,
            "terminated": state.terminated,
            "best_reward": state.best_particle().reward.value,
            "mean_reward": float(np.mean([p.reward.value for p in state.particles])),
        },
    )
    assert len(state.particles) == n
    return state


def _top_m(particles: list[Particle], m: int) -> list[Particle]:
    return sorted(particles, key=lambda p: (-p.reward.value, p.born_iteration, p.lineage_id))[:m]


def migrate(
    islands: list[IslandState],
    m: int,
    rng: np.random.Generator,
    emit: Callable[[str, dict], None] = _no_emit,
) -> list[IslandState]:
    """Each island sends copies of its top-m particles to one uniformly chosen
    other island; receivers keep the top N of the merged multiset."""
    if m == 0:
        return islands
    if len(islands) < 2:
        logger.warning("migration requested with a single island; no-op")
        return islands
    incoming: dict[int, list[Particle]] = {isl.island_id: [] for isl in islands}
    routes = []
    for idx, isl in enumerate(islands):
        others = [j for j in range(len(islands)) if j != idx]
        target = others[int(rng.integers(len(others)))]
        migrants = _top_m(isl.particles, m)
        incoming[islands[target].island_id].extend(migrants)
        routes.append(
            {
                "from": isl.island_id,
                "to": islands[target].island_id,
                "digests": [p.program.digest for p in migrants],
            }
        )
    for isl in islands:
        merged = isl.particles + [
            Particle(
                program=p.program,
                reward=p.reward,
                born_iteration=p.born_iteration,
                island_id=isl.island_id,
                lineage_id=p.lineage_id,
            )
            for p in incoming[isl.island_id]
        ]
        n = len(isl.particles)
        isl.particles = sorted(
            merged, key=lambda p: (-p.reward.value, p.born_iteration, p.lineage_id)
        )[:n]
    emit("migration", {"routes": routes})
    return islands


@dataclass
class EngineResult:
    islands: list[IslandState]
    total_proposals: int
    epochs: int

    def best_particle(self) -> Particle:
        return max((isl.best_particle() for isl in self.islands), key=lambda p: p.reward.value)


def run_engine(
    config: RunConfig,
    *,
    kernels: Mapping[str, ProposalKernel],
    evaluator,
    prior: Callable[[np.random.Generator], Program],
    task_description: str = "",
    prior_log_density: Callable[[Program], float] | None = None,
    embedding: EmbeddingProvider | None = None,
    emit: Callable[[str, dict], None] = _no_emit,
    islands: list[IslandState] | None = None,
    start_epoch: int = 0,
    migration_rng: np.random.Generator | None = None,
) -> EngineResult:
    """Run the full multi-island loop until every island terminates.

    `islands`/`start_epoch` allow resuming from a reconstructed checkpoint.
    """
    deps = IslandDeps(
        config=config,
        kernels=kernels,
        evaluator=evaluator,
        task_description=task_description,
        prior_log_density=prior_log_density,
        emit=emit,
    )
    if islands is None:
        islands = [
            init_island(config, prior, evaluator, island_id, embedding=embedding, emit=emit)
            for island_id in range(config.n_islands)
        ]
        for isl in islands:
            isl.kernel_stats = KernelStats.fresh(list(kernels))
    if migration_rng is None:
        migration_rng = derive_rng(config.seed, 0, "migration")
    epoch = start_epoch
    while any(not isl.terminated for isl in islands):
        for isl in islands:
            if not isl.terminated:
                run_iteration(isl, deps)
        epoch += 1
        if (
            config.n_islands >= 2
            and config.migration_size > 0
            and epoch % config.migration_interval == 0
        ):
            # Terminated islands still receive migrants; they do not revive.
            migrate(islands, config.migration_size, migration_rng, emit=emit)
    total = sum(isl.proposal_count for isl in islands)
    return EngineResult(islands=islands, total_proposals=total, epochs=epoch)
