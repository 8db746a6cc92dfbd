"""Checkpoint serialization for resume support.

Island states (particles, anneal state, kernel posteriors, RNG streams,
archive) round-trip through plain JSON dicts embedded in iteration_end and
migration events.
"""

from __future__ import annotations

from typing import Any

import numpy as np

from .archive import Archive, ArchiveEntry
from .core import AnnealState, Particle, Program, RewardValue
from .island import IslandState
from .mutate import KernelStats

__all__ = [
    "serialize_rng",
    "restore_rng",
    "serialize_island",
    "restore_island",
]


def serialize_rng(rng: np.random.Generator) -> dict:
    state = rng.bit_generator.state
    # PCG64 state integers exceed 64 bits; stringify for JSON round-tripping.
    return {
        "bit_generator": state["bit_generator"],
        "state": {k: str(v) for k, v in state["state"].items()},
        "has_uint32": state["has_uint32"],
        "uinteger": state["uinteger"],
    }


def restore_rng(data: dict) -> np.random.Generator:
    if data["bit_generator"] != "PCG64":
        raise ValueError(f"unsupported bit generator {data['bit_generator']!r}")
    rng = np.random.Generator(np.random.PCG64())
    rng.bit_generator.state = {
        "bit_generator": data["bit_generator"],
        "state": {k: int(v) for k, v in data["state"].items()},
        "has_uint32": data["has_uint32"],
        "uinteger": data["uinteger"],
    }
    return rng


def _particle_to_dict(p: Particle) -> dict:
    return {
        "source": p.program.source,
        "language": p.program.language_tag,
        "reward": p.reward.value,
        "valid": p.reward.valid,
        "born": p.born_iteration,
        "island": p.island_id,
        "lineage": p.lineage_id,
    }


def _particle_from_dict(d: dict) -> Particle:
    return Particle(
        program=Program(source=d["source"], language_tag=d["language"]),
        reward=RewardValue(d["reward"], valid=d["valid"]),
        born_iteration=d["born"],
        island_id=d["island"],
        lineage_id=d["lineage"],
    )


def serialize_island(state: IslandState) -> dict:
    return {
        "island_id": state.island_id,
        "particles": [_particle_to_dict(p) for p in state.particles],
        "anneal": {
            "lambda": state.anneal.lambda_,
            "beta_target": state.anneal.beta_target,
            "iteration": state.anneal.iteration,
            "terminated": state.anneal.terminated,
        },
        "kernel_stats": {k: list(v) for k, v in state.kernel_stats.params.items()},
        "rngs": {purpose: serialize_rng(rng) for purpose, rng in state.rngs.items()},
        "epoch": state.epoch,
        "proposal_count": state.proposal_count,
        "archive": [
            {
                "source": e.program.source,
                "language": e.program.language_tag,
                "reward": e.reward.value,
                "valid": e.reward.valid,
                "iteration": e.iteration,
                "kernel_id": e.kernel_id,
                "accepted": e.accepted,
                "island": e.island_id,
            }
            for e in state.archive.entries
        ],
    }


def restore_island(data: dict, embedding=None) -> IslandState:
    archive = Archive(embedding=embedding)
    for e in data["archive"]:
        archive.record(
            ArchiveEntry(
                program=Program(source=e["source"], language_tag=e["language"]),
                reward=RewardValue(e["reward"], valid=e["valid"]),
                iteration=e["iteration"],
                kernel_id=e["kernel_id"],
                accepted=e["accepted"],
                island_id=e["island"],
            )
        )
    anneal = data["anneal"]
    return IslandState(
        island_id=data["island_id"],
        particles=[_particle_from_dict(p) for p in data["particles"]],
        anneal=AnnealState(
            lambda_=anneal["lambda"],
            beta_target=anneal["beta_target"],
            iteration=anneal["iteration"],
            terminated=anneal["terminated"],
        ),
        kernel_stats=KernelStats(params={k: tuple(v) for k, v in data["kernel_stats"].items()}),
        rngs={purpose: restore_rng(d) for purpose, d in data["rngs"].items()},
        epoch=data["epoch"],
        proposal_count=data["proposal_count"],
        archive=archive,
    )
