"""Full evaluation history and inspiration selection.

Every proposed program is recorded, including MH rejects, so information
from rejected proposals feeds future mutations.  Inspirations are the top-k
entries by reward plus up to m entries whose embeddings sit farthest from
the parent, both deduplicated by digest and excluding the parent itself.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Protocol, runtime_checkable

import numpy as np

from .core import Program, RewardValue

__all__ = ["ArchiveEntry", "EmbeddingProvider", "NgramHashEmbedding", "Archive"]


@dataclass(frozen=True)
class ArchiveEntry:
    program: Program
    reward: RewardValue
    iteration: int
    kernel_id: str  # one of the kernel ids, or "init"
    accepted: bool
    island_id: int


@runtime_checkable
class EmbeddingProvider(Protocol):
    dimension: int

    def embed(self, program: Program) -> np.ndarray: ...


class NgramHashEmbedding:
    """Deterministic built-in embedding: hashed bag of character 3-grams,
    L2-normalized.  Network-free stand-in for an external embedding service."""

    def __init__(self, dimension: int = 256, n: int = 3):
        self.dimension = dimension
        self.n = n

    def embed(self, program: Program) -> np.ndarray:
        vec = np.zeros(self.dimension, dtype=float)
        text = program.source
        if len(text) < self.n:
            grams = [text]
        else:
            grams = [text[i : i + self.n] for i in range(len(text) - self.n + 1)]
        for gram in grams:
            h = hashlib.blake2b(gram.encode("utf-8"), digest_size=8).digest()
            vec[int.from_bytes(h, "little") % self.dimension] += 1.0
        norm = np.linalg.norm(vec)
        return vec / norm if norm > 0 else vec


def _cosine_distance(a: np.ndarray, b: np.ndarray) -> float:
    denom = np.linalg.norm(a) * np.linalg.norm(b)
    if denom == 0:
        return 1.0
    return float(1.0 - np.dot(a, b) / denom)


class Archive:
    """Append-only evaluation log with digest-deduplicated selection views.

    Writes are serialized by the caller (one archive per island in the
    engine); selections read a consistent snapshot of the entry list.
    """

    def __init__(self, embedding: EmbeddingProvider | None = None):
        self._entries: list[ArchiveEntry] = []
        self._embedding = embedding or NgramHashEmbedding()
        self._embed_cache: dict[str, np.ndarray] = {}

    def __len__(self) -> int:
        return len(self._entries)

    @property
    def entries(self) -> tuple[ArchiveEntry, ...]:
        return tuple(self._entries)

    def record(self, entry: ArchiveEntry) -> None:
        self._entries.append(entry)

    def best(self) -> ArchiveEntry | None:
        if not self._entries:
            return None
        return max(self._entries, key=lambda e: e.reward.value)

    def _deduplicated(self) -> list[ArchiveEntry]:
        # Keep the first (oldest) entry per digest; reward is a function of
        # the program up to evaluator determinism, so first-seen suffices.
        seen: dict[str, ArchiveEntry] = {}
        for e in self._entries:
            seen.setdefault(e.program.digest, e)
        return list(seen.values())

    def _embed(self, program: Program) -> np.ndarray:
        cached = self._embed_cache.get(program.digest)
        if cached is None:
            cached = self._embedding.embed(program)
            self._embed_cache[program.digest] = cached
        return cached

    def select_inspirations(
        self, parent: Program, top_k: int, diverse_m: int
    ) -> list[tuple[Program, RewardValue]]:
        """Up to top_k highest-reward distinct programs, then up to diverse_m
        programs farthest from the parent among the remainder.  Deterministic
        given archive state; never returns the parent's own digest."""
        if top_k < 0 or diverse_m < 0:
            raise ValueError("top_k and diverse_m must be >= 0")
        candidates = [e for e in self._deduplicated() if e.program.digest != parent.digest]

        # Non-increasing reward, ties to the older iteration.
        by_reward = sorted(candidates, key=lambda e: (-e.reward.value, e.iteration))
        top = by_reward[:top_k]
        top_digests = {e.program.digest for e in top}

        remainder = [e for e in candidates if e.program.digest not in top_digests]
        parent_vec = self._embed(parent)
        by_distance = sorted(
            remainder,
            key=lambda e: (-_cosine_distance(self._embed(e.program), parent_vec), e.iteration),
        )
        diverse = by_distance[:diverse_m]

        return [(e.program, e.reward) for e in top + diverse]
