"""Adaptive parent resampling: temperature-softmax importance weights and
systematic (low-variance) ancestor selection.

The incremental weight of a particle depends only on the parent's reward:
log w_n = delta_beta * R_n.  Normalization uses the log-sum-exp trick so
extreme rewards never overflow.  The backward-kernel term of the general
SMC weight cancels analytically under the time-reversal choice, which is
why no child-state term appears here.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .schedule import EmptyPopulation

__all__ = ["WeightVector", "AncestorIndexVector", "compute_weights", "systematic_resample"]


@dataclass(frozen=True)
class WeightVector:
    log_weights: tuple[float, ...]
    normalized: tuple[float, ...]

    def __len__(self) -> int:
        return len(self.normalized)


@dataclass(frozen=True)
class AncestorIndexVector:
    indices: tuple[int, ...]


def compute_weights(rewards: Sequence[float], delta_beta: float) -> WeightVector:
    """Softmax of delta_beta * rewards, max-shifted before exponentiation."""
    if len(rewards) == 0:
        raise EmptyPopulation("compute_weights needs a non-empty population")
    if delta_beta < 0:
        raise ValueError("delta_beta must be >= 0")
    log_w = delta_beta * np.asarray(rewards, dtype=float)
    shifted = log_w - log_w.max()
    w = np.exp(shifted)
    normalized = w / w.sum()
    return WeightVector(log_weights=tuple(log_w.tolist()), normalized=tuple(normalized.tolist()))


def systematic_resample(weights: WeightVector, rng: np.random.Generator) -> AncestorIndexVector:
    """Pick N ancestors with a single uniform draw u ~ U[0, 1/N): index n is
    selected once for each grid point u + i/N falling in its cumulative-weight
    slot.  Output is sorted non-decreasing; cumulative ties resolve to the
    lower index."""
    w = np.asarray(weights.normalized, dtype=float)
    n = len(w)
    u = rng.uniform(0.0, 1.0 / n)
    positions = u + np.arange(n) / n
    cumulative = np.cumsum(w)
    cumulative[-1] = 1.0  # guard against round-off excluding the last slot
    indices = np.searchsorted(cumulative, positions, side="right")
    indices = np.minimum(indices, n - 1)
    return AncestorIndexVector(indices=tuple(int(i) for i in np.sort(indices)))
