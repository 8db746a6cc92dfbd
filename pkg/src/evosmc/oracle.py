"""Brute-force ground truth on enumerable program spaces.

Everything here is exact: tilted distributions by direct summation,
transition matrices from kernel densities, TV distances, and the
diagnostics that certify the sampler's convergence machinery at desk
scale (bridge ratios, path length, ergodicity rate).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .core import Program, RunConfig, derive_rng, make_program
from .evaluators import BitstringEvaluator
from .island import run_engine
from .mutate import MutationContext, ProposalResult

__all__ = [
    "LengthMismatch",
    "NonErgodic",
    "DensityUnavailable",
    "FiniteSpace",
    "BitFlipKernel",
    "IdentityKernel",
    "MatrixProposalKernel",
    "ErgodicityFit",
    "OracleDiagnostics",
    "Theorem1Result",
    "bitstring_space",
    "exact_tilted",
    "tv_distance",
    "transition_matrix",
    "check_invariance",
    "fit_ergodicity_rate",
    "path_gamma",
    "bridge_linfty",
    "l2_bridge_ratio",
    "theorem1_experiment",
]

from .mutate import DensityUnavailable  # re-exported for callers of this module

MAX_STATES = 4096


class LengthMismatch(ValueError):
    pass


class NonErgodic(RuntimeError):
    pass


@dataclass(frozen=True)
class FiniteSpace:
    """An explicitly enumerated program space with prior and rewards."""

    states: tuple[Program, ...]
    prior: tuple[float, ...]
    rewards: tuple[float, ...]

    def __post_init__(self):
        if not (len(self.states) == len(self.prior) == len(self.rewards)):
            raise LengthMismatch("states, prior, rewards must align")
        if len(self.states) > MAX_STATES:
            raise ValueError(f"oracle spaces are capped at {MAX_STATES} states")
        if abs(sum(self.prior) - 1.0) > 1e-12:
            raise ValueError("prior must sum to 1")
        if not all(math.isfinite(r) for r in self.rewards):
            raise ValueError("rewards must be finite")

    @property
    def size(self) -> int:
        return len(self.states)

    def index_of(self, program: Program) -> int:
        return self._index()[program.digest]

    def _index(self) -> dict[str, int]:
        cached = getattr(self, "_index_cache", None)
        if cached is None:
            cached = {p.digest: i for i, p in enumerate(self.states)}
            object.__setattr__(self, "_index_cache", cached)
        return cached

    def reward_bounds(self) -> tuple[float, float]:
        return min(self.rewards), max(self.rewards)

    def prior_log_density(self, program: Program) -> float:
        p = self.prior[self.index_of(program)]
        return math.log(p) if p > 0 else -math.inf


def bitstring_space(n_bits: int, reward_fn: Callable[[str], float] | None = None) -> FiniteSpace:
    """Uniform prior over {0,1}^n; default reward is popcount/n."""
    states = ["".join(bits) for bits in itertools.product("01", repeat=n_bits)]
    if reward_fn is None:
        reward_fn = lambda s: s.count("1") / n_bits
    programs = tuple(make_program(s, "bitstring") for s in states)
    prior = tuple([1.0 / len(states)] * len(states))
    rewards = tuple(reward_fn(s) for s in states)
    return FiniteSpace(states=programs, prior=prior, rewards=rewards)


class BitFlipKernel:
    """Symmetric proposal on bitstrings: flip one uniformly chosen bit."""

    def __init__(self, n_bits: int):
        self.n_bits = n_bits

    def propose(self, parent: Program, context: MutationContext, rng: np.random.Generator) -> ProposalResult:
        bits = list(parent.source)
        i = int(rng.integers(self.n_bits))
        bits[i] = "1" if bits[i] == "0" else "0"
        return ProposalResult(candidate=make_program("".join(bits), parent.language_tag), kernel_id=context.kernel_id)

    def density(self, from_: Program, to: Program, context: MutationContext) -> float:
        diff = sum(a != b for a, b in zip(from_.source, to.source))
        return 1.0 / self.n_bits if diff == 1 else 0.0


class IdentityKernel:
    """Proposes the parent itself; perfectly invariant, zero exploration."""

    def propose(self, parent: Program, context: MutationContext, rng: np.random.Generator) -> ProposalResult:
        return ProposalResult(candidate=parent, kernel_id=context.kernel_id)

    def density(self, from_: Program, to: Program, context: MutationContext) -> float:
        return 1.0 if from_.digest == to.digest else 0.0


class MatrixProposalKernel:
    """Proposal given by an explicit row-stochastic matrix over a finite space."""

    def __init__(self, space: FiniteSpace, matrix: np.ndarray):
        matrix = np.asarray(matrix, dtype=float)
        if matrix.shape != (space.size, space.size):
            raise LengthMismatch("proposal matrix must be square over the space")
        if not np.allclose(matrix.sum(axis=1), 1.0, atol=1e-12):
            raise ValueError("proposal matrix rows must sum to 1")
        self.space = space
        self.matrix = matrix

    def propose(self, parent: Program, context: MutationContext, rng: np.random.Generator) -> ProposalResult:
        i = self.space.index_of(parent)
        j = int(rng.choice(self.space.size, p=self.matrix[i]))
        return ProposalResult(candidate=self.space.states[j], kernel_id=context.kernel_id)

    def density(self, from_: Program, to: Program, context: MutationContext) -> float:
        return float(self.matrix[self.space.index_of(from_), self.space.index_of(to)])


def exact_tilted(space: FiniteSpace, beta_t: float) -> np.ndarray:
    """p_t(x) = p0(x) e^{beta_t R(x)} / Z_t, normalized in log space."""
    if beta_t < 0:
        raise ValueError("beta_t must be >= 0")
    prior = np.asarray(space.prior, dtype=float)
    with np.errstate(divide="ignore"):
        log_unnorm = np.log(prior) + beta_t * np.asarray(space.rewards, dtype=float)
    log_unnorm -= log_unnorm.max()
    p = np.exp(log_unnorm)
    return p / p.sum()


def tv_distance(p: Sequence[float], q: Sequence[float]) -> float:
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise LengthMismatch("distributions must have matching lengths")
    return float(0.5 * np.abs(p - q).sum())


def _kernel_density_matrix(space: FiniteSpace, kernel) -> np.ndarray:
    density = getattr(kernel, "density", None)
    if density is None:
        raise DensityUnavailable("kernel exposes no density")
    ctx = MutationContext(iteration=0, beta_t=0.0, kernel_id="oracle")
    n = space.size
    q = np.empty((n, n), dtype=float)
    for i, xi in enumerate(space.states):
        for j, xj in enumerate(space.states):
            q[i, j] = density(xi, xj, ctx)
    return q


def transition_matrix(
    space: FiniteSpace, beta_t: float, kernel, acceptance_mode: str = "full_ratio"
) -> np.ndarray:
    """Exact one-step MH transition matrix: proposal density times acceptance,
    with rejected mass absorbed on the diagonal."""
    q = _kernel_density_matrix(space, kernel)
    p_t = exact_tilted(space, beta_t)
    n = space.size
    rewards = np.asarray(space.rewards, dtype=float)
    accept = np.ones((n, n), dtype=float)
    for i in range(n):
        for j in range(n):
            if i == j or q[i, j] == 0.0:
                continue
            if acceptance_mode == "full_ratio":
                if p_t[i] > 0 and q[j, i] > 0:
                    accept[i, j] = min(1.0, (p_t[j] * q[j, i]) / (p_t[i] * q[i, j]))
                else:
                    accept[i, j] = 1.0
            elif acceptance_mode == "reward_only":
                accept[i, j] = min(1.0, math.exp(min(0.0, beta_t * (rewards[j] - rewards[i]))))
            else:
                raise ValueError(f"bad acceptance_mode {acceptance_mode!r}")
    P = q * accept
    np.fill_diagonal(P, 0.0)
    np.fill_diagonal(P, 1.0 - P.sum(axis=1))
    return P


def check_invariance(
    space: FiniteSpace, beta_t: float, kernel, acceptance_mode: str = "full_ratio"
) -> float:
    """max_y |sum_x p_t(x) P(x,y) - p_t(y)| for the exact MH matrix."""
    P = transition_matrix(space, beta_t, kernel, acceptance_mode)
    p_t = exact_tilted(space, beta_t)
    return float(np.abs(p_t @ P - p_t).max())


@dataclass(frozen=True)
class ErgodicityFit:
    rho_hat: float
    c_hat: float
    r_squared: float
    tv_by_step: tuple[float, ...]


def fit_ergodicity_rate(
    space: FiniteSpace,
    beta_t: float,
    kernel,
    k_max: int = 30,
    acceptance_mode: str = "full_ratio",
    plateau_tol: float = 1e-3,
) -> ErgodicityFit:
    """Fit sup_x ||P^K(x,.) - p_t||_TV ~ C * rho^K by least squares on the
    log of the geometric tail (first 2 points discarded as transient)."""
    P = transition_matrix(space, beta_t, kernel, acceptance_mode)
    p_t = exact_tilted(space, beta_t)
    distances = []
    Pk = np.eye(space.size)
    for _ in range(k_max):
        Pk = Pk @ P
        distances.append(float(np.max(0.5 * np.abs(Pk - p_t[None, :]).sum(axis=1))))
    d = np.asarray(distances)
    if d[-1] > plateau_tol and d[-1] > 0.5 * d[max(0, len(d) // 2 - 1)]:
        raise NonErgodic(f"worst-case TV plateaus at {d[-1]:.3g} after {k_max} steps")
    tail = [(k + 1, dist) for k, dist in enumerate(distances[2:], start=2) if dist > 1e-14]
    if len(tail) < 3:
        tail = [(k + 1, dist) for k, dist in enumerate(distances) if dist > 1e-14]
    if len(tail) < 2:
        raise NonErgodic("TV sequence vanished too fast to fit a rate")
    ks = np.array([k for k, _ in tail], dtype=float)
    logs = np.log([dist for _, dist in tail])
    slope, intercept = np.polyfit(ks, logs, 1)
    fitted = slope * ks + intercept
    ss_res = float(np.sum((logs - fitted) ** 2))
    ss_tot = float(np.sum((logs - logs.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - ss_res / ss_tot
    rho_hat = float(np.exp(slope))
    if rho_hat >= 1.0:
        raise NonErgodic(f"fitted rate {rho_hat:.4f} >= 1")
    return ErgodicityFit(rho_hat=rho_hat, c_hat=float(np.exp(intercept)), r_squared=r2, tv_by_step=tuple(distances))


def path_gamma(space: FiniteSpace, beta: float) -> float:
    """Gamma = max_x p*(x)/p0(x) over the prior's support."""
    p_star = exact_tilted(space, beta)
    prior = np.asarray(space.prior, dtype=float)
    mask = prior > 0
    return float((p_star[mask] / prior[mask]).max())


def bridge_linfty(space: FiniteSpace, beta_prev: float, beta_t: float) -> float:
    """||p_t / p_{t-1}||_inf over the support of p_{t-1}."""
    p_prev = exact_tilted(space, beta_prev)
    p_t = exact_tilted(space, beta_t)
    mask = p_prev > 0
    return float((p_t[mask] / p_prev[mask]).max())


def l2_bridge_ratio(space: FiniteSpace, beta_prev: float, beta_t: float) -> float:
    """||p_t / p_{t-1}||^2 in L2(p_{t-1}); the population analogue of N/ESS."""
    p_prev = exact_tilted(space, beta_prev)
    p_t = exact_tilted(space, beta_t)
    mask = p_prev > 0
    return float(np.sum(p_t[mask] ** 2 / p_prev[mask]))


@dataclass(frozen=True)
class OracleDiagnostics:
    gamma_cap: float  # max_t of the adjacent L2 bridge ratio
    path_gamma: float
    rho_hat: float
    tv_to_target: float


@dataclass
class Theorem1Result:
    success_rate: float
    errors: list[float]
    p_star_f: float
    runs: list[dict] = field(default_factory=list)


def theorem1_experiment(
    space: FiniteSpace,
    config: RunConfig,
    n_runs: int,
    f: Callable[[float], float] | None = None,
    kernel=None,
    epsilon: float = 0.05,
) -> Theorem1Result:
    """Run the full single-island engine against a density-known kernel and
    report the fraction of runs whose terminal population mean of f lands
    within epsilon of the exact target expectation."""
    r_minus, r_plus = space.reward_bounds()
    delta_r = r_plus - r_minus
    if f is None:
        if delta_r == 0:
            f = lambda r: 0.0
        else:
            f = lambda r: (r - r_minus) / delta_r
    if kernel is None:
        n_bits = len(space.states[0].source)
        kernel = BitFlipKernel(n_bits)

    p_star = exact_tilted(space, config.beta)
    p_star_f = float(np.dot(p_star, [f(r) for r in space.rewards]))

    prior_vec = np.asarray(space.prior, dtype=float)
    n_bits = len(space.states[0].source)
    evaluator = BitstringEvaluator(n_bits=n_bits)

    errors: list[float] = []
    runs: list[dict] = []
    for run_idx in range(n_runs):
        run_config = config.with_seed(config.seed + run_idx)

        def prior_sampler(rng: np.random.Generator) -> Program:
            return space.states[int(rng.choice(space.size, p=prior_vec))]

        lambdas: list[float] = []
        ess_values: list[float] = []

        def emit(kind: str, payload: dict) -> None:
            if kind == "iteration_start":
                lambdas.append(payload["lambda"])
            elif kind == "weights":
                ess_values.append(payload["ess"])

        result = run_engine(
            run_config,
            kernels={"oracle": kernel},
            evaluator=evaluator,
            prior=prior_sampler,
            prior_log_density=space.prior_log_density,
            emit=emit,
        )
        population_f = float(
            np.mean([f(p.reward.value) for isl in result.islands for p in isl.particles])
        )
        err = abs(population_f - p_star_f)
        errors.append(err)
        runs.append(
            {
                "seed": run_config.seed,
                "error": err,
                "eta_f": population_f,
                "lambdas": lambdas,
                "ess": ess_values,
                "budget": result.total_proposals,
                "gamma": path_gamma(space, config.beta),
            }
        )
    success_rate = float(np.mean([e <= epsilon for e in errors]))
    return Theorem1Result(success_rate=success_rate, errors=errors, p_star_f=p_star_f, runs=runs)
