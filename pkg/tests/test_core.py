import numpy as np
import pytest

from evosmc.core import (
    AnnealState,
    EmptySource,
    Particle,
    Program,
    RewardBounds,
    RewardValue,
    RunConfig,
    derive_rng,
    effective_beta,
    make_program,
)


def test_program_digest_is_content_addressed():
    a = make_program("print(1)")
    b = make_program("print(1)")
    c = make_program("print(2)")
    assert a.digest == b.digest
    assert a.digest != c.digest
    assert len(a.digest) == 16  # 8 bytes hex


def test_program_rejects_empty_source():
    with pytest.raises(EmptySource):
        make_program("")


def test_program_is_frozen():
    p = make_program("x = 1")
    with pytest.raises(AttributeError):
        p.source = "x = 2"


def test_reward_value_requires_finite():
    assert RewardValue(0.5).valid
    assert not RewardValue(0.0, valid=False).valid
    for bad in (float("nan"), float("inf"), float("-inf")):
        with pytest.raises(ValueError):
            RewardValue(bad)


def test_anneal_state_termination_invariant():
    AnnealState(lambda_=1.0, beta_target=5.0, terminated=True)
    with pytest.raises(ValueError):
        AnnealState(lambda_=0.5, terminated=True)
    with pytest.raises(ValueError):
        AnnealState(lambda_=1.0, terminated=False)
    with pytest.raises(ValueError):
        AnnealState(lambda_=1.5)


def test_effective_beta():
    state = AnnealState(lambda_=0.25, beta_target=20.0)
    assert effective_beta(state) == 5.0


def test_reward_bounds():
    b = RewardBounds(r_minus=-1.0, r_plus=3.0)
    assert b.delta_r == 4.0
    with pytest.raises(ValueError):
        RewardBounds(r_minus=1.0, r_plus=0.0)


@pytest.mark.parametrize(
    "kwargs",
    [
        {"kappa": 0.0},
        {"kappa": 1.0},
        {"n_islands": 0},
        {"particles_per_island": 0},
        {"n_proposals": 0},
        {"beta": 0.0},
        {"max_iterations": 2, "min_iterations": 3},
        {"migration_size": 99},
        {"kernel_selection": "greedy"},
        {"acceptance_mode": "maybe"},
        {"reward_floor": float("nan")},
    ],
)
def test_run_config_validation(kwargs):
    with pytest.raises(ValueError):
        RunConfig(**kwargs)


def test_run_config_with_seed():
    config = RunConfig(seed=1)
    assert config.with_seed(9).seed == 9
    assert config.seed == 1  # original untouched


def test_derive_rng_deterministic_and_stream_independent():
    a1 = derive_rng(42, 0, "resample").uniform(size=5)
    a2 = derive_rng(42, 0, "resample").uniform(size=5)
    b = derive_rng(42, 0, "mh_accept").uniform(size=5)
    c = derive_rng(42, 1, "resample").uniform(size=5)
    d = derive_rng(43, 0, "resample").uniform(size=5)
    assert np.array_equal(a1, a2)
    for other in (b, c, d):
        assert not np.array_equal(a1, other)


def test_derive_rng_rejects_unknown_purpose():
    with pytest.raises(ValueError):
        derive_rng(0, 0, "lottery")


def test_particle_defaults():
    p = Particle(program=make_program("a"), reward=RewardValue(0.0))
    assert p.born_iteration == 0
    assert p.island_id == 0
