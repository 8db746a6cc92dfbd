import json
import os

import pytest
from click.testing import CliRunner

from evosmc.cli import main
from evosmc.config import ConfigError, build_setup, load_config
from evosmc.events import read_events
from evosmc.export import export_rows


def _config_dict(**run_overrides):
    run = {
        "n_islands": 2,
        "particles_per_island": 4,
        "n_proposals": 2,
        "beta": 6,
        "kappa": 0.8,
        "min_iterations": 2,
        "max_iterations": 8,
        "migration_interval": 2,
        "migration_size": 1,
        "seed": 7,
    }
    run.update(run_overrides)
    return {
        "run": run,
        "task": {
            "description": "maximize ones",
            "language": "text",
            "prior": {"type": "random_bits", "n_bits": 8},
        },
        "evaluator": {"type": "bitstring", "n_bits": 8},
        "llm": {"backend": "mock"},
        "log": {"deterministic_timestamps": True},
    }


@pytest.fixture
def config_path(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(_config_dict()))
    return str(path)


@pytest.fixture
def runner():
    return CliRunner()


# --- config loading ---

def test_load_config_builds_components(config_path):
    setup = load_config(config_path)
    assert setup.config.seed == 7
    assert setup.task_description == "maximize ones"
    assert set(setup.kernels) == {
        "diff_no_inspo",
        "diff_with_inspo",
        "rewrite_no_inspo",
        "rewrite_with_inspo",
    }
    assert setup.deterministic_timestamps


def test_load_config_seed_override(config_path):
    assert load_config(config_path, seed_override=99).config.seed == 99


def test_config_missing_sections_rejected():
    with pytest.raises(ConfigError):
        build_setup({"run": {}})
    with pytest.raises(ConfigError):
        build_setup({"task": {"prior": {"type": "random_bits", "n_bits": 4}}})


def test_config_unknown_run_option_rejected():
    raw = _config_dict()
    raw["run"]["mystery"] = 1
    with pytest.raises(ConfigError):
        build_setup(raw)


def test_config_bad_prior_and_evaluator():
    raw = _config_dict()
    raw["task"]["prior"] = {"type": "psychic"}
    with pytest.raises(ConfigError):
        build_setup(raw)
    raw = _config_dict()
    raw["evaluator"] = {"type": "subprocess", "command": []}
    with pytest.raises(ConfigError):
        build_setup(raw)


def test_config_seed_program_prior(tmp_path):
    seed_file = tmp_path / "seed.py"
    seed_file.write_text("x = 1\n")
    raw = _config_dict()
    raw["task"]["prior"] = {"type": "seed_program", "path": "seed.py"}
    setup = build_setup(raw, config_dir=str(tmp_path))
    program = setup.prior(None)
    assert program.source == "x = 1\n"


def test_load_config_bad_json(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{nope")
    with pytest.raises(ConfigError):
        load_config(str(path))


# --- run command ---

def test_run_smoke(runner, config_path, tmp_path):
    out = str(tmp_path / "run")
    result = runner.invoke(main, ["run", "--config", config_path, "--out", out])
    assert result.exit_code == 0, result.output
    events = read_events(os.path.join(out, "events.jsonl"))
    kinds = [e.kind for e in events]
    assert kinds[0] == "run_start" and kinds[-1] == "run_end"
    summary = json.load(open(os.path.join(out, "summary.json")))
    assert all(isl["terminated"] for isl in summary["islands"])
    assert all(isl["lambda_schedule"][-1] == 1.0 for isl in summary["islands"])
    # Every proposal event maps to one chat request and vice versa.
    n_proposals = sum(1 for e in events if e.kind == "proposal")
    assert n_proposals == summary["total_proposals"] == summary["chat_requests"]
    assert os.path.exists(os.path.join(out, "transcripts.jsonl"))
    assert os.path.exists(os.path.join(out, "diagnostics.json"))


def test_run_dry_run_does_no_work(runner, config_path, tmp_path):
    result = runner.invoke(main, ["run", "--config", config_path, "--dry-run"])
    assert result.exit_code == 0
    assert json.loads(result.output)["valid"] is True
    assert not os.path.exists("evosmc_run_seed7")


def test_run_invalid_config_fails_before_work(runner, tmp_path):
    raw = _config_dict(kappa=1.5)
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(raw))
    result = runner.invoke(main, ["run", "--config", str(path), "--out", str(tmp_path / "o")])
    assert result.exit_code == 2
    assert not os.path.exists(tmp_path / "o")


def test_run_refuses_to_clobber(runner, config_path, tmp_path):
    out = str(tmp_path / "run")
    assert runner.invoke(main, ["run", "--config", config_path, "--out", out]).exit_code == 0
    assert runner.invoke(main, ["run", "--config", config_path, "--out", out]).exit_code == 1


# --- export command ---

@pytest.fixture
def finished_run(runner, config_path, tmp_path):
    out = str(tmp_path / "run")
    assert runner.invoke(main, ["run", "--config", config_path, "--out", out]).exit_code == 0
    return out


def test_export_schedule_rows(runner, finished_run):
    assert runner.invoke(main, ["export", finished_run, "--what", "schedule"]).exit_code == 0
    lines = open(os.path.join(finished_run, "export", "schedule.csv")).read().splitlines()
    assert lines[0] == "island,t,lambda,delta_beta,ess"
    events = read_events(os.path.join(finished_run, "events.jsonl"))
    n_iterations = sum(1 for e in events if e.kind == "iteration_start")
    assert len(lines) - 1 == n_iterations


def test_export_kernel_counts_sum_to_population_budget(runner, finished_run):
    assert runner.invoke(main, ["export", finished_run, "--what", "kernels"]).exit_code == 0
    rows = open(os.path.join(finished_run, "export", "kernels.csv")).read().splitlines()[1:]
    per_iteration = {}
    for row in rows:
        island, t, kernel_id, selected = row.split(",")[:4]
        per_iteration[(island, t)] = per_iteration.get((island, t), 0) + int(selected)
    assert per_iteration and all(total == 4 * 2 for total in per_iteration.values())  # N * K


def test_export_flow_offspring_identity(runner, finished_run):
    assert runner.invoke(main, ["export", finished_run, "--what", "flow"]).exit_code == 0
    rows = open(os.path.join(finished_run, "export", "flow.csv")).read().splitlines()[1:]
    offspring_per_iter = {}
    weight_per_iter = {}
    for row in rows:
        island, t, particle, rank, reward, weight, offspring = row.split(",")
        key = (island, t)
        offspring_per_iter[key] = offspring_per_iter.get(key, 0) + int(offspring)
        weight_per_iter[key] = weight_per_iter.get(key, 0.0) + float(weight)
    assert all(total == 4 for total in offspring_per_iter.values())  # N ancestors
    assert all(abs(total - 1.0) < 1e-9 for total in weight_per_iter.values())


def test_export_best_curve_monotone(runner, finished_run):
    assert runner.invoke(main, ["export", finished_run, "--what", "best-curve"]).exit_code == 0
    rows = open(os.path.join(finished_run, "export", "best-curve.csv")).read().splitlines()[1:]
    by_island = {}
    for row in rows:
        island, t, best, best_so_far, mean = row.split(",")
        by_island.setdefault(island, []).append(float(best_so_far))
    for curve in by_island.values():
        assert curve == sorted(curve)


def test_export_idempotent_byte_identical(runner, finished_run):
    for what in ("schedule", "kernels", "flow", "best-curve"):
        assert runner.invoke(main, ["export", finished_run, "--what", what]).exit_code == 0
        path = os.path.join(finished_run, "export", f"{what}.csv")
        first = open(path, "rb").read()
        assert runner.invoke(main, ["export", finished_run, "--what", what]).exit_code == 0
        assert open(path, "rb").read() == first


def test_export_missing_run(runner, tmp_path):
    empty = tmp_path / "nothing"
    empty.mkdir()
    result = runner.invoke(main, ["export", str(empty), "--what", "schedule"])
    assert result.exit_code == 1


def test_export_corrupt_log(runner, finished_run):
    log = os.path.join(finished_run, "events.jsonl")
    lines = open(log).read().splitlines(keepends=True)
    open(log, "w").write("".join(lines[:3]) + "garbage\n" + "".join(lines[4:]))
    result = runner.invoke(main, ["export", finished_run, "--what", "schedule"])
    assert result.exit_code == 1


def test_export_rows_unknown_kind():
    with pytest.raises(ValueError):
        export_rows([], "interpretive-dance")


# --- resume command ---

def test_resume_after_kill_matches_uninterrupted(runner, config_path, tmp_path, finished_run):
    killed = tmp_path / "killed"
    killed.mkdir()
    full_log = open(os.path.join(finished_run, "events.jsonl"), "rb").read()
    # Cut mid-line partway through the run, as a kill would.
    (killed / "events.jsonl").write_bytes(full_log[: len(full_log) // 3])
    (killed / "config.json").write_bytes(
        open(os.path.join(finished_run, "config.json"), "rb").read()
    )
    result = runner.invoke(main, ["resume", str(killed)])
    assert result.exit_code == 0, result.output
    expected = json.load(open(os.path.join(finished_run, "summary.json")))
    resumed = json.load(open(killed / "summary.json"))
    assert resumed == expected


def test_resume_completed_run_is_noop(runner, finished_run):
    before = open(os.path.join(finished_run, "events.jsonl"), "rb").read()
    result = runner.invoke(main, ["resume", finished_run])
    assert result.exit_code == 0
    assert "complete" in result.output
    assert open(os.path.join(finished_run, "events.jsonl"), "rb").read() == before


def test_resume_empty_dir_reports_no_checkpoint(runner, tmp_path):
    empty = tmp_path / "empty"
    empty.mkdir()
    result = runner.invoke(main, ["resume", str(empty)])
    assert result.exit_code == 1


def test_resume_mid_file_corruption_rejected(runner, finished_run, tmp_path):
    damaged = tmp_path / "damaged"
    damaged.mkdir()
    lines = open(os.path.join(finished_run, "events.jsonl")).read().splitlines(keepends=True)
    (damaged / "events.jsonl").write_text("".join(lines[:2]) + "garbage\n" + "".join(lines[3:-1]))
    (damaged / "config.json").write_bytes(
        open(os.path.join(finished_run, "config.json"), "rb").read()
    )
    result = runner.invoke(main, ["resume", str(damaged)])
    assert result.exit_code == 1


# --- oracle-check command ---

def test_oracle_check_invariance(runner, tmp_path):
    report = str(tmp_path / "report.json")
    result = runner.invoke(main, ["oracle-check", "invariance", "--report", report])
    assert result.exit_code == 0, result.output
    assert "PASS" in result.output and "FAIL" not in result.output
    assert json.load(open(report))["passed"]


def test_oracle_check_unknown_suite(runner):
    assert runner.invoke(main, ["oracle-check", "horoscope"]).exit_code != 0
