"""Command-line surface: run, resume, export, and oracle-check.

`run` executes the full multi-island loop, writing an append-only JSONL
event log, chat transcripts, diagnostics, and a final summary.  Island
checkpoints are embedded in iteration_end and migration events so `resume`
can rebuild state after a kill and continue with the same RNG streams,
reproducing the uninterrupted run under a deterministic backend.
"""

from __future__ import annotations

import json
import math
import os
import sys

import click
import numpy as np

from .archive import NgramHashEmbedding
from .config import ConfigError, RunSetup, build_setup, load_config
from .core import RunConfig, derive_rng
from .events import SCHEMA_VERSION, CorruptLog, EventLogWriter, RunEvent
from .export import EXPORT_KINDS, MissingRun, export_table
from .island import IslandDeps, IslandState, init_island, migrate, run_iteration
from .mutate import KernelStats
from .oracle import (
    BitFlipKernel,
    IdentityKernel,
    NonErgodic,
    bitstring_space,
    bridge_linfty,
    check_invariance,
    fit_ergodicity_rate,
    path_gamma,
    theorem1_experiment,
)
from .persist import restore_island, restore_rng, serialize_island, serialize_rng

__all__ = ["main", "NoCheckpoint"]

CALLS_NOTE = (
    "chat_requests counts every request sent, including any made during "
    "initialization (initial particles are drawn locally, so none are)"
)


class NoCheckpoint(RuntimeError):
    """Resume requested but the run directory holds no usable checkpoint."""


def _fail(kind: str, message: str, code: int = 1):
    sys.stderr.write(json.dumps({"error": kind, "message": message}) + "\n")
    raise SystemExit(code)


def _client_state(client) -> dict:
    return {
        "requests_sent": client.requests_sent,
        "model_counts": dict(client.model_counts),
        "ensemble_rng": serialize_rng(client.ensemble_rng) if client.ensemble_rng is not None else None,
    }


def _restore_client(client, data: dict) -> None:
    client.requests_sent = int(data["requests_sent"])
    client.model_counts = dict(data["model_counts"])
    if data.get("ensemble_rng") is not None:
        client.ensemble_rng = restore_rng(data["ensemble_rng"])


def _drive(
    setup: RunSetup,
    writer: EventLogWriter,
    islands: list[IslandState],
    migration_rng: np.random.Generator,
    island_epochs: dict[int, int],
    schedules: dict[int, list[float]],
    epoch: int,
    last_migration_epoch: int,
) -> int:
    """Run the epoch loop to termination, checkpointing into the log."""
    config = setup.config
    by_id = {isl.island_id: isl for isl in islands}
    ctx = {"epoch": epoch}

    def emit(kind: str, payload: dict) -> None:
        if kind == "iteration_start":
            schedules.setdefault(payload["island"], {})[payload["t"]] = payload["lambda"]
        if kind == "iteration_end":
            payload = dict(payload)
            payload["checkpoint"] = {
                "epoch_global": ctx["epoch"],
                "island": serialize_island(by_id[payload["island"]]),
                "client": _client_state(setup.client),
            }
        writer.emit(kind, payload)

    def emit_migration(kind: str, payload: dict) -> None:
        payload = dict(payload)
        payload["checkpoint"] = {
            "epoch_global": ctx["epoch"],
            "islands": [serialize_island(isl) for isl in islands],
            "migration_rng": serialize_rng(migration_rng),
            "client": _client_state(setup.client),
        }
        writer.emit(kind, payload)

    deps = IslandDeps(
        config=config,
        kernels=setup.kernels,
        evaluator=setup.evaluator,
        task_description=setup.task_description,
        emit=emit,
    )

    def migration_due(e: int) -> bool:
        return config.n_islands >= 2 and config.migration_size > 0 and e % config.migration_interval == 0

    # Finish a partially completed epoch left behind by a kill.
    target = max(island_epochs.values(), default=0)
    if target > epoch or any(
        not isl.terminated and island_epochs[isl.island_id] < target for isl in islands
    ):
        ctx["epoch"] = target
        for isl in islands:
            if not isl.terminated and island_epochs[isl.island_id] < target:
                run_iteration(isl, deps)
                island_epochs[isl.island_id] = target
        epoch = target
        if migration_due(epoch) and last_migration_epoch < epoch:
            migrate(islands, config.migration_size, migration_rng, emit=emit_migration)

    while any(not isl.terminated for isl in islands):
        epoch += 1
        ctx["epoch"] = epoch
        for isl in islands:
            if not isl.terminated:
                run_iteration(isl, deps)
                island_epochs[isl.island_id] = epoch
        if migration_due(epoch):
            migrate(islands, config.migration_size, migration_rng, emit=emit_migration)
    return epoch


def _summary(setup: RunSetup, islands: list[IslandState], schedules: dict, epochs: int) -> dict:
    best = max((isl.best_particle() for isl in islands), key=lambda p: p.reward.value)
    return {
        "best_reward": best.reward.value,
        "best_digest": best.program.digest,
        "best_program": best.program.source,
        "total_proposals": sum(isl.proposal_count for isl in islands),
        "chat_requests": setup.client.requests_sent,
        "epochs": epochs,
        "islands": [
            {
                "island": isl.island_id,
                "iterations": isl.anneal.iteration,
                "terminated": isl.terminated,
                "lambda_schedule": [lam for _, lam in sorted(schedules.get(isl.island_id, {}).items())],
                "proposals": isl.proposal_count,
                "best_reward": isl.best_particle().reward.value,
            }
            for isl in islands
        ],
        "calls_note": CALLS_NOTE,
    }


def _write_outputs(run_dir: str, setup: RunSetup, summary: dict, events_path: str) -> None:
    with open(os.path.join(run_dir, "summary.json"), "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(os.path.join(run_dir, "transcripts.jsonl"), "a", encoding="utf-8") as fh:
        for t in setup.client.transcripts:
            fh.write(json.dumps(t, sort_keys=True) + "\n")
    counts = {"proposals": 0, "parse_failures": 0, "accepted": 0, "by_kernel": {}}
    for ev in _recover_events(events_path)[0]:
        if ev.kind != "proposal":
            continue
        p = ev.payload
        counts["proposals"] += 1
        counts["parse_failures"] += int(not p["parse_ok"])
        counts["accepted"] += int(bool(p["accepted"]))
        counts["by_kernel"][p["kernel_id"]] = counts["by_kernel"].get(p["kernel_id"], 0) + 1
    counts["model_counts"] = dict(setup.client.model_counts)
    with open(os.path.join(run_dir, "diagnostics.json"), "w", encoding="utf-8") as fh:
        json.dump(counts, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _recover_events(path: str) -> tuple[list[RunEvent], int]:
    """Parse a possibly kill-truncated log; returns (events, good_byte_len).

    A damaged line is tolerated only at the very end of the file (the
    classic kill-mid-write artifact); damage earlier is CorruptLog.
    """
    from .events import EVENT_KINDS

    events: list[RunEvent] = []
    good_end = 0
    with open(path, encoding="utf-8") as fh:
        while True:
            line = fh.readline()
            if not line:
                break
            bad = None
            if not line.endswith("\n"):
                bad = "truncated final line"
            else:
                try:
                    obj = json.loads(line)
                    event = RunEvent(
                        seq=int(obj["seq"]),
                        wall_time=float(obj["wall_time"]),
                        kind=str(obj["kind"]),
                        payload=dict(obj["payload"]),
                    )
                    if event.seq != len(events) or event.kind not in EVENT_KINDS:
                        bad = f"bad event at seq position {len(events)}"
                except (json.JSONDecodeError, KeyError, TypeError, ValueError):
                    bad = "unparseable line"
            if bad is not None:
                if fh.readline():
                    raise CorruptLog(bad + " followed by more data", len(events) - 1)
                break
            events.append(event)
            good_end = fh.tell()
    return events, good_end


@click.group()
def main():
    """Evolutionary program search by annealed sequential Monte Carlo."""


@main.command("run")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--seed", type=int, default=None, help="Override the config seed.")
@click.option("--dry-run", is_flag=True, help="Validate the config and exit.")
@click.option("--out", "run_dir", type=click.Path(file_okay=False), default=None, help="Run directory (default: evosmc_run_seed<seed>).")
def cmd_run(config_path, seed, dry_run, run_dir):
    """Execute a full run from a JSON config file."""
    try:
        setup = load_config(config_path, seed_override=seed)
    except ConfigError as exc:
        _fail("ConfigError", str(exc), code=2)
    if dry_run:
        click.echo(json.dumps({"valid": True, "run": setup.raw["run"]}, sort_keys=True))
        return
    if run_dir is None:
        run_dir = f"evosmc_run_seed{setup.config.seed}"
    os.makedirs(run_dir, exist_ok=True)
    events_path = os.path.join(run_dir, "events.jsonl")
    if os.path.exists(events_path):
        _fail("RunExists", f"{events_path} already exists; use resume or a fresh --out")
    with open(os.path.join(run_dir, "config.json"), "w", encoding="utf-8") as fh:
        json.dump(
            {"config_dir": os.path.dirname(os.path.abspath(config_path)), "config": setup.raw},
            fh,
            indent=2,
            sort_keys=True,
        )
        fh.write("\n")

    config = setup.config
    embedding = NgramHashEmbedding()
    with open(events_path, "w", encoding="utf-8") as fh:
        writer = EventLogWriter(fh, deterministic_timestamps=setup.deterministic_timestamps)
        writer.emit(
            "run_start",
            {"schema_version": SCHEMA_VERSION, "config": setup.raw, "task": setup.task_description},
        )
        try:
            islands = [
                init_island(
                    config, setup.prior, setup.evaluator, i, embedding=embedding, emit=writer.emit
                )
                for i in range(config.n_islands)
            ]
        except Exception as exc:
            _fail(type(exc).__name__, str(exc))
        for isl in islands:
            isl.kernel_stats = KernelStats.fresh(list(setup.kernels))
        schedules: dict[int, dict[int, float]] = {}
        epochs = _drive(
            setup,
            writer,
            islands,
            derive_rng(config.seed, 0, "migration"),
            {isl.island_id: 0 for isl in islands},
            schedules,
            epoch=0,
            last_migration_epoch=0,
        )
        summary = _summary(setup, islands, schedules, epochs)
        writer.emit("run_end", {"summary": summary})
    _write_outputs(run_dir, setup, summary, events_path)
    click.echo(f"run complete: best reward {summary['best_reward']:.6g} after {summary['total_proposals']} proposals")


@main.command("resume")
@click.argument("run_dir", type=click.Path(exists=True, file_okay=False))
def cmd_resume(run_dir):
    """Continue an interrupted run from its last logged checkpoint."""
    events_path = os.path.join(run_dir, "events.jsonl")
    config_path = os.path.join(run_dir, "config.json")
    if not os.path.exists(events_path) or not os.path.exists(config_path):
        _fail("NoCheckpoint", f"{run_dir} has no resumable run")
    try:
        events, good_end = _recover_events(events_path)
    except CorruptLog as exc:
        _fail("CorruptLog", str(exc))
    if any(ev.kind == "run_end" for ev in events):
        click.echo("run already complete; nothing to do")
        return
    if not events or events[0].kind != "run_start":
        _fail("NoCheckpoint", "log has no run_start event")

    with open(config_path, encoding="utf-8") as fh:
        stored = json.load(fh)
    try:
        setup = build_setup(stored["config"], config_dir=stored["config_dir"])
    except ConfigError as exc:
        _fail("ConfigError", str(exc), code=2)
    config = setup.config
    embedding = NgramHashEmbedding()

    mig_cp = None
    island_cps: dict[int, dict] = {}
    latest_client = None
    for ev in events:
        cp = ev.payload.get("checkpoint")
        if cp is None:
            continue
        if ev.kind == "migration":
            mig_cp = cp
        elif ev.kind == "iteration_end":
            island_cps[ev.payload["island"]] = cp
        latest_client = cp.get("client", latest_client)

    islands: list[IslandState] = []
    island_epochs: dict[int, int] = {}
    mig_epoch = mig_cp["epoch_global"] if mig_cp else 0
    mig_islands = {d["island_id"]: d for d in mig_cp["islands"]} if mig_cp else {}
    for island_id in range(config.n_islands):
        own = island_cps.get(island_id)
        if own is not None and (mig_cp is None or own["epoch_global"] > mig_epoch):
            islands.append(restore_island(own["island"], embedding=embedding))
            island_epochs[island_id] = own["epoch_global"]
        elif island_id in mig_islands:
            islands.append(restore_island(mig_islands[island_id], embedding=embedding))
            island_epochs[island_id] = mig_epoch
        elif own is not None:
            islands.append(restore_island(own["island"], embedding=embedding))
            island_epochs[island_id] = own["epoch_global"]
        else:
            # Killed before this island's first iteration: re-derive its
            # initial state from the seed (silently; init events are logged).
            isl = init_island(config, setup.prior, setup.evaluator, island_id, embedding=embedding)
            isl.kernel_stats = KernelStats.fresh(list(setup.kernels))
            islands.append(isl)
            island_epochs[island_id] = 0
    if all(island_epochs[i] == 0 and i not in island_cps and i not in mig_islands for i in island_epochs) and mig_cp is None and not island_cps:
        # No checkpoint anywhere; only proceed if initialization completed.
        n_init = sum(1 for ev in events if ev.kind == "init_particle")
        if n_init == 0:
            _fail("NoCheckpoint", "log contains no checkpoint and no initialized particles")

    # Rebuild the prompt-metrics ledger so rendered prompts match what the
    # uninterrupted run would have produced.
    for isl in islands:
        for entry in isl.archive.entries:
            setup.ledger.note(entry.program, entry.reward.value)
        for particle in isl.particles:
            setup.ledger.note(particle.program, particle.reward.value)

    if latest_client is not None:
        _restore_client(setup.client, latest_client)
    migration_rng = (
        restore_rng(mig_cp["migration_rng"]) if mig_cp else derive_rng(config.seed, 0, "migration")
    )

    schedules: dict[int, dict[int, float]] = {}
    for ev in events:
        if ev.kind == "iteration_start":
            schedules.setdefault(ev.payload["island"], {})[ev.payload["t"]] = ev.payload["lambda"]

    # Drop any damaged tail bytes, then append with continuing sequence numbers.
    with open(events_path, "r+", encoding="utf-8") as fh:
        fh.truncate(good_end)
    with open(events_path, "a", encoding="utf-8") as fh:
        writer = EventLogWriter(
            fh, deterministic_timestamps=setup.deterministic_timestamps, start_seq=len(events)
        )
        epochs = _drive(
            setup,
            writer,
            islands,
            migration_rng,
            island_epochs,
            schedules,
            epoch=min(island_epochs.values(), default=0),
            last_migration_epoch=mig_epoch,
        )
        summary = _summary(setup, islands, schedules, epochs)
        writer.emit("run_end", {"summary": summary})
    _write_outputs(run_dir, setup, summary, events_path)
    click.echo(f"resume complete: best reward {summary['best_reward']:.6g}")


@main.command("export")
@click.argument("run_dir", type=click.Path(exists=True, file_okay=False))
@click.option("--what", required=True, type=click.Choice(EXPORT_KINDS))
def cmd_export(run_dir, what):
    """Write one CSV projection of the run's event log."""
    try:
        path = export_table(run_dir, what)
    except MissingRun as exc:
        _fail("MissingRun", str(exc))
    except CorruptLog as exc:
        _fail("CorruptLog", str(exc))
    click.echo(path)


def _suite_invariance() -> list[dict]:
    results = []
    for n_bits, beta in ((3, 0.0), (4, 1.0), (4, 5.0), (4, 20.0)):
        space = bitstring_space(n_bits)
        residual = check_invariance(space, beta, BitFlipKernel(n_bits), "full_ratio")
        results.append(
            {
                "name": f"invariance n={n_bits} beta={beta:g}",
                "passed": residual <= 1e-10,
                "detail": f"residual {residual:.3e} (bound 1e-10)",
            }
        )
    return results


def _suite_ergodicity() -> list[dict]:
    results = []
    space = bitstring_space(4)
    fit = fit_ergodicity_rate(space, 2.0, BitFlipKernel(4))
    results.append(
        {
            "name": "geometric mixing, bit-flip kernel",
            "passed": fit.rho_hat < 1.0 and fit.r_squared >= 0.99,
            "detail": f"rho {fit.rho_hat:.4f}, R^2 {fit.r_squared:.5f}",
        }
    )
    try:
        fit_ergodicity_rate(space, 2.0, IdentityKernel())
        results.append({"name": "identity kernel rejected", "passed": False, "detail": "no error raised"})
    except NonErgodic as exc:
        results.append({"name": "identity kernel rejected", "passed": True, "detail": str(exc)})
    return results


def _suite_bridge() -> list[dict]:
    rng = np.random.default_rng(7)
    results = []
    worst = 0.0
    ok = True
    for trial in range(20):
        size = int(rng.integers(4, 33))
        rewards = rng.uniform(0, 1, size)
        from .oracle import FiniteSpace
        from .core import make_program

        states = tuple(make_program(f"s{trial}_{i}") for i in range(size))
        space = FiniteSpace(states=states, prior=tuple(np.full(size, 1.0 / size)), rewards=tuple(rewards))
        delta_r = float(rewards.max() - rewards.min())
        b_prev, b_t = sorted(rng.uniform(0, 6, 2))
        linf = bridge_linfty(space, b_prev, b_t)
        bound = math.exp((b_t - b_prev) * delta_r) * (1 + 1e-12)
        ok = ok and linf <= bound
        worst = max(worst, linf / bound)
        gamma = path_gamma(space, 5.0)
        gamma_bound = math.exp(5.0 * delta_r) * (1 + 1e-12)
        ok = ok and gamma <= gamma_bound
        worst = max(worst, gamma / gamma_bound)
    results.append(
        {
            "name": "bridge and path bounds on 20 random spaces",
            "passed": ok,
            "detail": f"worst ratio to bound {worst:.6f}",
        }
    )
    return results


def _suite_theorem1() -> list[dict]:
    space = bitstring_space(8)
    config = RunConfig(
        n_islands=1,
        particles_per_island=200,
        n_proposals=10,
        beta=5.0,
        kappa=0.5,
        migration_size=0,
        acceptance_mode="full_ratio",
        seed=1234,
    )
    result = theorem1_experiment(space, config, n_runs=25, epsilon=0.05)
    return [
        {
            "name": "terminal population concentrates on the tilted target",
            "passed": result.success_rate >= 0.75,
            "detail": f"success rate {result.success_rate:.2f} over 25 runs (need >= 0.75), "
            f"max error {max(result.errors):.4f}, target mean {result.p_star_f:.4f}",
        }
    ]


_SUITES = {
    "invariance": _suite_invariance,
    "ergodicity": _suite_ergodicity,
    "bridge": _suite_bridge,
    "theorem1": _suite_theorem1,
}


@main.command("oracle-check")
@click.argument("suite", type=click.Choice([*_SUITES, "all"]))
@click.option("--report", "report_path", type=click.Path(dir_okay=False), default="oracle_report.json")
def cmd_oracle_check(suite, report_path):
    """Run exact small-space diagnostics; exit 0 iff every property holds."""
    names = list(_SUITES) if suite == "all" else [suite]
    all_results = []
    for name in names:
        for result in _SUITES[name]():
            result["suite"] = name
            all_results.append(result)
            status = "PASS" if result["passed"] else "FAIL"
            click.echo(f"{status} [{name}] {result['name']}: {result['detail']}")
    passed = all(r["passed"] for r in all_results)
    with open(report_path, "w", encoding="utf-8") as fh:
        json.dump({"suite": suite, "passed": passed, "results": all_results}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    if not passed:
        raise SystemExit(1)


if __name__ == "__main__":
    main()
