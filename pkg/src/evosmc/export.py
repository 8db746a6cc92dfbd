"""Tabular projections of a run's event log.

Each export reads only events.jsonl and writes one CSV, so re-exporting is
idempotent and byte-identical.  Available projections:

- schedule: per island and iteration, the tempering fraction, the increment
  in effective inverse temperature, and the effective sample size.
- kernels: per-iteration kernel selection counts plus cumulative selection
  and acceptance tallies.
- flow: per-particle rewards, normalized resampling weights (with rank),
  and realized offspring counts.
- best-curve: best and mean reward per island per iteration.
"""

from __future__ import annotations

import csv
import os

from .events import CorruptLog, RunEvent, read_events

__all__ = ["MissingRun", "CorruptLog", "EXPORT_KINDS", "export_table", "export_rows"]

EXPORT_KINDS = ("schedule", "kernels", "flow", "best-curve")


class MissingRun(FileNotFoundError):
    """Run directory has no event log."""


def _fmt(value):
    if isinstance(value, float):
        return repr(value)
    return value


def _schedule_rows(events: list[RunEvent]) -> tuple[list[str], list[list]]:
    # Keyed dicts keep the last occurrence so a resumed (partially
    # replayed) log projects identically to an uninterrupted one.
    ess_by_key = {}
    starts = {}
    for ev in events:
        if ev.kind == "weights":
            ess_by_key[(ev.payload["island"], ev.payload["t"])] = ev.payload["ess"]
        elif ev.kind == "iteration_start":
            starts[(ev.payload["island"], ev.payload["t"])] = ev.payload
    rows = []
    for key in sorted(starts):
        p = starts[key]
        rows.append([p["island"], p["t"], p["lambda"], p["delta_beta"], ess_by_key.get(key)])
    return ["island", "t", "lambda", "delta_beta", "ess"], rows


def _kernel_rows(events: list[RunEvent]) -> tuple[list[str], list[list]]:
    proposals: dict[tuple, dict] = {}
    for ev in events:
        if ev.kind == "proposal":
            p = ev.payload
            proposals[(p["island"], p["t"], p["slot"], p["step"])] = p
    per_iter: dict[tuple, dict[str, list[int]]] = {}
    for p in proposals.values():
        counts = per_iter.setdefault((p["island"], p["t"]), {}).setdefault(p["kernel_id"], [0, 0])
        counts[0] += 1
        counts[1] += int(bool(p["accepted"]))
    cumulative: dict[tuple, list[int]] = {}
    rows = []
    for key in sorted(per_iter):
        island, t = key
        for kernel_id in sorted(per_iter[key]):
            selected, accepted = per_iter[key][kernel_id]
            cum = cumulative.setdefault((island, kernel_id), [0, 0])
            cum[0] += selected
            cum[1] += accepted
            rate = cum[1] / cum[0] if cum[0] else 0.0
            rows.append([island, t, kernel_id, selected, accepted, cum[0], cum[1], rate])
    return (
        ["island", "t", "kernel_id", "selected", "accepted", "cum_selected", "cum_accepted", "cum_acceptance_rate"],
        rows,
    )


def _flow_rows(events: list[RunEvent]) -> tuple[list[str], list[list]]:
    weights_by_key = {}
    ancestors_by_key = {}
    for ev in events:
        key = (ev.payload.get("island"), ev.payload.get("t"))
        if ev.kind == "weights":
            weights_by_key[key] = ev.payload
        elif ev.kind == "resample":
            ancestors_by_key[key] = ev.payload["ancestors"]
    rows = []
    for key in sorted(weights_by_key):
        island, t = key
        payload = weights_by_key[key]
        normalized = payload["normalized"]
        rewards = payload["rewards"]
        ancestors = ancestors_by_key.get(key, [])
        offspring = [0] * len(normalized)
        for a in ancestors:
            offspring[a] += 1
        ranks = sorted(range(len(normalized)), key=lambda i: (-normalized[i], i))
        rank_of = {idx: r for r, idx in enumerate(ranks)}
        for i, w in enumerate(normalized):
            rows.append([island, t, i, rank_of[i], rewards[i], w, offspring[i]])
    return ["island", "t", "particle", "weight_rank", "reward", "weight", "offspring"], rows


def _best_curve_rows(events: list[RunEvent]) -> tuple[list[str], list[list]]:
    ends = {}
    for ev in events:
        if ev.kind == "iteration_end":
            ends[(ev.payload["island"], ev.payload["t"])] = ev.payload
    rows = []
    best_so_far: dict[int, float] = {}
    for key in sorted(ends):
        island, t = key
        p = ends[key]
        best_so_far[island] = max(best_so_far.get(island, float("-inf")), p["best_reward"])
        rows.append([island, t, p["best_reward"], best_so_far[island], p["mean_reward"]])
    return ["island", "t", "best_reward", "best_so_far", "mean_reward"], rows


_PROJECTIONS = {
    "schedule": _schedule_rows,
    "kernels": _kernel_rows,
    "flow": _flow_rows,
    "best-curve": _best_curve_rows,
}


def export_rows(events: list[RunEvent], what: str) -> tuple[list[str], list[list]]:
    try:
        projection = _PROJECTIONS[what]
    except KeyError:
        raise ValueError(f"unknown export kind {what!r}; choose from {EXPORT_KINDS}") from None
    return projection(events)


def export_table(run_dir: str, what: str) -> str:
    """Project the run log into `<run_dir>/export/<what>.csv`; returns the path."""
    log_path = os.path.join(run_dir, "events.jsonl")
    if not os.path.exists(log_path):
        raise MissingRun(f"no event log at {log_path}")
    events = read_events(log_path)
    header, rows = export_rows(events, what)
    out_dir = os.path.join(run_dir, "export")
    os.makedirs(out_dir, exist_ok=True)
    out_path = os.path.join(out_dir, f"{what}.csv")
    with open(out_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
    return out_path
