"""Append-only JSONL run log.

One JSON object per line with a gapless sequence number, a wall time, an
event kind, and a kind-specific payload.  With deterministic timestamps
enabled, wall time is the event sequence number, making same-seed runs
byte-identical.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass
from typing import IO

__all__ = ["SCHEMA_VERSION", "EVENT_KINDS", "CorruptLog", "RunEvent", "EventLogWriter", "read_events"]

SCHEMA_VERSION = 1

EVENT_KINDS = (
    "run_start",
    "init_particle",
    "iteration_start",
    "weights",
    "resample",
    "proposal",
    "migration",
    "iteration_end",
    "run_end",
)


class CorruptLog(RuntimeError):
    def __init__(self, message: str, last_good_seq: int):
        super().__init__(f"{message} (last good sequence number: {last_good_seq})")
        self.last_good_seq = last_good_seq


@dataclass(frozen=True)
class RunEvent:
    seq: int
    wall_time: float
    kind: str
    payload: dict


class EventLogWriter:
    """Single-writer JSONL sink; flushes every event so a killed run leaves
    a replayable prefix."""

    def __init__(self, fh: IO[str], deterministic_timestamps: bool = False, start_seq: int = 0):
        self._fh = fh
        self._seq = start_seq
        self._deterministic = deterministic_timestamps

    @property
    def next_seq(self) -> int:
        return self._seq

    def emit(self, kind: str, payload: dict) -> RunEvent:
        if kind not in EVENT_KINDS:
            raise ValueError(f"unknown event kind {kind!r}")
        wall = float(self._seq) if self._deterministic else time.time()
        event = RunEvent(seq=self._seq, wall_time=wall, kind=kind, payload=payload)
        self._fh.write(
            json.dumps(
                {"seq": event.seq, "wall_time": event.wall_time, "kind": kind, "payload": payload},
                sort_keys=True,
            )
            + "\n"
        )
        self._fh.flush()
        self._seq += 1
        return event


def read_events(path: str) -> list[RunEvent]:
    """Read a run log; raises CorruptLog on truncation, bad JSON, or a gap
    in sequence numbers."""
    events: list[RunEvent] = []
    last_good = -1
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh):
            if not line.endswith("\n"):
                raise CorruptLog(f"truncated final line {line_no}", last_good)
            try:
                obj = json.loads(line)
                event = RunEvent(
                    seq=int(obj["seq"]),
                    wall_time=float(obj["wall_time"]),
                    kind=str(obj["kind"]),
                    payload=dict(obj["payload"]),
                )
            except (json.JSONDecodeError, KeyError, TypeError, ValueError):
                raise CorruptLog(f"unparseable line {line_no}", last_good) from None
            if event.seq != last_good + 1:
                raise CorruptLog(f"sequence gap at line {line_no}", last_good)
            if event.kind not in EVENT_KINDS:
                raise CorruptLog(f"unknown kind {event.kind!r} at line {line_no}", last_good)
            events.append(event)
            last_good = event.seq
    return events
