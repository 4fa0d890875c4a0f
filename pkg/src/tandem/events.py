"""Append-only run logging with JSONL persistence and exact replay checking.

Every run of the control loop produces a stream of records: agent actions,
subtask state changes, belief snapshots, solver outputs, and run framing.
Replaying a log re-derives the graph and beliefs from the action records
alone and cross-checks them against every recorded snapshot, so a log is
its own integrity proof.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator

from .belief import EstimatorParams, TraitEstimator
from .model import (
    PHYSICAL_KINDS,
    ActionError,
    AgentAction,
    ScenarioConfig,
    TaskGraph,
    apply_action,
    build_study_graph,
    color_correctness,
    robot_action_duration,
)


class EventKind(str, Enum):
    HUMAN_ACTION = "human_action"
    ROBOT_ACTION = "robot_action"
    BELIEF_F = "belief_f"
    BELIEF_E = "belief_e"
    ALLOCATION = "allocation"
    SCHEDULE = "schedule"
    STATE_CHANGE = "state_change"
    RUN_META = "run_meta"


@dataclass(frozen=True)
class EventRecord:
    seq: int
    sim_time: float
    kind: EventKind
    payload: dict

    def to_dict(self) -> dict:
        return {
            "seq": self.seq,
            "sim_time": self.sim_time,
            "kind": self.kind.value,
            "payload": self.payload,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @staticmethod
    def from_dict(d: dict) -> "EventRecord":
        return EventRecord(
            seq=int(d["seq"]),
            sim_time=float(d["sim_time"]),
            kind=EventKind(d["kind"]),
            payload=dict(d["payload"]),
        )


class EventLog:
    """Ordered record list; ``append`` assigns strictly increasing seq."""

    def __init__(self, records: Iterable[EventRecord] = ()):
        self._records: list[EventRecord] = list(records)

    def append(self, kind: EventKind, payload: dict, sim_time: float) -> EventRecord:
        record = EventRecord(
            seq=len(self._records), sim_time=sim_time, kind=kind, payload=payload
        )
        self._records.append(record)
        return record

    @property
    def records(self) -> tuple[EventRecord, ...]:
        return tuple(self._records)

    def of_kind(self, kind: EventKind) -> list[EventRecord]:
        return [r for r in self._records if r.kind == kind]

    def __len__(self) -> int:
        return len(self._records)

    def __iter__(self) -> Iterator[EventRecord]:
        return iter(self._records)

    def dumps(self) -> str:
        return "".join(r.to_json() + "\n" for r in self._records)

    def write_jsonl(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")

    @staticmethod
    def loads(text: str) -> "EventLog":
        records = [
            EventRecord.from_dict(json.loads(line))
            for line in text.splitlines()
            if line.strip()
        ]
        return EventLog(records)

    @staticmethod
    def read_jsonl(path: str | Path) -> "EventLog":
        return EventLog.loads(Path(path).read_text(encoding="utf-8"))


class PersistentEventLog(EventLog):
    """EventLog that writes each record to a JSONL file as it is appended.

    The file is truncated on open; within a session every write is an
    append followed by a flush, so an abandoned or crashed session still
    leaves a well-formed, replayable log on disk.
    """

    def __init__(self, path: str | Path):
        super().__init__()
        self.path = Path(path)
        self._fh = self.path.open("w", encoding="utf-8")

    def append(self, kind: EventKind, payload: dict, sim_time: float) -> EventRecord:
        record = super().append(kind, payload, sim_time)
        self._fh.write(record.to_json() + "\n")
        self._fh.flush()
        return record

    def close(self) -> None:
        if not self._fh.closed:
            self._fh.close()


@dataclass(frozen=True)
class ReplayReport:
    exact: bool
    records: int
    divergence_seq: int | None = None
    detail: str = ""

    def to_dict(self) -> dict:
        return {
            "exact": self.exact,
            "records": self.records,
            "divergence_seq": self.divergence_seq,
            "detail": self.detail,
        }


def _diverge(record: EventRecord, detail: str, total: int) -> ReplayReport:
    return ReplayReport(
        exact=False, records=total, divergence_seq=record.seq, detail=detail
    )


def replay_log(log: EventLog) -> ReplayReport:
    """Re-derive graph and beliefs from the action stream and verify.

    Action records are re-applied through the task model and the trait
    estimator; every state_change, belief, and run_complete record must
    match the recomputed values bit for bit. Returns the first divergence
    or an exact report.
    """
    graph: TaskGraph | None = None
    estimator: TraitEstimator | None = None
    total = len(log)
    prev_seq = -1
    prev_time = float("-inf")
    # reconstructed robot occupation interval: a "robot_underway" rejection
    # is a session rule, not a graph rule, so it must be justified by an
    # accepted nonzero-duration robot action still in flight at that time
    underway_sid: int | None = None
    underway_until = float("-inf")

    for record in log:
        if record.seq <= prev_seq:
            return _diverge(record, "sequence numbers not strictly increasing", total)
        if record.sim_time < prev_time:
            return _diverge(record, "sim_time moved backwards", total)
        prev_seq, prev_time = record.seq, record.sim_time
        p = record.payload

        if record.kind == EventKind.RUN_META:
            event = p.get("event")
            if event == "run_start":
                try:
                    graph = build_study_graph(ScenarioConfig.from_dict(p["scenario"]))
                    estimator = TraitEstimator.fresh(
                        EstimatorParams.from_dict(p["planner_params"]["estimator"])
                    )
                except (KeyError, TypeError, ValueError) as exc:
                    return _diverge(record, f"malformed run_start: {exc}", total)
            elif event == "run_complete":
                if graph is None or estimator is None:
                    return _diverge(record, "run_complete before run_start", total)
                if graph.to_dict() != p.get("final_graph"):
                    return _diverge(record, "final graph mismatch", total)
                if estimator.belief_f.to_list() != p.get("belief_f"):
                    return _diverge(record, "final belief_f mismatch", total)
                if estimator.belief_e.to_list() != p.get("belief_e"):
                    return _diverge(record, "final belief_e mismatch", total)
            continue

        if graph is None or estimator is None:
            return _diverge(record, "record precedes run_start", total)

        if record.kind in (EventKind.HUMAN_ACTION, EventKind.ROBOT_ACTION):
            try:
                action = AgentAction.from_dict(p["action"])
            except (KeyError, TypeError, ValueError) as exc:
                return _diverge(record, f"malformed action: {exc}", total)
            if not p.get("accepted", False):
                if (
                    record.kind == EventKind.HUMAN_ACTION
                    and p.get("reason") == "robot_underway"
                ):
                    if (
                        action.subtask_id == underway_sid
                        and record.sim_time <= underway_until
                    ):
                        continue
                    return _diverge(
                        record,
                        "underway rejection without a matching robot interval",
                        total,
                    )
                if (
                    record.kind == EventKind.HUMAN_ACTION
                    and p.get("reason") == "red_light"
                ):
                    # live sessions refuse physical moves while the robot
                    # occupies the shared area, whatever spot they name
                    if (
                        action.kind in PHYSICAL_KINDS
                        and underway_sid is not None
                        and record.sim_time <= underway_until
                    ):
                        continue
                    return _diverge(
                        record,
                        "red-light rejection without a matching robot interval",
                        total,
                    )
                try:
                    apply_action(graph, action)
                except ActionError:
                    continue
                return _diverge(record, "rejected action replays as legal", total)
            if (
                record.kind == EventKind.HUMAN_ACTION
                and action.subtask_id == underway_sid
                and record.sim_time < underway_until
            ):
                return _diverge(
                    record, "human action accepted on a robot-held subtask", total
                )
            correct = color_correctness(graph, action)
            if record.kind == EventKind.ROBOT_ACTION:
                duration = robot_action_duration(graph, action)
                if duration > 0:
                    underway_sid = action.subtask_id
                    underway_until = record.sim_time + duration
            try:
                graph = apply_action(graph, action)
            except ActionError as exc:
                return _diverge(record, f"accepted action replays illegal: {exc}", total)
            if record.kind == EventKind.HUMAN_ACTION:
                estimator, _, _ = estimator.observe(action.kind, correct)
        elif record.kind == EventKind.STATE_CHANGE:
            try:
                sub = graph.subtask(int(p["subtask"]))
            except (ActionError, KeyError, TypeError, ValueError):
                return _diverge(record, "state_change names unknown subtask", total)
            recomputed = {
                "state": sub.state.value,
                "placed_color": sub.placed_color.value if sub.placed_color else None,
                "assigned_color": (
                    sub.assigned_color.value if sub.assigned_color else None
                ),
            }
            recorded = {
                "state": p.get("to"),
                "placed_color": p.get("placed_color"),
                "assigned_color": p.get("assigned_color"),
            }
            if recomputed != recorded:
                return _diverge(record, f"subtask {sub.id} state mismatch", total)
        elif record.kind == EventKind.BELIEF_F:
            if estimator.belief_f.to_list() != p.get("probs"):
                return _diverge(record, "belief_f probs mismatch", total)
        elif record.kind == EventKind.BELIEF_E:
            if estimator.belief_e.to_list() != p.get("probs"):
                return _diverge(record, "belief_e probs mismatch", total)
        # allocation and schedule records carry solver output; they are
        # decisions, not state, so replay treats them as opaque

    if graph is None:
        return ReplayReport(
            exact=False, records=total, divergence_seq=None, detail="log has no run_start"
        )
    return ReplayReport(exact=True, records=total)
