"""Event log persistence and replay verification.

Replay is the integrity oracle for recorded runs: the action stream alone
must reproduce every state and belief snapshot bit for bit. The divergence
tests perform JSON-level surgery on known-good logs, so each asserted
failure was planted independently of the replay code under test.
"""
from __future__ import annotations

import json

import pytest

from tandem.events import EventKind, EventLog, EventRecord, replay_log
from tandem.model import build_study_graph
from tandem.planner import PlannerParams
from tandem.scenarios import study_scenario
from tandem.simulator import HumanScript, SimConfig, run_sim


@pytest.fixture(scope="module")
def leader_log() -> EventLog:
    cfg = SimConfig(scenario=study_scenario("A"))
    return run_sim(cfg, HumanScript.leader(1))


@pytest.fixture(scope="module")
def error_log() -> EventLog:
    cfg = SimConfig(scenario=study_scenario("A"))
    return run_sim(cfg, HumanScript.error_prone(0.3, 2))


def doctored(log: EventLog, index: int, mutate) -> EventLog:
    """Copy a log through JSON, mutating the record dict at one index."""
    dicts = [json.loads(line) for line in log.dumps().splitlines()]
    mutate(dicts[index])
    return EventLog.loads("\n".join(json.dumps(d) for d in dicts))


def first_index(log: EventLog, predicate) -> int:
    for i, rec in enumerate(log.records):
        if predicate(rec):
            return i
    raise AssertionError("no record matches")


class TestLogStructure:
    def test_append_assigns_sequential_seq(self):
        log = EventLog()
        a = log.append(EventKind.RUN_META, {"event": "x"}, 0.0)
        b = log.append(EventKind.STATE_CHANGE, {"subtask": 1}, 1.5)
        assert (a.seq, b.seq) == (0, 1)
        assert len(log) == 2
        assert log.records[1].sim_time == 1.5

    def test_of_kind_filters(self):
        log = EventLog()
        log.append(EventKind.BELIEF_F, {"mean": 0.7}, 0.0)
        log.append(EventKind.BELIEF_E, {"mean": 0.1}, 0.0)
        log.append(EventKind.BELIEF_F, {"mean": 0.8}, 1.0)
        assert [r.payload["mean"] for r in log.of_kind(EventKind.BELIEF_F)] == [0.7, 0.8]

    def test_round_trip_preserves_records(self, leader_log):
        clone = EventLog.loads(leader_log.dumps())
        assert [r.to_dict() for r in clone] == [r.to_dict() for r in leader_log]

    def test_file_round_trip(self, tmp_path, leader_log):
        path = tmp_path / "run.jsonl"
        leader_log.write_jsonl(path)
        clone = EventLog.read_jsonl(path)
        assert clone.dumps() == leader_log.dumps()

    def test_one_json_object_per_line(self, leader_log):
        lines = leader_log.dumps().splitlines()
        assert len(lines) == len(leader_log)
        kinds = {k.value for k in EventKind}
        for line in lines:
            d = json.loads(line)
            assert set(d) == {"seq", "sim_time", "kind", "payload"}
            assert d["kind"] in kinds

    @pytest.mark.parametrize("value", [0.1 + 0.2, 1e-308, 123456.789, 2**53 - 1.0])
    def test_json_round_trips_doubles_exactly(self, value):
        log = EventLog()
        log.append(EventKind.BELIEF_F, {"mean": value, "probs": [value]}, value)
        clone = EventLog.loads(log.dumps())
        rec = clone.records[0]
        assert rec.sim_time == value
        assert rec.payload["mean"] == value
        assert rec.payload["probs"] == [value]

    def test_record_dict_round_trip(self):
        rec = EventRecord(3, 12.5, EventKind.ALLOCATION, {"q": {"1": 0}})
        assert EventRecord.from_dict(rec.to_dict()) == rec


class TestReplayExact:
    def test_fresh_run_replays_exact(self, leader_log):
        report = replay_log(leader_log)
        assert report.exact
        assert report.records == len(leader_log)
        assert report.divergence_seq is None

    def test_error_run_replays_exact(self, error_log):
        # misplacements, fixes, and re-placements all re-derive cleanly
        assert replay_log(error_log).exact

    def test_report_serializes(self, leader_log):
        d = replay_log(leader_log).to_dict()
        assert d["exact"] is True
        assert set(d) == {"exact", "records", "divergence_seq", "detail"}

    def test_justified_underway_rejection_replays_exact(self, leader_log):
        # a rejection naming the spot the robot is mid-action on is session
        # policy, not a graph rule; replay credits it against the robot
        # interval reconstructed from the accepted action stream
        log = EventLog([leader_log.records[0]])
        log.append(
            EventKind.ROBOT_ACTION,
            {"action": {"agent": "robot", "kind": "R1", "subtask_id": 1,
                        "block_color": None},
             "accepted": True, "reason": None},
            0.0,
        )
        t_r = build_study_graph(study_scenario("A")).subtask(1).t_r
        for when in (1.0, t_r):  # inside the interval and at its boundary
            log.append(
                EventKind.HUMAN_ACTION,
                {"action": {"agent": "human", "kind": "H1", "subtask_id": 1,
                            "block_color": "green"},
                 "accepted": False, "reason": "robot_underway"},
                when,
            )
        assert replay_log(log).exact

    def test_solver_records_are_opaque(self, leader_log):
        # allocation/schedule records carry decisions, not state: doctoring
        # them must not break replay
        idx = first_index(leader_log, lambda r: r.kind == EventKind.ALLOCATION)
        bad = doctored(
            leader_log, idx, lambda d: d["payload"].update(objective=-1.0)
        )
        assert replay_log(bad).exact


class TestReplayDivergence:
    def test_flipped_belief_bit_detected(self, leader_log):
        idx = first_index(leader_log, lambda r: r.kind == EventKind.BELIEF_F)
        seq = leader_log.records[idx].seq

        def flip(d):
            probs = d["payload"]["probs"]
            probs[0] = probs[0] + 2.0**-52 if probs[0] < 0.5 else probs[0] - 2.0**-52

        report = replay_log(doctored(leader_log, idx, flip))
        assert not report.exact
        assert report.divergence_seq == seq

    def test_flipped_state_change_detected(self, leader_log):
        idx = first_index(leader_log, lambda r: r.kind == EventKind.STATE_CHANGE)
        seq = leader_log.records[idx].seq
        bad = doctored(
            leader_log, idx, lambda d: d["payload"].update(to="misplaced")
        )
        report = replay_log(bad)
        assert not report.exact
        assert report.divergence_seq == seq

    def test_forged_action_color_detected(self, leader_log):
        idx = first_index(
            leader_log,
            lambda r: r.kind == EventKind.HUMAN_ACTION
            and r.payload.get("accepted")
            and r.payload["action"]["kind"] == "H1",
        )
        seq = leader_log.records[idx].seq
        colors = {"green", "orange", "pink", "blue"}

        def forge(d):
            current = d["payload"]["action"]["block_color"]
            d["payload"]["action"]["block_color"] = sorted(colors - {current})[0]

        report = replay_log(doctored(leader_log, idx, forge))
        assert not report.exact
        # divergence surfaces at the first cross-check after the forgery
        assert report.divergence_seq is not None
        assert report.divergence_seq >= seq

    def test_accepted_flag_forgery_detected(self, leader_log):
        idx = first_index(
            leader_log,
            lambda r: r.kind == EventKind.HUMAN_ACTION and r.payload.get("accepted"),
        )
        seq = leader_log.records[idx].seq
        bad = doctored(
            leader_log, idx, lambda d: d["payload"].update(accepted=False)
        )
        report = replay_log(bad)
        assert not report.exact
        assert report.divergence_seq == seq
        assert "legal" in report.detail

    def test_forged_underway_rejection_detected(self, leader_log):
        def forged(sid, when, prelude=()):
            log = EventLog([leader_log.records[0], *prelude])
            rec = log.append(
                EventKind.HUMAN_ACTION,
                {"action": {"agent": "human", "kind": "H1", "subtask_id": sid,
                            "block_color": "green"},
                 "accepted": False, "reason": "robot_underway"},
                when,
            )
            return replay_log(log), rec.seq

        # no robot action ever ran, so no interval can cover the claim
        report, seq = forged(1, 0.0)
        assert not report.exact
        assert report.divergence_seq == seq
        assert "interval" in report.detail

        # an interval exists but covers a different spot
        robot = EventRecord(
            seq=1, sim_time=0.0, kind=EventKind.ROBOT_ACTION,
            payload={"action": {"agent": "robot", "kind": "R1",
                                "subtask_id": 1, "block_color": None},
                     "accepted": True, "reason": None},
        )
        report, seq = forged(6, 1.0, prelude=(robot,))
        assert not report.exact
        assert report.divergence_seq == seq

        # the claimed spot matches but the interval has already elapsed
        t_r = build_study_graph(study_scenario("A")).subtask(1).t_r
        report, seq = forged(1, t_r + 0.5, prelude=(robot,))
        assert not report.exact
        assert report.divergence_seq == seq

    def test_duplicate_seq_detected(self, leader_log):
        bad = doctored(leader_log, 5, lambda d: d.update(seq=4))
        report = replay_log(bad)
        assert not report.exact
        assert "increasing" in report.detail

    def test_time_regression_detected(self, leader_log):
        last = len(leader_log) - 1
        bad = doctored(leader_log, last, lambda d: d.update(sim_time=-1.0))
        report = replay_log(bad)
        assert not report.exact
        assert "backwards" in report.detail

    def test_final_graph_forgery_detected(self, leader_log):
        idx = first_index(
            leader_log,
            lambda r: r.kind == EventKind.RUN_META
            and r.payload.get("event") == "run_complete",
        )
        seq = leader_log.records[idx].seq

        def forge(d):
            sub = d["payload"]["final_graph"]["subtasks"]["3"]
            sub["state"] = "initial"

        report = replay_log(doctored(leader_log, idx, forge))
        assert not report.exact
        assert report.divergence_seq == seq

    def test_empty_log_is_not_exact(self):
        report = replay_log(EventLog())
        assert not report.exact
        assert "run_start" in report.detail

    def test_record_before_run_start_detected(self):
        log = EventLog()
        log.append(EventKind.STATE_CHANGE, {"subtask": 1, "to": "initial"}, 0.0)
        report = replay_log(log)
        assert not report.exact
        assert report.divergence_seq == 0

    def test_malformed_run_start_detected(self, leader_log):
        bad = doctored(leader_log, 0, lambda d: d["payload"].pop("scenario"))
        report = replay_log(bad)
        assert not report.exact
        assert "run_start" in report.detail
