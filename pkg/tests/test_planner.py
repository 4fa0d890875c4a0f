"""Control-loop behavior: observation, replanning, and full-run properties.

The whole-run tests use small deterministic drivers written here rather
than the shipped scripted archetypes, so a planner regression cannot hide
behind a driver change. Log scans are the oracle for run-level claims:
fix pairing, assignment-before-placement, and replan economy are all read
back from the record stream, never from planner internals.
"""
from __future__ import annotations

from dataclasses import replace

import pytest

from tandem.allocation import HUMAN, ROBOT, Allocation
from tandem.belief import expected_value
from tandem.events import EventKind, EventLog, replay_log
from tandem.model import (
    ActionKind,
    Agent,
    AgentAction,
    Color,
    Distance,
    SubtaskState,
    apply_action,
    build_study_graph,
)
from tandem.planner import (
    DriverMove,
    PlannerFault,
    PlannerParams,
    PlannerState,
    ReplanTrigger,
    initial_state,
    observe_human_action,
    plan_step,
    robot_action_duration,
    run_to_completion,
)
from tandem.scenarios import study_scenario
from tandem.scheduling import (
    SchedulingError,
    build_tau_new,
    next_robot_action,
    solve_schedule,
    validate_schedule,
)

from conftest import tiny_config


@pytest.fixture
def params() -> PlannerParams:
    return PlannerParams()


@pytest.fixture
def fresh(params) -> PlannerState:
    return initial_state(build_study_graph(study_scenario("A")), params)


def h1(graph, sid, color=None):
    color = color if color is not None else graph.subtask(sid).required_color
    return AgentAction(ActionKind.H1, sid, color)


def perfect_leader(state: PlannerState, now: float) -> DriverMove | None:
    """Always-correct human: handles assignments, else fills the next spot."""
    g = state.graph
    assigned = g.ids_in_state(SubtaskState.ASSIGNED_HUMAN)
    if assigned:
        sid = min(assigned)
        return DriverMove(AgentAction(ActionKind.H4, sid), g.subtask(sid).t_h)
    ready = [i for i in g.ids_in_state(SubtaskState.INITIAL) if g.preds_complete(i)]
    if ready:
        sid = min(ready)
        sub = g.subtask(sid)
        return DriverMove(h1(g, sid), sub.t_h)
    return None


def pure_follower(state: PlannerState, now: float) -> DriverMove | None:
    """Delegates one spot to open the session, then only obeys assignments."""
    g = state.graph
    assigned = g.ids_in_state(SubtaskState.ASSIGNED_HUMAN)
    if assigned:
        sid = min(assigned)
        return DriverMove(AgentAction(ActionKind.H4, sid), g.subtask(sid).t_h)
    if not state.human_started:
        ready = [i for i in g.ids_in_state(SubtaskState.INITIAL) if g.preds_complete(i)]
        sid = min(ready)
        return DriverMove(
            AgentAction(ActionKind.H2, sid, g.subtask(sid).required_color), 2.0
        )
    return None


def flaky_leader(period: int = 4):
    """Leader whose every ``period``-th placement picks a wrong color."""
    count = 0

    def drive(state: PlannerState, now: float) -> DriverMove | None:
        nonlocal count
        g = state.graph
        assigned = g.ids_in_state(SubtaskState.ASSIGNED_HUMAN)
        if assigned:
            sid = min(assigned)
            return DriverMove(AgentAction(ActionKind.H4, sid), g.subtask(sid).t_h)
        ready = [i for i in g.ids_in_state(SubtaskState.INITIAL) if g.preds_complete(i)]
        if not ready:
            return None
        sid = min(ready)
        sub = g.subtask(sid)
        count += 1
        color = sub.required_color
        if count % period == 0:
            color = next(
                c
                for c in sorted(Color)
                if c is not sub.required_color and g.inventory(Agent.HUMAN, c) > 0
            )
        return DriverMove(AgentAction(ActionKind.H1, sid, color), sub.t_h)

    return drive


def accepted_actions(log: EventLog) -> list[tuple[int, str, int]]:
    """(seq, kind, subtask) for every accepted action in order."""
    out = []
    for rec in log:
        if rec.kind in (EventKind.HUMAN_ACTION, EventKind.ROBOT_ACTION):
            if rec.payload.get("accepted"):
                a = rec.payload["action"]
                out.append((rec.seq, a["kind"], a["subtask_id"]))
    return out


class TestObserve:
    def test_wrong_color_flags_error_and_raises_error_belief(self, fresh, params):
        before = expected_value(fresh.estimator.belief_e)
        log = EventLog()
        state, accepted, reason = observe_human_action(
            fresh, h1(fresh.graph, 1, Color.GREEN), params, log=log, at_time=3.0
        )
        assert accepted and reason is None
        assert state.graph.subtask(1).state is SubtaskState.MISPLACED
        assert ReplanTrigger.ERROR_DETECTED in state.pending
        assert expected_value(state.estimator.belief_e) > before
        kinds = [r.kind for r in log]
        assert EventKind.HUMAN_ACTION in kinds
        assert EventKind.STATE_CHANGE in kinds
        assert EventKind.BELIEF_E in kinds

    def test_correct_compliance_raises_following_belief(self, fresh, params):
        graph = apply_action(fresh.graph, AgentAction(ActionKind.R2, 1))
        state = replace(fresh, graph=graph)
        before = expected_value(state.estimator.belief_f)
        after, accepted, _ = observe_human_action(
            state, AgentAction(ActionKind.H4, 1), params
        )
        assert accepted
        assert after.graph.subtask(1).state is SubtaskState.PLACED
        assert expected_value(after.estimator.belief_f) >= before

    def test_rejection_lowers_following_belief(self, fresh, params):
        graph = apply_action(fresh.graph, AgentAction(ActionKind.R2, 1))
        state = replace(fresh, graph=graph)
        before = expected_value(state.estimator.belief_f)
        after, accepted, _ = observe_human_action(
            state, AgentAction(ActionKind.H6, 1), params
        )
        assert accepted
        assert after.graph.subtask(1).state is SubtaskState.INITIAL
        assert expected_value(after.estimator.belief_f) < before

    def test_illegal_action_rejected_and_logged(self, fresh, params):
        log = EventLog()
        state, accepted, reason = observe_human_action(
            fresh, AgentAction(ActionKind.H4, 3), params, log=log
        )
        assert not accepted
        assert reason == "illegal_transition"
        assert state.graph.to_dict() == fresh.graph.to_dict()
        assert state.estimator == fresh.estimator
        rec = log.records[0]
        assert rec.kind is EventKind.HUMAN_ACTION
        assert rec.payload["accepted"] is False
        assert rec.payload["reason"] == "illegal_transition"

    def test_precedence_violation_rejected(self, fresh, params):
        _, accepted, reason = observe_human_action(
            fresh, h1(fresh.graph, 2), params
        )
        assert not accepted
        assert reason == "precedence"

    def test_delegation_counts_as_start(self, fresh, params):
        state, accepted, _ = observe_human_action(
            fresh, AgentAction(ActionKind.H2, 1, Color.PINK), params
        )
        assert accepted
        assert state.human_started


class TestPlanStep:
    def test_robot_waits_before_first_human_move(self, fresh, params):
        state, action = plan_step(fresh, params)
        assert action is None
        assert state.schedule is None

    def test_first_self_selection_wakes_robot(self, fresh, params):
        state, _, _ = observe_human_action(fresh, h1(fresh.graph, 1), params)
        state, action = plan_step(state, params)
        assert action is not None
        assert state.schedule is not None
        assert state.allocation is not None

    def test_delegation_wakes_robot(self, fresh, params):
        state, _, _ = observe_human_action(
            fresh, AgentAction(ActionKind.H2, 1, Color.PINK), params
        )
        state, action = plan_step(state, params)
        assert action is not None

    def test_completed_graph_yields_done_signal(self, params):
        graph = build_study_graph(tiny_config(spots=1))
        state = initial_state(graph, params)
        state, _, _ = observe_human_action(state, h1(graph, 1), params)
        assert state.graph.all_complete()
        state, action = plan_step(state, params)
        assert action is None

    def test_bad_delegation_is_rejected_first(self, fresh, params):
        # wrong-color assignment: the reactive veto precedes any planning
        state, _, _ = observe_human_action(
            fresh, AgentAction(ActionKind.H2, 1, Color.ORANGE), params
        )
        assert state.graph.subtask(1).state is SubtaskState.ASSIGNED_ROBOT_BAD
        state, action = plan_step(state, params)
        assert action == AgentAction(ActionKind.R6, 1)
        assert state.graph.subtask(1).state is SubtaskState.INITIAL
        assert robot_action_duration(state.graph, action) == 0.0

    def test_single_open_task_forces_r1(self, params):
        graph = build_study_graph(tiny_config(spots=2))
        state = initial_state(graph, params)
        state, _, _ = observe_human_action(state, h1(graph, 1), params)
        state, action = plan_step(state, params)
        assert action == AgentAction(ActionKind.R1, 2)

    def test_retry_cap_exhaustion_faults(self, fresh, params, monkeypatch):
        state, _, _ = observe_human_action(fresh, h1(fresh.graph, 1), params)

        def refuse(*args, **kwargs):
            raise SchedulingError("forced failure")

        monkeypatch.setattr("tandem.planner.solve_schedule", refuse)
        with pytest.raises(PlannerFault):
            plan_step(state, params)


class TestMidRunSnapshot:
    """A mid-run state with two done spots, two misplacements, and one
    standing assignment; the published allocation for it sends spots
    1, 2, 4, 5, 7, 9, 10, 13, 18, 20 to the human and 3, 8, 12, 14, 15,
    17, 19 to the robot."""

    def build(self):
        graph = build_study_graph(study_scenario("A"))
        graph = apply_action(graph, h1(graph, 6))                 # done
        graph = apply_action(graph, h1(graph, 16))                # done
        graph = apply_action(graph, h1(graph, 1, Color.ORANGE))   # wrong
        graph = apply_action(graph, h1(graph, 17, Color.ORANGE))  # wrong
        graph = apply_action(graph, AgentAction(ActionKind.R2, 11))
        q = {i: HUMAN for i in (1, 2, 4, 5, 7, 9, 10, 13, 18, 20)}
        q.update({i: ROBOT for i in (3, 8, 12, 14, 15, 17, 19)})
        q[11] = HUMAN
        return graph, Allocation(q=q, objective=0.0)

    def test_snapshot_states(self):
        graph, allocation = self.build()
        assert graph.subtask(6).state is SubtaskState.PLACED
        assert graph.subtask(1).state is SubtaskState.MISPLACED
        assert graph.subtask(17).state is SubtaskState.MISPLACED
        assert graph.subtask(11).state is SubtaskState.ASSIGNED_HUMAN
        assert len(graph.open_ids()) == 18

    def test_first_robot_action_is_the_free_assignment(self):
        graph, allocation = self.build()
        tasks = build_tau_new(graph, allocation)
        schedule = solve_schedule(tasks)
        validate_schedule(schedule, tasks)
        action = next_robot_action(schedule, graph)
        # the one ready zero-cost message dominates both pending fixes
        assert action == AgentAction(ActionKind.R2, 7)
        starters = {
            e.uid for e in schedule.entries if e.agent is Agent.ROBOT and e.start == 0.0
        }
        assert "7a" in starters

    def test_fix_steps_precede_their_spots(self):
        graph, allocation = self.build()
        tasks = build_tau_new(graph, allocation)
        schedule = solve_schedule(tasks)
        for sid in (1, 17):
            fix = schedule.entry(f"{sid}e")
            base = schedule.entry(str(sid))
            assert fix.finish <= base.start


class TestRunToCompletion:
    def run(self, driver, params=None, scenario="A", **kwargs):
        params = params or PlannerParams()
        state = initial_state(build_study_graph(study_scenario(scenario)), params)
        return run_to_completion(state, params, driver, **kwargs)

    def test_perfect_leader_completes_without_fixes(self):
        state, log = self.run(perfect_leader)
        assert state.graph.all_complete()
        acts = accepted_actions(log)
        assert all(kind != "R3" for _, kind, _ in acts)
        assert all(
            rec.payload.get("to") != "misplaced"
            for rec in log.of_kind(EventKind.STATE_CHANGE)
        )
        # no fix steps were ever scheduled either
        for rec in log.of_kind(EventKind.SCHEDULE):
            assert all(not e["id"].endswith("e") for e in rec.payload["entries"])

    def test_pure_follower_placements_follow_assignments(self):
        state, log = self.run(pure_follower)
        assert state.graph.all_complete()
        acts = accepted_actions(log)
        assert sum(1 for _, kind, _ in acts if kind == "H1") == 0
        assigned_at: dict[int, int] = {}
        for seq, kind, sid in acts:
            if kind == "R2":
                assigned_at.setdefault(sid, seq)
            elif kind == "H4":
                assert sid in assigned_at and assigned_at[sid] < seq

    def test_every_misplacement_is_fixed_then_replaced(self):
        state, log = self.run(flaky_leader(period=4))
        assert state.graph.all_complete()
        acts = accepted_actions(log)
        misplaced_seqs = [
            (rec.seq, int(rec.payload["subtask"]))
            for rec in log.of_kind(EventKind.STATE_CHANGE)
            if rec.payload.get("to") == "misplaced"
        ]
        assert misplaced_seqs, "driver never misplaced; test is vacuous"
        for seq, sid in misplaced_seqs:
            fixes = [s for s, kind, i in acts if kind == "R3" and i == sid and s > seq]
            assert fixes, f"misplacement on {sid} never fixed"

    def test_error_safety_fix_precedes_chain_progress(self):
        # once a spot is misplaced, its successor cannot complete before
        # the fix lands
        state, log = self.run(flaky_leader(period=3))
        fix_seq: dict[int, int] = {}
        for seq, kind, sid in accepted_actions(log):
            if kind == "R3" and sid not in fix_seq:
                fix_seq[sid] = seq
        graph = build_study_graph(study_scenario("A"))
        for rec in log.of_kind(EventKind.STATE_CHANGE):
            if rec.payload.get("to") != "misplaced":
                continue
            sid = int(rec.payload["subtask"])
            succs = [j for j in graph.subtasks if sid in graph.preds_of(j)]
            for rec2 in log.of_kind(EventKind.STATE_CHANGE):
                if (
                    int(rec2.payload["subtask"]) in succs
                    and rec2.payload.get("to") == "placed_correctly"
                    and rec2.seq > rec.seq
                ):
                    assert fix_seq.get(sid, 10**9) < rec2.seq

    def test_schedule_tasks_match_allocation(self):
        _, log = self.run(perfect_leader)
        records = list(log)
        pairs = 0
        for prev, rec in zip(records, records[1:]):
            if rec.kind is EventKind.SCHEDULE:
                assert prev.kind is EventKind.ALLOCATION
                base_ids = {
                    int(e["id"])
                    for e in rec.payload["entries"]
                    if not e["id"].endswith(("a", "e"))
                }
                assert base_ids == {int(i) for i in prev.payload["q"]}
                pairs += 1
        assert pairs >= 2

    def test_replan_economy(self):
        _, log = self.run(perfect_leader)
        allocs = [rec.payload["q"] for rec in log.of_kind(EventKind.ALLOCATION)]
        assert len(allocs) >= 3
        worst = 0
        for a, b in zip(allocs, allocs[1:]):
            common = set(a) & set(b)
            worst = max(worst, sum(1 for i in common if a[i] != b[i]))
        # flips between consecutive plans stay near the churn penalty's bound
        assert worst <= 3

    def test_logs_replay_exactly(self):
        _, log = self.run(flaky_leader(period=3))
        assert replay_log(log).exact

    def test_horizon_cuts_run_short(self):
        state, log = self.run(perfect_leader, horizon=30.0)
        assert not state.graph.all_complete()
        assert state.clock == 30.0
        end = log.records[-1]
        assert end.payload["event"] == "run_complete"
        assert end.payload["timed_out"] is True

    def test_deadlocked_driver_faults(self):
        with pytest.raises(PlannerFault, match="deadlock"):
            self.run(lambda state, now: None)

    def test_robot_resolves_delegation_churn(self):
        # a human who keeps delegating the last spot with the wrong color
        # cannot livelock the run: the veto returns the spot and the robot
        # eventually places it itself
        graph = build_study_graph(tiny_config(spots=1))
        params = PlannerParams()
        state = initial_state(graph, params)

        def churn(state, now):
            g = state.graph
            if g.subtask(1).state is SubtaskState.INITIAL:
                return DriverMove(AgentAction(ActionKind.H2, 1, Color.BLUE), 2.0)
            return None

        final, log = run_to_completion(state, params, churn)
        assert final.graph.all_complete()
        acts = [kind for _, kind, _ in accepted_actions(log)]
        assert "R6" in acts and "R1" in acts

    def test_stall_guard_aborts_livelock(self, monkeypatch):
        # progress requires the robot; with it muted, a human toggling a
        # delegation on and off commits forever without completing anything
        graph = build_study_graph(tiny_config(spots=2))
        small = PlannerParams(stall_guard=8)
        state = initial_state(graph, small)
        monkeypatch.setattr(
            "tandem.planner.next_robot_action", lambda schedule, graph: None
        )

        def toggler(state, now):
            g = state.graph
            if not state.human_started:
                return DriverMove(h1(g, 1), 10.0)
            sub = g.subtask(2)
            if sub.state is SubtaskState.INITIAL:
                return DriverMove(
                    AgentAction(ActionKind.H2, 2, sub.required_color), 2.0
                )
            if sub.state is SubtaskState.ASSIGNED_ROBOT_OK:
                return DriverMove(AgentAction(ActionKind.H5, 2), 2.0)
            return None

        with pytest.raises(PlannerFault, match="completed"):
            run_to_completion(state, small, toggler)

    def test_burst_cap_stops_spinning_robot(self, monkeypatch):
        monkeypatch.setattr(
            "tandem.planner.robot_action_duration", lambda graph, action: 0.0
        )
        with pytest.raises(PlannerFault, match="spinning"):
            self.run(perfect_leader, params=PlannerParams(burst_cap=5))

    def test_shared_area_lock_delays_human_placement(self):
        # with the lock on, no human physical completion may land strictly
        # inside a robot placement interval; robot actions commit at start,
        # so their intervals rebuild from the scenario's nominal times
        state, log = self.run(flaky_leader(period=5), lock_shared_area=True)
        assert state.graph.all_complete()
        cfg = study_scenario("A")
        graph = build_study_graph(cfg)
        intervals = []
        for rec in log:
            if rec.kind is EventKind.ROBOT_ACTION and rec.payload.get("accepted"):
                a = rec.payload["action"]
                if a["kind"] in ("R1", "R4"):
                    d = cfg.nominal_time(
                        Agent.ROBOT, graph.subtask(a["subtask_id"]).required_color
                    )
                elif a["kind"] == "R3":
                    d = cfg.nominal_times[(Agent.ROBOT, Distance.NEAR)]
                else:
                    continue
                intervals.append((rec.sim_time, rec.sim_time + d))
        finishes = [
            rec.sim_time
            for rec in log
            if rec.kind is EventKind.HUMAN_ACTION
            and rec.payload.get("accepted")
            and rec.payload["action"]["kind"] in ("H1", "H3", "H4")
        ]
        assert intervals and finishes
        for t in finishes:
            for s, f in intervals:
                assert not (s < t < f), f"human placement at {t} inside [{s}, {f})"
