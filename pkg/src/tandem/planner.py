"""Robot control loop: observe, estimate, allocate, schedule, act.

The loop keeps two trait beliefs about the human current, re-solves the
assignment and the schedule whenever the world changed enough to matter,
and turns the earliest scheduled robot entry into one concrete action per
step. A generic event-clock harness interleaves the robot with any timed
human driver until the whole pattern is placed.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable

from .allocation import (
    Allocation,
    AllocationError,
    CostParams,
    EmptyTaskError,
    InfeasibleAllocationError,
    PointEstimates,
    solve_allocation,
)
from .belief import EstimatorParams, TraitEstimator
from .events import EventKind, EventLog
from .model import (
    ActionError,
    ActionKind,
    Agent,
    AgentAction,
    PHYSICAL_KINDS,
    Subtask,
    SubtaskState,
    TaskGraph,
    apply_action,
    color_correctness,
    robot_action_duration,
)
from .scheduling import (
    NoRobotStartAvailable,
    Schedule,
    SchedulingError,
    build_tau_new,
    next_robot_action,
    solve_schedule,
    validate_schedule,
)


class PlannerFault(RuntimeError):
    """Unrecoverable planning failure; carries a human-readable diagnostic."""


class ReplanTrigger(str, Enum):
    HUMAN_ACTION = "human_action_changed_state"
    ROBOT_ACTION = "robot_action_completed"
    ERROR_DETECTED = "error_detected"
    SCHEDULE_INVALIDATED = "schedule_invalidated"
    BELIEF_SHIFT = "belief_shift"


@dataclass(frozen=True)
class PlannerParams:
    cost: CostParams = field(default_factory=CostParams)
    estimator: EstimatorParams = field(default_factory=EstimatorParams)
    belief_shift_threshold: float = 0.1  # |change in E[alpha_f]| forcing a replan
    retry_cap: int = 5
    burst_cap: int = 25  # zero-duration robot actions allowed at one instant
    stall_guard: int = 250  # committed actions without a completion before abort
    schedule_time_limit: float = 2.0

    def __post_init__(self) -> None:
        if self.retry_cap < 1:
            raise ValueError("retry_cap must be at least 1")
        if self.belief_shift_threshold < 0:
            raise ValueError("belief_shift_threshold must be >= 0")

    def to_dict(self) -> dict:
        return {
            "cost": self.cost.to_dict(),
            "estimator": self.estimator.to_dict(),
            "belief_shift_threshold": self.belief_shift_threshold,
            "retry_cap": self.retry_cap,
            "burst_cap": self.burst_cap,
            "stall_guard": self.stall_guard,
            "schedule_time_limit": self.schedule_time_limit,
        }

    @staticmethod
    def from_dict(d: dict) -> "PlannerParams":
        return PlannerParams(
            cost=CostParams.from_dict(d["cost"]),
            estimator=EstimatorParams.from_dict(d["estimator"]),
            belief_shift_threshold=float(d["belief_shift_threshold"]),
            retry_cap=int(d["retry_cap"]),
            burst_cap=int(d["burst_cap"]),
            stall_guard=int(d["stall_guard"]),
            schedule_time_limit=float(d["schedule_time_limit"]),
        )


@dataclass(frozen=True)
class PlannerState:
    """Everything the robot knows; immutable, one logical writer."""

    graph: TaskGraph
    estimator: TraitEstimator
    clock: float = 0.0
    allocation: Allocation | None = None
    schedule: Schedule | None = None
    pending: frozenset[ReplanTrigger] = frozenset()
    planned_p_f: float | None = None
    human_started: bool = False  # first graph-changing human action seen
    robot_underway: int | None = None  # spot the robot is physically working


def initial_state(graph: TaskGraph, params: PlannerParams) -> PlannerState:
    return PlannerState(graph=graph, estimator=TraitEstimator.fresh(params.estimator))


def _log(log: EventLog | None, kind: EventKind, payload: dict, t: float) -> None:
    if log is not None:
        log.append(kind, payload, t)


def _action_payload(action: AgentAction, accepted: bool,
                    reason: str | None = None) -> dict:
    return {"action": action.to_dict(), "accepted": accepted, "reason": reason}


def _state_change_payload(before: Subtask, after: Subtask) -> dict:
    return {
        "subtask": after.id,
        "from": before.state.value,
        "to": after.state.value,
        "placed_color": after.placed_color.value if after.placed_color else None,
        "assigned_color": after.assigned_color.value if after.assigned_color else None,
    }


def observe_human_action(
    state: PlannerState,
    action: AgentAction,
    params: PlannerParams,
    log: EventLog | None = None,
    at_time: float | None = None,
) -> tuple[PlannerState, bool, str | None]:
    """Fold one human action into the world model and both beliefs.

    Illegal actions leave the state unchanged (clock aside) and are
    logged as rejected. Returns (state, accepted, reject_reason).
    """
    if action.agent != Agent.HUMAN:
        raise ValueError(f"{action.kind.value} is not a human action")
    t = state.clock if at_time is None else at_time
    # a spot the robot is mid-action on is off limits regardless of what
    # the task state machine would allow (the GUI greys it out)
    if state.robot_underway == action.subtask_id:
        _log(log, EventKind.HUMAN_ACTION,
             _action_payload(action, False, "robot_underway"), t)
        return replace(state, clock=t), False, "robot_underway"
    try:
        correct = color_correctness(state.graph, action)
        before = state.graph.subtask(action.subtask_id)
        new_graph = apply_action(state.graph, action)
    except ActionError as exc:
        _log(log, EventKind.HUMAN_ACTION,
             _action_payload(action, False, exc.reason), t)
        return replace(state, clock=t), False, exc.reason

    estimator, f_updated, e_updated = state.estimator.observe(action.kind, correct)
    _log(log, EventKind.HUMAN_ACTION, _action_payload(action, True), t)
    _log(log, EventKind.STATE_CHANGE,
         _state_change_payload(before, new_graph.subtask(action.subtask_id)), t)
    if f_updated:
        _log(log, EventKind.BELIEF_F,
             {"probs": estimator.belief_f.to_list(), "mean": estimator.p_f}, t)
    if e_updated:
        _log(log, EventKind.BELIEF_E,
             {"probs": estimator.belief_e.to_list(), "mean": estimator.p_e}, t)

    triggers = set(state.pending)
    triggers.add(ReplanTrigger.HUMAN_ACTION)
    if correct is False:
        triggers.add(ReplanTrigger.ERROR_DETECTED)
    if (state.planned_p_f is not None
            and abs(estimator.p_f - state.planned_p_f)
            >= params.belief_shift_threshold):
        triggers.add(ReplanTrigger.BELIEF_SHIFT)
    return (
        replace(
            state,
            graph=new_graph,
            estimator=estimator,
            clock=t,
            pending=frozenset(triggers),
            human_started=state.human_started
            or action.kind in (ActionKind.H1, ActionKind.H2),
        ),
        True,
        None,
    )


def _commit_robot_action(
    state: PlannerState,
    action: AgentAction,
    log: EventLog | None,
    t: float,
) -> PlannerState:
    # raises ActionError when the schedule went stale; caller recovers
    before = state.graph.subtask(action.subtask_id)
    new_graph = apply_action(state.graph, action)
    _log(log, EventKind.ROBOT_ACTION, _action_payload(action, True), t)
    _log(log, EventKind.STATE_CHANGE,
         _state_change_payload(before, new_graph.subtask(action.subtask_id)), t)
    return replace(
        state,
        graph=new_graph,
        clock=t,
        pending=state.pending | {ReplanTrigger.ROBOT_ACTION},
    )


def _replan(
    state: PlannerState,
    params: PlannerParams,
    log: EventLog | None,
    t: float,
    exclude: frozenset[int],
) -> PlannerState:
    """Allocation/schedule handshake with failed allocations excluded."""
    estimates = PointEstimates(p_f=state.estimator.p_f, p_e=state.estimator.p_e)
    seed = state.schedule.task_order() if state.schedule is not None else None
    banned: set = set()
    allocation: Allocation | None = None
    schedule: Schedule | None = None
    for _ in range(params.retry_cap):
        try:
            try:
                allocation = solve_allocation(
                    state.graph, estimates, params.cost, prev=state.allocation,
                    exclude=tuple(sorted(exclude)), banned=frozenset(banned))
            except InfeasibleAllocationError:
                # nothing is immediately robot-startable; drop the start
                # requirement and let the schedule decide who can act
                allocation = solve_allocation(
                    state.graph, estimates, params.cost, prev=state.allocation,
                    exclude=tuple(sorted(exclude)), banned=frozenset(banned),
                    require_u=False)
        except EmptyTaskError:
            raise PlannerFault("plan requested with no open subtasks") from None
        except AllocationError as exc:
            raise PlannerFault(f"allocation infeasible: {exc}") from exc
        tau = build_tau_new(state.graph, allocation)
        try:
            schedule = solve_schedule(
                tau, time_limit=params.schedule_time_limit, seed_order=seed)
        except NoRobotStartAvailable:
            # every robot task waits on human work; no alternative
            # allocation can conjure a startable one, so the robot idles
            _log(log, EventKind.ALLOCATION,
                 allocation.to_dict() | {"p_f": estimates.p_f,
                                         "p_e": estimates.p_e}, t)
            return replace(state, allocation=allocation, schedule=None,
                           clock=t, pending=frozenset(),
                           planned_p_f=state.estimator.p_f)
        except SchedulingError:
            banned.add(allocation.key())
            continue
        validate_schedule(schedule, tau)
        break
    else:
        raise PlannerFault(
            f"no feasible plan after {params.retry_cap} attempts "
            f"({len(banned)} allocations excluded)")
    _log(log, EventKind.ALLOCATION,
         allocation.to_dict() | {"p_f": estimates.p_f, "p_e": estimates.p_e}, t)
    _log(log, EventKind.SCHEDULE, schedule.to_dict(), t)
    return replace(state, allocation=allocation, schedule=schedule, clock=t,
                   pending=frozenset(), planned_p_f=state.estimator.p_f)


def plan_step(
    state: PlannerState,
    params: PlannerParams,
    log: EventLog | None = None,
    at_time: float | None = None,
    exclude: frozenset[int] = frozenset(),
) -> tuple[PlannerState, AgentAction | None]:
    """One robot decision: replan if triggered, then act on the schedule.

    Returns the applied action, or None when the robot idles (everything
    done, waiting for the human's opening move, or all robot work blocked
    behind the human). ``exclude`` pins subtasks the human is visibly
    working on to the human side for this plan.
    """
    t = state.clock if at_time is None else at_time
    state = replace(state, clock=t)
    if state.graph.all_complete():
        return state, None

    # wrong-color delegations are rejected immediately; zero-duration
    # messages need no schedule slot
    bad = state.graph.ids_in_state(SubtaskState.ASSIGNED_ROBOT_BAD)
    if bad:
        action = AgentAction(ActionKind.R6, bad[0])
        return _commit_robot_action(state, action, log, t), action

    # the human opens the session; the robot's first plan waits until it has
    # seen at least one preference-revealing human move
    if not state.human_started:
        return state, None

    needs = bool(state.pending) or state.schedule is None
    if (not needs and state.planned_p_f is not None
            and abs(state.estimator.p_f - state.planned_p_f)
            >= params.belief_shift_threshold):
        needs = True
    if needs:
        state = _replan(state, params, log, t, exclude)
        if state.schedule is None:
            return state, None

    action = next_robot_action(state.schedule, state.graph)
    if action is None:
        return state, None
    try:
        return _commit_robot_action(state, action, log, t), action
    except ActionError as exc:
        _log(log, EventKind.ROBOT_ACTION,
             _action_payload(action, False, exc.reason), t)
        state = _replan(
            replace(state,
                    pending=state.pending | {ReplanTrigger.SCHEDULE_INVALIDATED}),
            params, log, t, exclude)
        if state.schedule is None:
            return state, None
        action = next_robot_action(state.schedule, state.graph)
        if action is None:
            return state, None
        return _commit_robot_action(state, action, log, t), action


@dataclass(frozen=True)
class DriverMove:
    """One timed human decision: the action plus the seconds it consumes."""

    action: AgentAction
    duration: float


HumanDriver = Callable[[PlannerState, float], DriverMove | None]


def _completed_count(graph: TaskGraph) -> int:
    return len(graph.subtasks) - len(graph.open_ids())


def run_to_completion(
    state: PlannerState,
    params: PlannerParams,
    driver: HumanDriver,
    log: EventLog | None = None,
    horizon: float | None = None,
    lock_shared_area: bool = False,
) -> tuple[PlannerState, EventLog]:
    """Interleave robot plan steps with a timed human driver on one clock.

    The driver is polled whenever the human is free; returning None parks
    the human until the next state change. Human actions commit at their
    finish time; robot actions commit at their start and occupy the robot
    for their duration, during which their spot is withheld from the
    human. With ``lock_shared_area`` a human placement whose finish lands
    inside a robot placement interval slides to its end (the
    warning-light rule). Ends when the pattern is complete, the horizon is
    exceeded (partial log), or no agent can ever act again (fault).
    """
    if log is None:
        log = EventLog()
    if len(log) == 0:
        log.append(
            EventKind.RUN_META,
            {
                "event": "run_start",
                "scenario": state.graph.config.to_dict(),
                "planner_params": params.to_dict(),
            },
            state.clock,
        )
    t = state.clock
    human_inflight: tuple[float, AgentAction] | None = None
    robot_busy_until = t
    robot_phys_until = t
    burst_t = t
    burst_n = 0
    last_completed = _completed_count(state.graph)
    commits_since_progress = 0
    timed_out = False

    def note_commit() -> None:
        nonlocal last_completed, commits_since_progress
        done = _completed_count(state.graph)
        if done > last_completed:
            last_completed = done
            commits_since_progress = 0
        else:
            commits_since_progress += 1
            if commits_since_progress > params.stall_guard:
                raise PlannerFault(
                    f"no subtask completed in {commits_since_progress} "
                    f"actions (t={t:.1f})")

    while not state.graph.all_complete():
        if robot_busy_until <= t:
            if state.robot_underway is not None:
                state = replace(state, robot_underway=None)
            exclude = (frozenset({human_inflight[1].subtask_id})
                       if human_inflight is not None else frozenset())
            state, action = plan_step(state, params, log=log, at_time=t,
                                      exclude=exclude)
            if action is not None:
                duration = robot_action_duration(state.graph, action)
                if duration == 0.0:
                    if t != burst_t:
                        burst_t, burst_n = t, 0
                    burst_n += 1
                    if burst_n > params.burst_cap:
                        raise PlannerFault(
                            f"{burst_n} zero-duration robot actions at "
                            f"t={t:.1f}; planner is spinning")
                else:
                    robot_busy_until = t + duration
                    robot_phys_until = t + duration
                    state = replace(state, robot_underway=action.subtask_id)
                note_commit()
                continue

        if human_inflight is None:
            move = driver(state, t)
            if move is not None:
                finish = t + max(move.duration, 0.0)
                human_inflight = (finish, move.action)

        next_times = []
        if human_inflight is not None:
            next_times.append(human_inflight[0])
        if robot_busy_until > t:
            next_times.append(robot_busy_until)
        if not next_times:
            raise PlannerFault(
                f"deadlock at t={t:.1f}: robot idle and human driver waits")
        t = min(next_times)
        if horizon is not None and t > horizon:
            t = horizon
            timed_out = True
            break

        if human_inflight is not None and human_inflight[0] <= t:
            finish, action = human_inflight
            if (lock_shared_area and action.kind in PHYSICAL_KINDS
                    and finish < robot_phys_until):
                # red light: the table is occupied, hold the block
                human_inflight = (robot_phys_until, action)
            else:
                state, _, _ = observe_human_action(state, action, params,
                                                   log=log, at_time=t)
                human_inflight = None
                note_commit()

    state = replace(state, clock=t)
    log.append(
        EventKind.RUN_META,
        {
            "event": "run_complete",
            "final_graph": state.graph.to_dict(),
            "belief_f": state.estimator.belief_f.to_list(),
            "belief_e": state.estimator.belief_e.to_list(),
            "clock": t,
            "timed_out": timed_out,
        },
        t,
    )
    return state, log
