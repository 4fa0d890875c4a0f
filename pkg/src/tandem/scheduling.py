"""Makespan-optimal scheduling of the allocated tasks on two agents.

The allocation decides who does what; this module decides when. Base
subtasks are augmented with two kinds of synthetic robot work:

- an "allocate" message (zero duration) that must precede any
  human-assigned subtask the human has not been told about yet, and
- an "errorfix" return trip that must precede the re-placement of a
  misplaced block.

The solver is a native depth-first branch-and-bound over semi-active
schedules: tasks are appended in precedence order, each starting at the
larger of its agent's availability and its predecessors' finishes. One
robot task from the time-zero candidate set is pinned to start at 0 so
the robot never opens the run idle.
"""
from __future__ import annotations

import time
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence

from .allocation import HUMAN, Allocation
from .model import Agent, AgentAction, ActionKind, Distance, SubtaskState, TaskGraph


class SchedulingError(Exception):
    """Base class for scheduling failures."""


class CyclicPrecedenceError(SchedulingError):
    """The extended task set contains a precedence cycle."""


class NoRobotStartAvailable(SchedulingError):
    """Robot tasks exist but none may start immediately; re-allocate."""


class TaskKind(str, Enum):
    BASE = "base"
    ALLOCATE = "allocate"
    ERRORFIX = "errorfix"


# execution order within one subtask's chain: fix, then message, then place
_KIND_RANK = {TaskKind.ERRORFIX: 0, TaskKind.ALLOCATE: 1, TaskKind.BASE: 2}
_KIND_SUFFIX = {TaskKind.ERRORFIX: "e", TaskKind.ALLOCATE: "a", TaskKind.BASE: ""}


def make_uid(base: int, kind: TaskKind) -> str:
    return f"{base}{_KIND_SUFFIX[kind]}"


def uid_sort_key(uid: str) -> tuple[int, int]:
    if uid.endswith("e"):
        return (int(uid[:-1]), 0)
    if uid.endswith("a"):
        return (int(uid[:-1]), 1)
    return (int(uid), 2)


@dataclass(frozen=True)
class ExtendedTask:
    """One schedulable unit: a base subtask or a synthetic robot step."""

    base: int
    kind: TaskKind
    agent: Agent
    duration: float
    predecessors: frozenset[str]

    def __post_init__(self) -> None:
        if self.duration < 0:
            raise ValueError("duration must be >= 0")
        if self.kind != TaskKind.BASE and self.agent != Agent.ROBOT:
            raise ValueError("synthetic tasks are robot-executed")
        if self.kind == TaskKind.ALLOCATE and self.duration != 0.0:
            raise ValueError("allocate messages take zero time")

    @property
    def uid(self) -> str:
        return make_uid(self.base, self.kind)

    def to_dict(self) -> dict:
        return {
            "id": self.uid,
            "base": self.base,
            "kind": self.kind.value,
            "agent": self.agent.value,
            "duration": self.duration,
            "predecessors": sorted(self.predecessors, key=uid_sort_key),
        }


@dataclass(frozen=True)
class ScheduleEntry:
    uid: str
    agent: Agent
    start: float
    finish: float

    def to_dict(self) -> dict:
        return {"id": self.uid, "agent": self.agent.value,
                "start": self.start, "finish": self.finish}


@dataclass(frozen=True)
class Schedule:
    entries: tuple[ScheduleEntry, ...]
    makespan: float
    incumbent_optimal: bool = True
    nodes: int = 0

    def entry(self, uid: str) -> ScheduleEntry:
        for e in self.entries:
            if e.uid == uid:
                return e
        raise KeyError(uid)

    def task_order(self) -> list[str]:
        """Uids by start time; feeds the next solve's warm start."""
        return [e.uid for e in self.entries]

    def agent_entries(self, agent: Agent) -> list[ScheduleEntry]:
        return [e for e in self.entries if e.agent == agent]

    def to_dict(self) -> dict:
        return {
            "entries": [e.to_dict() for e in self.entries],
            "makespan": self.makespan,
            "incumbent_optimal": self.incumbent_optimal,
            "nodes": self.nodes,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Schedule":
        return cls(
            entries=tuple(
                ScheduleEntry(uid=e["id"], agent=Agent(e["agent"]),
                              start=float(e["start"]), finish=float(e["finish"]))
                for e in data["entries"]
            ),
            makespan=float(data["makespan"]),
            incumbent_optimal=bool(data["incumbent_optimal"]),
            nodes=int(data.get("nodes", 0)),
        )


def gantt_rows(schedule: Schedule) -> dict[str, list[tuple[str, float, float]]]:
    """One row per agent, entries as (id, start, finish) by start time."""
    rows: dict[str, list[tuple[str, float, float]]] = {"human": [], "robot": []}
    for e in schedule.entries:
        rows[e.agent.value].append((e.uid, e.start, e.finish))
    for row in rows.values():
        row.sort(key=lambda item: (item[1], uid_sort_key(item[0])))
    return rows


def build_tau_new(graph: TaskGraph, allocation: Allocation) -> set[ExtendedTask]:
    """Extend the open subtasks with message and fix steps.

    Durations follow the assignment (t_h or t_r). A human-assigned task
    the human has not been told about yet gains a zero-duration robot
    message step; a misplaced block gains a robot return step that must
    come before anything else on that spot.
    """
    open_ids = set(allocation.q)
    fix_duration = graph.config.nominal_times[(Agent.ROBOT, Distance.NEAR)]
    tasks: set[ExtendedTask] = set()
    for i in sorted(open_ids):
        sub = graph.subtask(i)
        side = allocation.q[i]
        agent = Agent.HUMAN if side == HUMAN else Agent.ROBOT
        duration = sub.t_h if agent == Agent.HUMAN else sub.t_r
        base_preds = {make_uid(p, TaskKind.BASE)
                      for p in graph.preds_of(i) if p in open_ids}

        needs_fix = sub.state == SubtaskState.MISPLACED
        needs_message = (agent == Agent.HUMAN
                         and sub.state != SubtaskState.ASSIGNED_HUMAN)
        if needs_fix:
            tasks.add(ExtendedTask(
                base=i, kind=TaskKind.ERRORFIX, agent=Agent.ROBOT,
                duration=fix_duration, predecessors=frozenset()))
        if needs_message:
            # the message waits on the same precedence as the spot itself:
            # an assignment can only be made once the spot is actionable
            message_preds = set(base_preds)
            if needs_fix:
                message_preds.add(make_uid(i, TaskKind.ERRORFIX))
            tasks.add(ExtendedTask(
                base=i, kind=TaskKind.ALLOCATE, agent=Agent.ROBOT,
                duration=0.0, predecessors=frozenset(message_preds)))
            base_preds.add(make_uid(i, TaskKind.ALLOCATE))
        elif needs_fix:
            base_preds.add(make_uid(i, TaskKind.ERRORFIX))
        tasks.add(ExtendedTask(
            base=i, kind=TaskKind.BASE, agent=agent,
            duration=duration, predecessors=frozenset(base_preds)))
    return tasks


def time_zero_candidates(tasks: Iterable[ExtendedTask]) -> frozenset[str]:
    """Robot tasks with no predecessor: each could start the run."""
    return frozenset(t.uid for t in tasks
                     if t.agent == Agent.ROBOT and not t.predecessors)


def validate_schedule(schedule: Schedule, tasks: Iterable[ExtendedTask],
                      must_start: frozenset[str] | None = None) -> list[str]:
    """Independent constraint check; returns human-readable violations."""
    task_map = {t.uid: t for t in tasks}
    problems: list[str] = []
    seen = {e.uid for e in schedule.entries}
    if seen != set(task_map):
        problems.append(f"task set mismatch: {sorted(seen ^ set(task_map))}")
        return problems
    by_uid = {e.uid: e for e in schedule.entries}
    for e in schedule.entries:
        t = task_map[e.uid]
        if e.agent != t.agent:
            problems.append(f"{e.uid}: wrong agent")
        if abs(e.finish - (e.start + t.duration)) > 1e-9:
            problems.append(f"{e.uid}: finish != start + duration")
        if e.start < -1e-9:
            problems.append(f"{e.uid}: negative start")
        for p in t.predecessors:
            if by_uid[p].finish - e.start > 1e-9:
                problems.append(f"{e.uid}: starts before predecessor {p} finishes")
    for agent in (Agent.HUMAN, Agent.ROBOT):
        own = sorted(schedule.agent_entries(agent), key=lambda e: e.start)
        # open-interval test: zero-duration entries may share an instant
        # with a neighbor but nothing may run strictly inside another task
        for i, a in enumerate(own):
            for b in own[i + 1:]:
                if a.start < b.finish - 1e-9 and b.start < a.finish - 1e-9:
                    problems.append(f"{agent.value}: {a.uid} overlaps {b.uid}")
    peak = max((e.finish for e in schedule.entries), default=0.0)
    if abs(schedule.makespan - peak) > 1e-9:
        problems.append("makespan is not the latest finish")
    if must_start is None:
        must_start = time_zero_candidates(task_map.values())
    if must_start and not any(
            by_uid[uid].start == 0.0 for uid in must_start if uid in by_uid):
        problems.append("no immediate robot task starts at time zero")
    return problems


class _ScheduleSearch:
    """Branch-and-bound over precedence-consistent append orders."""

    def __init__(self, tasks: Sequence[ExtendedTask], must_start: frozenset[str],
                 deadline: float):
        self.tasks = tasks
        self.n = len(tasks)
        self.index = {t.uid: k for k, t in enumerate(tasks)}
        self.deadline = deadline
        self.durations = [t.duration for t in tasks]
        self.is_robot = [t.agent == Agent.ROBOT for t in tasks]
        # zero-cost robot steps are appended the moment they are free:
        # they never delay anything and only unlock successors
        self.is_free_step = [t.duration == 0.0 and t.agent == Agent.ROBOT
                             for t in tasks]
        self.pred_mask = [0] * self.n
        self.succ_lists: list[list[int]] = [[] for _ in range(self.n)]
        for k, t in enumerate(tasks):
            for p in t.predecessors:
                if p not in self.index:
                    raise SchedulingError(f"unknown predecessor {p} of {t.uid}")
                pk = self.index[p]
                self.pred_mask[k] |= 1 << pk
                self.succ_lists[pk].append(k)
        self.start_mask = 0
        for uid in must_start:
            self.start_mask |= 1 << self.index[uid]
        self.rem_by_agent = {
            True: sum(d for d, r in zip(self.durations, self.is_robot) if r),
            False: sum(d for d, r in zip(self.durations, self.is_robot) if not r),
        }
        self.tail = self._tails()
        self.order_key = [(-(self.durations[k] + self.tail[k]),
                           uid_sort_key(tasks[k].uid)) for k in range(self.n)]
        self.nodes = 0
        self.out_of_time = False
        self.best_makespan = float("inf")
        self.best_starts: list[float] | None = None
        self.starts = [0.0] * self.n
        self.finishes = [0.0] * self.n
        self.memo: dict[int, list[tuple]] = {}

    def _tails(self) -> list[float]:
        # longest duration path strictly below each task; detects cycles
        order: list[int] = []
        indeg = [bin(m).count("1") for m in self.pred_mask]
        ready = [k for k in range(self.n) if indeg[k] == 0]
        while ready:
            k = ready.pop()
            order.append(k)
            for s in self.succ_lists[k]:
                indeg[s] -= 1
                if indeg[s] == 0:
                    ready.append(s)
        if len(order) != self.n:
            raise CyclicPrecedenceError("extended task set has a cycle")
        tail = [0.0] * self.n
        for k in reversed(order):
            for s in self.succ_lists[k]:
                tail[k] = max(tail[k], self.durations[s] + tail[s])
        return tail

    def _tick(self) -> bool:
        self.nodes += 1
        if self.nodes % 2048 == 0 and time.monotonic() > self.deadline:
            self.out_of_time = True
        return self.out_of_time

    def run(self) -> None:
        self._dfs(0, 0.0, 0.0, 0.0, sum(d for d, r in zip(self.durations, self.is_robot) if not r),
                  self.rem_by_agent[True], False)

    def _lower_bound(self, mask: int, cur_max: float, h_avail: float,
                     r_avail: float, rem_h: float, rem_r: float) -> float:
        bound = max(cur_max, h_avail + rem_h, r_avail + rem_r)
        for k in range(self.n):
            if mask & (1 << k):
                continue
            est = r_avail if self.is_robot[k] else h_avail
            pm = self.pred_mask[k] & mask
            while pm:
                low = pm & -pm
                pk = low.bit_length() - 1
                if self.finishes[pk] > est:
                    est = self.finishes[pk]
                pm ^= low
            candidate = est + self.durations[k] + self.tail[k]
            if candidate > bound:
                bound = candidate
        return bound

    def _dominated(self, mask: int, cur_max: float, h_avail: float,
                   r_avail: float) -> bool:
        frontier = tuple(
            self.finishes[k]
            for k in range(self.n)
            if mask & (1 << k) and any(
                not mask & (1 << s) for s in self.succ_lists[k])
        )
        record = (h_avail, r_avail, cur_max, frontier)
        bucket = self.memo.get(mask)
        if bucket is None:
            self.memo[mask] = [record]
            return False
        for other in bucket:
            if (other[0] <= h_avail and other[1] <= r_avail
                    and other[2] <= cur_max
                    and all(a <= b for a, b in zip(other[3], frontier))):
                return True
        if len(bucket) < 64:
            bucket.append(record)
        return False

    def _dfs(self, mask: int, cur_max: float, h_avail: float, r_avail: float,
             rem_h: float, rem_r: float, robot_started: bool) -> None:
        if self._tick():
            return
        full = (1 << self.n) - 1
        if mask == full:
            if cur_max < self.best_makespan:
                self.best_makespan = cur_max
                self.best_starts = self.starts.copy()
            return
        if self._lower_bound(mask, cur_max, h_avail, r_avail, rem_h, rem_r) \
                >= self.best_makespan:
            return
        if self._dominated(mask, cur_max, h_avail, r_avail):
            return
        eligible = [k for k in range(self.n)
                    if not mask & (1 << k)
                    and (self.pred_mask[k] & mask) == self.pred_mask[k]]
        eligible.sort(key=lambda k: self.order_key[k])
        # a free step that is already ready dominates every other move:
        # appending it changes no availability and can only unlock successors
        for k in eligible:
            if not self.is_free_step[k]:
                continue
            if not robot_started and self.start_mask \
                    and not self.start_mask & (1 << k):
                continue
            ready = 0.0
            pm = self.pred_mask[k]
            while pm:
                low = pm & -pm
                pk = low.bit_length() - 1
                if self.finishes[pk] > ready:
                    ready = self.finishes[pk]
                pm ^= low
            if ready <= r_avail:
                eligible = [k]
                break
        for k in eligible:
            robot = self.is_robot[k]
            # the robot's opening task must come from the time-zero set
            if robot and not robot_started and self.start_mask \
                    and not self.start_mask & (1 << k):
                continue
            avail = r_avail if robot else h_avail
            start = avail
            pm = self.pred_mask[k]
            while pm:
                low = pm & -pm
                pk = low.bit_length() - 1
                if self.finishes[pk] > start:
                    start = self.finishes[pk]
                pm ^= low
            finish = start + self.durations[k]
            self.starts[k] = start
            self.finishes[k] = finish
            self._dfs(
                mask | (1 << k),
                max(cur_max, finish),
                h_avail if robot else finish,
                finish if robot else r_avail,
                rem_h if robot else rem_h - self.durations[k],
                rem_r - self.durations[k] if robot else rem_r,
                robot_started or robot,
            )
            if self.out_of_time:
                return


def solve_schedule(tau_new: Iterable[ExtendedTask],
                   must_start: frozenset[str] | None = None,
                   time_limit: float = 2.0,
                   seed_order: Sequence[str] | None = None) -> Schedule:
    """Find a minimum-makespan schedule for the extended task set.

    `must_start` defaults to the computed time-zero candidates. A prior
    schedule's task_order() can seed the incumbent for warm re-solves.
    """
    tasks = sorted(set(tau_new), key=lambda t: uid_sort_key(t.uid))
    if not tasks:
        return Schedule(entries=(), makespan=0.0, incumbent_optimal=True)
    if must_start is None:
        must_start = time_zero_candidates(tasks)
    else:
        must_start = frozenset(must_start) & {t.uid for t in tasks}

    # Zero-duration messages never move the robot's availability, so the
    # left-shifted optimum puts each one at its predecessors' finish (a
    # robot-sequence boundary). Contract them out of the search and splice
    # them back afterwards; this collapses an exponential family of
    # equivalent interleavings.
    task_map = {t.uid: t for t in tasks}
    contracted: dict[str, ExtendedTask] = {}
    changed = True
    while changed:
        changed = False
        for t in tasks:
            if (t.uid not in contracted and t.kind == TaskKind.ALLOCATE
                    and all(task_map[p].agent == Agent.ROBOT
                            and p not in contracted for p in t.predecessors)):
                contracted[t.uid] = t
                changed = True
    searched = []
    for t in tasks:
        if t.uid in contracted:
            continue
        preds = set(t.predecessors)
        expanded: set[str] = set()
        while preds & contracted.keys():
            for uid in sorted(preds & contracted.keys(), key=uid_sort_key):
                preds.discard(uid)
                if uid in expanded:
                    raise CyclicPrecedenceError("extended task set has a cycle")
                expanded.add(uid)
                preds |= contracted[uid].predecessors
        searched.append(ExtendedTask(t.base, t.kind, t.agent, t.duration,
                                     frozenset(preds)))

    # a contracted message in the candidate set starts at 0 by construction,
    # which already satisfies the immediate-start requirement
    if any(uid in contracted and not contracted[uid].predecessors
           for uid in must_start):
        effective_start: frozenset[str] = frozenset()
    else:
        effective_start = must_start & {t.uid for t in searched}

    # cycle detection happens in the search constructor; run it before the
    # robot-start check so a cyclic input reports its real problem
    search = _ScheduleSearch(searched, effective_start,
                             time.monotonic() + time_limit)
    if any(t.agent == Agent.ROBOT for t in tasks) and not must_start:
        raise NoRobotStartAvailable(
            "robot tasks exist but none can start immediately")

    # seed the incumbent: dispatch by longest tail, optionally nudged by a
    # previous task order
    rank = {uid: pos for pos, uid in enumerate(seed_order or [])}
    incumbent = _dispatch(search, rank)
    if incumbent is not None:
        search.best_makespan, search.best_starts = incumbent

    if searched:
        search.run()
    else:
        search.best_starts = []
    if search.best_starts is None:
        raise SchedulingError("no feasible schedule found")
    starts = {t.uid: search.best_starts[k] for k, t in enumerate(searched)}
    finishes = {uid: starts[uid] + task_map[uid].duration for uid in starts}
    pending = set(contracted)
    while pending:
        ready = [uid for uid in pending
                 if all(p in finishes for p in contracted[uid].predecessors)]
        if not ready:
            raise CyclicPrecedenceError("extended task set has a cycle")
        for uid in sorted(ready, key=uid_sort_key):
            starts[uid] = max((finishes[p]
                               for p in contracted[uid].predecessors), default=0.0)
            finishes[uid] = starts[uid]
            pending.discard(uid)
    entries = tuple(sorted(
        (ScheduleEntry(uid=t.uid, agent=t.agent, start=starts[t.uid],
                       finish=starts[t.uid] + t.duration)
         for t in tasks),
        key=lambda e: (e.start, e.agent.value, uid_sort_key(e.uid)),
    ))
    makespan = max(e.finish for e in entries)
    return Schedule(entries=entries, makespan=makespan,
                    incumbent_optimal=not search.out_of_time,
                    nodes=search.nodes)


def _dispatch(search: _ScheduleSearch, rank: dict[str, int]
              ) -> tuple[float, list[float]] | None:
    """Greedy semi-active construction used as the initial incumbent."""
    n = search.n
    mask = 0
    h_avail = r_avail = 0.0
    finishes = [0.0] * n
    starts = [0.0] * n
    robot_started = False
    for _ in range(n):
        eligible = [k for k in range(n)
                    if not mask & (1 << k)
                    and (search.pred_mask[k] & mask) == search.pred_mask[k]]
        usable = []
        for k in eligible:
            if search.is_robot[k] and not robot_started and search.start_mask \
                    and not search.start_mask & (1 << k):
                continue
            usable.append(k)
        if not usable:
            return None
        usable.sort(key=lambda k: (rank.get(search.tasks[k].uid, 1 << 30),
                                   search.order_key[k]))
        k = usable[0]
        avail = r_avail if search.is_robot[k] else h_avail
        start = avail
        pm = search.pred_mask[k]
        while pm:
            low = pm & -pm
            pk = low.bit_length() - 1
            if finishes[pk] > start:
                start = finishes[pk]
            pm ^= low
        finish = start + search.durations[k]
        starts[k] = start
        finishes[k] = finish
        if search.is_robot[k]:
            r_avail = finish
            robot_started = True
        else:
            h_avail = finish
        mask |= 1 << k
    makespan = max(finishes) if finishes else 0.0
    return makespan, starts


def next_robot_action(schedule: Schedule, graph: TaskGraph) -> AgentAction | None:
    """Translate the robot's earliest scheduled entry into an action.

    Returns None when the schedule holds no robot work (idle).
    """
    robot_entries = schedule.agent_entries(Agent.ROBOT)
    if not robot_entries:
        return None
    # finish breaks start ties so a zero-duration message precedes a
    # physical task beginning at the same instant
    first = min(robot_entries,
                key=lambda e: (e.start, e.finish, uid_sort_key(e.uid)))
    base, rank = uid_sort_key(first.uid)
    if rank == 0:
        return AgentAction(ActionKind.R3, base)
    if rank == 1:
        return AgentAction(ActionKind.R2, base)
    state = graph.subtask(base).state
    if state == SubtaskState.ASSIGNED_ROBOT_OK:
        return AgentAction(ActionKind.R4, base)
    if state == SubtaskState.ASSIGNED_HUMAN:
        # a pending delegation the human never acted on must be withdrawn
        # before the robot can place the part itself
        return AgentAction(ActionKind.R5, base)
    return AgentAction(ActionKind.R1, base)
