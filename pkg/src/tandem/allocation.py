"""Min-max assignment of open subtasks between the human and the robot.

The solver minimizes the larger of the two agents' total expected cost,
subject to: every open subtask gets exactly one agent, and at least one
subtask the robot could physically start right now stays on the robot's
side (so the robot is never idle while work remains).

Assignment variables follow the convention q_i = 1 for human, 0 for robot.
The search is a native depth-first branch-and-bound; no external solver.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

from .model import Agent, Subtask, SubtaskState, TaskGraph, immediately_feasible_robot_set

HUMAN = 1
ROBOT = 0


class AllocationError(Exception):
    """Base class for allocation failures."""


class EmptyTaskError(AllocationError):
    """Raised when there is nothing left to allocate."""


class InfeasibleAllocationError(AllocationError):
    """Raised when no assignment can satisfy the constraints."""


@dataclass(frozen=True)
class CostParams:
    """Penalty weights, in seconds, plus the anytime search budget."""

    c_f: float = 25.0  # assigning a task to a human who prefers to lead
    c_e: float = 30.0  # expected cleanup after a human error
    c_v: float = 5.0   # churn: flipping a task away from its previous agent
    time_limit: float = 2.0

    def __post_init__(self) -> None:
        for name in ("c_f", "c_e", "c_v", "time_limit"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")

    def to_dict(self) -> dict:
        return {"c_f": self.c_f, "c_e": self.c_e, "c_v": self.c_v,
                "time_limit": self.time_limit}

    @classmethod
    def from_dict(cls, data: dict) -> "CostParams":
        return cls(**data)


@dataclass(frozen=True)
class PointEstimates:
    """Belief means plugged into the linear cost terms."""

    p_f: float  # expected following preference
    p_e: float  # expected error proneness

    def __post_init__(self) -> None:
        for name in ("p_f", "p_e"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {value}")

    def to_dict(self) -> dict:
        return {"p_f": self.p_f, "p_e": self.p_e}

    @classmethod
    def from_dict(cls, data: dict) -> "PointEstimates":
        return cls(**data)


@dataclass(frozen=True)
class Allocation:
    """A complete assignment with its min-max objective value."""

    q: dict[int, int]
    objective: float
    incumbent_optimal: bool = True
    nodes: int = 0  # search nodes visited; warm starts should shrink this

    @property
    def human_ids(self) -> list[int]:
        return sorted(i for i, side in self.q.items() if side == HUMAN)

    @property
    def robot_ids(self) -> list[int]:
        return sorted(i for i, side in self.q.items() if side == ROBOT)

    def key(self) -> tuple[tuple[int, int], ...]:
        """Canonical hashable form, used for no-good cuts."""
        return tuple(sorted(self.q.items()))

    def to_dict(self) -> dict:
        return {
            "q": {str(i): side for i, side in sorted(self.q.items())},
            "objective": self.objective,
            "incumbent_optimal": self.incumbent_optimal,
            "nodes": self.nodes,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Allocation":
        return cls(
            q={int(i): int(side) for i, side in data["q"].items()},
            objective=float(data["objective"]),
            incumbent_optimal=bool(data["incumbent_optimal"]),
            nodes=int(data.get("nodes", 0)),
        )


@dataclass(frozen=True)
class AllocationProblem:
    """A solver-ready instance: per-task costs, the robot-start set, pins."""

    ids: tuple[int, ...]
    human_cost: dict[int, float]
    robot_cost: dict[int, float]
    u_set: frozenset[int]
    forced: dict[int, int] = field(default_factory=dict)


def _cost(subtask: Subtask, side: int, estimates: PointEstimates,
          params: CostParams, prev_side: int | None) -> float:
    if side == HUMAN:
        base = subtask.t_h * estimates.p_f + params.c_f * (1.0 - estimates.p_f)
        churn = params.c_v if prev_side == ROBOT else 0.0
    else:
        base = subtask.t_r + estimates.p_e * params.c_e
        churn = params.c_v if prev_side == HUMAN else 0.0
    return base + churn


def assignment_cost(subtask: Subtask, agent: Agent, estimates: PointEstimates,
                    params: CostParams, prev: Allocation | None = None) -> float:
    """Expected cost of giving one subtask to one agent."""
    prev_side = prev.q.get(subtask.id) if prev is not None else None
    side = HUMAN if agent == Agent.HUMAN else ROBOT
    return _cost(subtask, side, estimates, params, prev_side)


def warm_start_from(prev: Allocation, graph: TaskGraph) -> dict[int, int]:
    """Project a previous assignment onto the still-open subtasks."""
    open_ids = set(graph.open_ids())
    return {i: side for i, side in prev.q.items() if i in open_ids}


def allocation_problem(graph: TaskGraph, estimates: PointEstimates,
                       params: CostParams, prev: Allocation | None = None,
                       exclude: tuple[int, ...] = (),
                       require_u: bool = True) -> AllocationProblem:
    """Build a solver instance from the current task state.

    `exclude` pins subtasks to the human and drops them from the
    robot-start set (used for a task the human is physically mid-way
    through). Subtasks already delegated to the robot are pinned robot;
    subtasks already assigned to the human keep the human as their churn
    baseline but remain free to reassign.
    """
    open_ids = graph.open_ids()
    if not open_ids:
        raise EmptyTaskError("no open subtasks to allocate")
    excluded = set(exclude)
    u_set = frozenset(immediately_feasible_robot_set(graph) - excluded)
    if require_u and not u_set:
        raise InfeasibleAllocationError("no subtask is immediately robot-startable")

    forced: dict[int, int] = {}
    human_cost: dict[int, float] = {}
    robot_cost: dict[int, float] = {}
    for i in open_ids:
        sub = graph.subtask(i)
        if sub.state == SubtaskState.ASSIGNED_ROBOT_OK:
            prev_side: int | None = ROBOT
            forced[i] = ROBOT
        elif sub.state == SubtaskState.ASSIGNED_HUMAN:
            prev_side = HUMAN
        else:
            prev_side = prev.q.get(i) if prev is not None else None
        if i in excluded:
            forced[i] = HUMAN
        human_cost[i] = _cost(sub, HUMAN, estimates, params, prev_side)
        robot_cost[i] = _cost(sub, ROBOT, estimates, params, prev_side)
    return AllocationProblem(
        ids=tuple(open_ids),
        human_cost=human_cost,
        robot_cost=robot_cost,
        u_set=u_set,
        forced=forced,
    )


class _Search:
    """Depth-first branch-and-bound state over the free (unpinned) tasks."""

    def __init__(self, problem: AllocationProblem, deadline: float,
                 banned: frozenset[tuple[tuple[int, int], ...]]):
        self.problem = problem
        self.deadline = deadline
        self.banned = banned
        self.free = [i for i in problem.ids if i not in problem.forced]
        self.hc = [problem.human_cost[i] for i in self.free]
        self.rc = [problem.robot_cost[i] for i in self.free]
        self.u_flag = [i in problem.u_set for i in self.free]
        n = len(self.free)
        # suffix sums for the additive half-sum bound and the U lookahead
        self.min_suffix = [0.0] * (n + 1)
        self.u_suffix = [0] * (n + 1)
        for k in range(n - 1, -1, -1):
            self.min_suffix[k] = self.min_suffix[k + 1] + min(self.hc[k], self.rc[k])
            self.u_suffix[k] = self.u_suffix[k + 1] + (1 if self.u_flag[k] else 0)
        self.base_h = sum(problem.human_cost[i]
                          for i, s in problem.forced.items() if s == HUMAN)
        self.base_r = sum(problem.robot_cost[i]
                          for i, s in problem.forced.items() if s == ROBOT)
        # the robot-start constraint is void when U is empty, and already
        # met when a pinned robot task sits in U
        self.u_init_ok = not problem.u_set or any(
            s == ROBOT and i in problem.u_set for i, s in problem.forced.items()
        )
        self.nodes = 0
        self.out_of_time = False
        self.best_obj = float("inf")
        self.best_q: list[int] | None = None
        self.partial = [ROBOT] * n

    def _tick(self) -> bool:
        self.nodes += 1
        if self.nodes % 1024 == 0 and time.monotonic() > self.deadline:
            self.out_of_time = True
        return self.out_of_time

    def _leaf_key(self, assignment: list[int]) -> tuple[tuple[int, int], ...]:
        q = dict(self.problem.forced)
        q.update(zip(self.free, assignment))
        return tuple(sorted(q.items()))

    def run(self, seed_obj: float, seed_q: list[int] | None) -> None:
        """Minimize; a leaf is accepted only if it strictly beats the bound."""
        self.best_obj = seed_obj
        self.best_q = list(seed_q) if seed_q is not None else None
        self._dfs(0, self.base_h, self.base_r, self.u_init_ok)

    def _dfs(self, k: int, hsum: float, rsum: float, u_ok: bool) -> None:
        if self._tick():
            return
        bound = max(hsum, rsum, (hsum + rsum + self.min_suffix[k]) / 2.0)
        if bound >= self.best_obj:
            return
        if not u_ok and self.u_suffix[k] == 0:
            return  # every remaining completion leaves the robot idle
        if k == len(self.free):
            obj = max(hsum, rsum)
            if self.banned and self._leaf_key(self.partial) in self.banned:
                return
            if obj < self.best_obj:
                self.best_obj = obj
                self.best_q = self.partial.copy()
            return
        self.partial[k] = ROBOT
        self._dfs(k + 1, hsum, rsum + self.rc[k], u_ok or self.u_flag[k])
        self.partial[k] = HUMAN
        self._dfs(k + 1, hsum + self.hc[k], rsum, u_ok)

    def exists_completion(self, prefix_len: int, budget: float) -> bool:
        """True if some completion of partial[:prefix_len] costs <= budget."""
        hsum = self.base_h + sum(self.hc[j] for j in range(prefix_len)
                                 if self.partial[j] == HUMAN)
        rsum = self.base_r + sum(self.rc[j] for j in range(prefix_len)
                                 if self.partial[j] == ROBOT)
        u_ok = self.u_init_ok or any(
            self.u_flag[j] and self.partial[j] == ROBOT for j in range(prefix_len)
        )
        return self._feasible(prefix_len, hsum, rsum, u_ok, budget)

    def _feasible(self, k: int, hsum: float, rsum: float, u_ok: bool,
                  budget: float) -> bool:
        if self._tick():
            return False
        eps = 1e-9
        if max(hsum, rsum, (hsum + rsum + self.min_suffix[k]) / 2.0) > budget + eps:
            return False
        if not u_ok and self.u_suffix[k] == 0:
            return False
        if k == len(self.free):
            if self.banned and self._leaf_key(self.partial) in self.banned:
                return False
            return max(hsum, rsum) <= budget + eps
        saved = self.partial[k]
        self.partial[k] = ROBOT
        if self._feasible(k + 1, hsum, rsum + self.rc[k], u_ok or self.u_flag[k],
                          budget):
            self.partial[k] = saved
            return True
        self.partial[k] = HUMAN
        ok = self._feasible(k + 1, hsum + self.hc[k], rsum, u_ok, budget)
        self.partial[k] = saved
        return ok


def _seed_candidates(search: _Search, warm: dict[int, int] | None
                     ) -> tuple[float, list[int] | None]:
    """Best of the greedy-balance heuristic and the projected warm start."""
    problem, free = search.problem, search.free

    def evaluate(assignment: list[int]) -> float | None:
        if problem.u_set and not search.u_init_ok:
            if not any(search.u_flag[k] and assignment[k] == ROBOT
                       for k in range(len(free))):
                return None
        if search.banned and search._leaf_key(assignment) in search.banned:
            return None
        h = search.base_h + sum(search.hc[k] for k, s in enumerate(assignment)
                                if s == HUMAN)
        r = search.base_r + sum(search.rc[k] for k, s in enumerate(assignment)
                                if s == ROBOT)
        return max(h, r)

    candidates: list[tuple[float, list[int]]] = []

    greedy: list[int] = []
    h, r = search.base_h, search.base_r
    for k in range(len(free)):
        if h + search.hc[k] <= r + search.rc[k]:
            greedy.append(HUMAN)
            h += search.hc[k]
        else:
            greedy.append(ROBOT)
            r += search.rc[k]
    if problem.u_set and not search.u_init_ok and greedy and not any(
            search.u_flag[k] and greedy[k] == ROBOT for k in range(len(free))):
        # flip the cheapest U task to the robot to restore feasibility
        u_ks = [k for k in range(len(free)) if search.u_flag[k]]
        if u_ks:
            flip = min(u_ks, key=lambda k: search.rc[k] - search.hc[k])
            greedy[flip] = ROBOT
    obj = evaluate(greedy) if greedy or not free else evaluate([])
    if free and obj is not None:
        candidates.append((obj, greedy))

    if warm is not None and free:
        projected = [warm.get(i, HUMAN if search.hc[k] <= search.rc[k] else ROBOT)
                     for k, i in enumerate(free)]
        obj = evaluate(projected)
        if obj is not None:
            candidates.append((obj, projected))

    if not candidates:
        return float("inf"), None
    return min(candidates, key=lambda c: c[0])


def solve_problem(problem: AllocationProblem, time_limit: float = 2.0,
                  warm: dict[int, int] | None = None,
                  banned: frozenset[tuple[tuple[int, int], ...]] = frozenset()
                  ) -> Allocation:
    """Exact min-max solve; returns the best incumbent if time runs out.

    Ties on the objective resolve to the lexicographically smallest q
    vector (lowest ids to the robot first), established by a second
    fixing pass once the optimal value is known.
    """
    if not problem.ids:
        raise EmptyTaskError("no open subtasks to allocate")
    search = _Search(problem, time.monotonic() + time_limit, frozenset(banned))

    if not search.free:
        q = dict(problem.forced)
        h = search.base_h
        r = search.base_r
        key = tuple(sorted(q.items()))
        if (problem.u_set and not search.u_init_ok) or key in search.banned:
            raise InfeasibleAllocationError("pinned assignment violates constraints")
        return Allocation(q=q, objective=max(h, r), incumbent_optimal=True, nodes=0)

    seed_obj, seed_q = _seed_candidates(search, warm)
    search.run(seed_obj, seed_q)
    if search.best_q is None:
        raise InfeasibleAllocationError("every assignment is excluded or infeasible")

    if search.out_of_time:
        q = dict(problem.forced)
        q.update(zip(search.free, search.best_q))
        return Allocation(q=q, objective=search.best_obj,
                          incumbent_optimal=False, nodes=search.nodes)

    # lexicographic fixing pass: keep the proven optimum, prefer the robot
    # at each position in id order
    optimum = search.best_obj
    for k in range(len(search.free)):
        search.partial[k] = ROBOT
        if not search.exists_completion(k + 1, optimum):
            search.partial[k] = HUMAN
        if search.out_of_time:
            break
    q = dict(problem.forced)
    q.update(zip(search.free, search.partial))
    if search.out_of_time:
        # extremely tight budgets can interrupt the fixing pass; fall back
        # to the proven-optimal incumbent
        q = dict(problem.forced)
        q.update(zip(search.free, search.best_q))
        return Allocation(q=q, objective=optimum, incumbent_optimal=True,
                          nodes=search.nodes)
    h = search.base_h + sum(search.hc[k] for k, s in enumerate(search.partial)
                            if s == HUMAN)
    r = search.base_r + sum(search.rc[k] for k, s in enumerate(search.partial)
                            if s == ROBOT)
    return Allocation(q=q, objective=max(h, r), incumbent_optimal=True,
                      nodes=search.nodes)


def solve_allocation(graph: TaskGraph, estimates: PointEstimates,
                     params: CostParams, prev: Allocation | None = None, *,
                     exclude: tuple[int, ...] = (),
                     banned: frozenset[tuple[tuple[int, int], ...]] = frozenset(),
                     require_u: bool = True,
                     time_limit: float | None = None) -> Allocation:
    """Allocate all open subtasks of the graph between the two agents."""
    problem = allocation_problem(graph, estimates, params, prev,
                                 exclude=exclude, require_u=require_u)
    warm = warm_start_from(prev, graph) if prev is not None else None
    budget = params.time_limit if time_limit is None else time_limit
    return solve_problem(problem, time_limit=budget, warm=warm, banned=banned)
