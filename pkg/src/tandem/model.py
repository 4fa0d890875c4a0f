"""World model for the two-agent block assembly task.

A task is a precedence-constrained DAG of spot-filling subtasks arranged in
per-workspace chains. Each subtask carries a six-state lifecycle driven by
twelve agent actions (six human, six robot). All operations here are pure:
they map (graph, action) to a new graph or raise ``ActionError`` leaving the
input untouched.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterator

START_ID = 0


class Color(str, Enum):
    GREEN = "green"
    PINK = "pink"
    ORANGE = "orange"
    BLUE = "blue"


class Agent(str, Enum):
    HUMAN = "human"
    ROBOT = "robot"


class Distance(str, Enum):
    NEAR = "near"
    FAR = "far"


class SubtaskState(str, Enum):
    INITIAL = "initial"
    PLACED = "placed_correctly"
    MISPLACED = "misplaced"
    ASSIGNED_ROBOT_OK = "assigned_to_robot_correctly"
    ASSIGNED_ROBOT_BAD = "assigned_to_robot_incorrectly"
    ASSIGNED_HUMAN = "assigned_to_human"


class ActionKind(str, Enum):
    H1 = "H1"  # human places a block on a spot of their choice
    H2 = "H2"  # human delegates a spot to the robot, naming the color
    H3 = "H3"  # human returns their own misplaced block
    H4 = "H4"  # human performs a robot-assigned spot
    H5 = "H5"  # human withdraws a delegation made to the robot
    H6 = "H6"  # human rejects a robot assignment (GUI-only, zero duration)
    R1 = "R1"  # robot places a block on a spot of its own plan
    R2 = "R2"  # robot assigns a spot to the human, naming the color
    R3 = "R3"  # robot returns a misplaced human block
    R4 = "R4"  # robot performs a spot delegated to it
    R5 = "R5"  # robot withdraws an assignment made to the human
    R6 = "R6"  # robot rejects a wrong-color delegation

    @property
    def agent(self) -> Agent:
        return Agent.HUMAN if self.value.startswith("H") else Agent.ROBOT


# Kinds with a physical presence at the shared area; these are the ones a
# mutual-exclusion light can block.
PHYSICAL_KINDS = frozenset(
    {ActionKind.H1, ActionKind.H3, ActionKind.H4,
     ActionKind.R1, ActionKind.R3, ActionKind.R4}
)

# Kinds whose action must carry a block color chosen by the agent.
COLOR_KINDS = frozenset({ActionKind.H1, ActionKind.H2})

# Legal (state, kind) pairs. A tuple value means the outcome splits on
# whether the carried color matches the spot's required color.
TRANSITIONS: dict[
    tuple[SubtaskState, ActionKind],
    SubtaskState | tuple[SubtaskState, SubtaskState],
] = {
    (SubtaskState.INITIAL, ActionKind.H1): (SubtaskState.PLACED, SubtaskState.MISPLACED),
    (SubtaskState.INITIAL, ActionKind.H2): (
        SubtaskState.ASSIGNED_ROBOT_OK,
        SubtaskState.ASSIGNED_ROBOT_BAD,
    ),
    (SubtaskState.INITIAL, ActionKind.R1): SubtaskState.PLACED,
    (SubtaskState.INITIAL, ActionKind.R2): SubtaskState.ASSIGNED_HUMAN,
    (SubtaskState.MISPLACED, ActionKind.H3): SubtaskState.INITIAL,
    (SubtaskState.MISPLACED, ActionKind.R3): SubtaskState.INITIAL,
    (SubtaskState.ASSIGNED_ROBOT_OK, ActionKind.R4): SubtaskState.PLACED,
    (SubtaskState.ASSIGNED_ROBOT_OK, ActionKind.H5): SubtaskState.INITIAL,
    (SubtaskState.ASSIGNED_ROBOT_BAD, ActionKind.H5): SubtaskState.INITIAL,
    (SubtaskState.ASSIGNED_ROBOT_BAD, ActionKind.R6): SubtaskState.INITIAL,
    (SubtaskState.ASSIGNED_HUMAN, ActionKind.H4): SubtaskState.PLACED,
    (SubtaskState.ASSIGNED_HUMAN, ActionKind.H6): SubtaskState.INITIAL,
    (SubtaskState.ASSIGNED_HUMAN, ActionKind.R5): SubtaskState.INITIAL,
}

# Kinds that begin work on a fresh spot; only these demand completed
# predecessors (every other kind operates on a spot already entered legally).
_FRESH_SPOT_KINDS = frozenset(
    {ActionKind.H1, ActionKind.H2, ActionKind.R1, ActionKind.R2}
)


class ActionError(ValueError):
    """Rejected action. ``reason`` is a stable machine-readable code."""

    def __init__(self, reason: str, detail: str):
        super().__init__(detail)
        self.reason = reason
        self.detail = detail


@dataclass(frozen=True)
class AgentAction:
    kind: ActionKind
    subtask_id: int
    block_color: Color | None = None

    @property
    def agent(self) -> Agent:
        return self.kind.agent

    def to_dict(self) -> dict:
        return {
            "agent": self.agent.value,
            "kind": self.kind.value,
            "subtask_id": self.subtask_id,
            "block_color": self.block_color.value if self.block_color else None,
        }

    @staticmethod
    def from_dict(d: dict) -> "AgentAction":
        color = d.get("block_color")
        return AgentAction(
            kind=ActionKind(d["kind"]),
            subtask_id=int(d["subtask_id"]),
            block_color=Color(color) if color else None,
        )


@dataclass(frozen=True)
class Subtask:
    """One spot to fill: identity, requirement, timing, and live state."""

    id: int
    workspace: int
    spot: int
    required_color: Color
    t_h: float
    t_r: float
    state: SubtaskState = SubtaskState.INITIAL
    placed_color: Color | None = None  # block currently on the spot, if any
    assigned_color: Color | None = None  # color named in a pending assignment

    def __post_init__(self) -> None:
        if self.t_h <= 0 or self.t_r <= 0:
            raise ValueError(f"subtask {self.id}: durations must be positive")


@dataclass(frozen=True)
class ScenarioConfig:
    """Static description of one assembly scenario.

    ``pattern`` maps subtask id to its required color. ``partially_known``
    maps a subtask id to the decoy color shown next to the required one on
    the human's reference sheet; all other spots are fully known.
    """

    name: str
    workspaces: int
    spots_per_workspace: int
    pattern: dict[int, Color]
    block_inventory: dict[tuple[Agent, Color], int]
    color_distance: dict[tuple[Agent, Color], Distance]
    nominal_times: dict[tuple[Agent, Distance], float]
    partially_known: dict[int, Color] = field(default_factory=dict)

    def __post_init__(self) -> None:
        ids = set(self.subtask_ids())
        if set(self.pattern) != ids:
            raise ValueError("pattern must cover exactly the scenario's subtask ids")
        for agent in Agent:
            for color in Color:
                if (agent, color) not in self.color_distance:
                    raise ValueError(f"missing color_distance for {agent.value}/{color.value}")
                if self.block_inventory.get((agent, color), 0) < 0:
                    raise ValueError("inventory counts must be nonnegative")
            for dist in Distance:
                if self.nominal_times.get((agent, dist), 0) <= 0:
                    raise ValueError(f"missing nominal time for {agent.value}/{dist.value}")
        for spot, decoy in self.partially_known.items():
            if spot not in ids:
                raise ValueError(f"partially_known spot {spot} outside the pattern")
            if decoy == self.pattern[spot]:
                raise ValueError(f"decoy at spot {spot} equals the required color")

    def subtask_ids(self) -> range:
        return range(1, self.workspaces * self.spots_per_workspace + 1)

    @property
    def finish_id(self) -> int:
        return self.workspaces * self.spots_per_workspace + 1

    def nominal_time(self, agent: Agent, color: Color) -> float:
        return self.nominal_times[(agent, self.color_distance[(agent, color)])]

    def cue(self, subtask_id: int) -> tuple[Color, ...]:
        """Colors shown on the reference sheet for this spot (1 or 2)."""
        required = self.pattern[subtask_id]
        decoy = self.partially_known.get(subtask_id)
        if decoy is None:
            return (required,)
        return tuple(sorted((required, decoy), key=lambda c: c.value))

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "workspaces": self.workspaces,
            "spots_per_workspace": self.spots_per_workspace,
            "pattern": {str(i): c.value for i, c in sorted(self.pattern.items())},
            "partially_known": {
                str(i): c.value for i, c in sorted(self.partially_known.items())
            },
            "block_inventory": {
                f"{a.value}.{c.value}": n
                for (a, c), n in sorted(self.block_inventory.items())
            },
            "color_distance": {
                f"{a.value}.{c.value}": d.value
                for (a, c), d in sorted(self.color_distance.items())
            },
            "nominal_times": {
                f"{a.value}.{d.value}": t
                for (a, d), t in sorted(self.nominal_times.items())
            },
        }

    @staticmethod
    def from_dict(d: dict) -> "ScenarioConfig":
        def split(key: str) -> tuple[str, str]:
            left, right = key.split(".", 1)
            return left, right

        return ScenarioConfig(
            name=d["name"],
            workspaces=int(d["workspaces"]),
            spots_per_workspace=int(d["spots_per_workspace"]),
            pattern={int(i): Color(c) for i, c in d["pattern"].items()},
            partially_known={
                int(i): Color(c) for i, c in d.get("partially_known", {}).items()
            },
            block_inventory={
                (Agent(split(k)[0]), Color(split(k)[1])): int(n)
                for k, n in d["block_inventory"].items()
            },
            color_distance={
                (Agent(split(k)[0]), Color(split(k)[1])): Distance(v)
                for k, v in d["color_distance"].items()
            },
            nominal_times={
                (Agent(split(k)[0]), Distance(split(k)[1])): float(t)
                for k, t in d["nominal_times"].items()
            },
        )


@dataclass(frozen=True)
class TaskGraph:
    """Immutable snapshot of the whole task: structure, states, inventories.

    The dummy start node (id 0) counts as complete; the dummy finish node
    exists only in the topology. ``predecessors`` is shared structure and is
    never mutated after construction.
    """

    config: ScenarioConfig
    subtasks: dict[int, Subtask]
    predecessors: dict[int, frozenset[int]]
    inventories: dict[tuple[Agent, Color], int]

    @property
    def finish_id(self) -> int:
        return self.config.finish_id

    @property
    def node_count(self) -> int:
        # real subtasks plus the two dummies
        return len(self.subtasks) + 2

    def subtask(self, subtask_id: int) -> Subtask:
        try:
            return self.subtasks[subtask_id]
        except KeyError:
            raise ActionError("unknown_subtask", f"no subtask {subtask_id}") from None

    def preds_of(self, subtask_id: int) -> frozenset[int]:
        return self.predecessors[subtask_id]

    def is_complete(self, subtask_id: int) -> bool:
        if subtask_id == START_ID:
            return True
        return self.subtasks[subtask_id].state == SubtaskState.PLACED

    def preds_complete(self, subtask_id: int) -> bool:
        return all(self.is_complete(p) for p in self.predecessors[subtask_id])

    def open_ids(self) -> list[int]:
        return [i for i in sorted(self.subtasks) if not self.is_complete(i)]

    def all_complete(self) -> bool:
        return not self.open_ids()

    def ids_in_state(self, state: SubtaskState) -> list[int]:
        return [i for i in sorted(self.subtasks) if self.subtasks[i].state == state]

    def inventory(self, agent: Agent, color: Color) -> int:
        return self.inventories[(agent, color)]

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "subtasks": {
                str(i): {
                    "state": s.state.value,
                    "placed_color": s.placed_color.value if s.placed_color else None,
                    "assigned_color": s.assigned_color.value if s.assigned_color else None,
                }
                for i, s in sorted(self.subtasks.items())
            },
            "inventories": {
                f"{a.value}.{c.value}": n for (a, c), n in sorted(self.inventories.items())
            },
        }

    @staticmethod
    def from_dict(d: dict) -> "TaskGraph":
        config = ScenarioConfig.from_dict(d["config"])
        graph = build_study_graph(config)
        subtasks = dict(graph.subtasks)
        for key, body in d["subtasks"].items():
            i = int(key)
            placed = body.get("placed_color")
            assigned = body.get("assigned_color")
            subtasks[i] = replace(
                subtasks[i],
                state=SubtaskState(body["state"]),
                placed_color=Color(placed) if placed else None,
                assigned_color=Color(assigned) if assigned else None,
            )
        inventories = {}
        for key, n in d["inventories"].items():
            agent, color = key.split(".", 1)
            inventories[(Agent(agent), Color(color))] = int(n)
        return replace(graph, subtasks=subtasks, inventories=inventories)


def build_study_graph(config: ScenarioConfig) -> TaskGraph:
    """Build the initial graph: per-workspace chains hanging off the start node."""
    spots = config.spots_per_workspace
    subtasks: dict[int, Subtask] = {}
    predecessors: dict[int, frozenset[int]] = {}
    for workspace in range(1, config.workspaces + 1):
        for spot in range(1, spots + 1):
            sid = (workspace - 1) * spots + spot
            color = config.pattern[sid]
            subtasks[sid] = Subtask(
                id=sid,
                workspace=workspace,
                spot=spot,
                required_color=color,
                t_h=config.nominal_time(Agent.HUMAN, color),
                t_r=config.nominal_time(Agent.ROBOT, color),
            )
            predecessors[sid] = frozenset({START_ID if spot == 1 else sid - 1})
    tails = frozenset(
        workspace * spots for workspace in range(1, config.workspaces + 1)
    )
    predecessors[config.finish_id] = tails
    inventories = dict(config.block_inventory)
    return TaskGraph(
        config=config,
        subtasks=subtasks,
        predecessors=predecessors,
        inventories=inventories,
    )


def topological_order(graph: TaskGraph) -> list[int]:
    """Kahn's algorithm over all nodes including dummies, lowest id first."""
    nodes = [START_ID, *sorted(graph.subtasks), graph.finish_id]
    indegree = {n: 0 for n in nodes}
    succs: dict[int, list[int]] = {n: [] for n in nodes}
    for node in nodes:
        for pred in graph.predecessors.get(node, frozenset()):
            succs[pred].append(node)
            indegree[node] += 1
    ready = sorted(n for n in nodes if indegree[n] == 0)
    order: list[int] = []
    while ready:
        node = ready.pop(0)
        order.append(node)
        for succ in sorted(succs[node]):
            indegree[succ] -= 1
            if indegree[succ] == 0:
                ready.append(succ)
        ready.sort()
    if len(order) != len(nodes):
        raise ValueError("precedence graph contains a cycle")
    return order


def _check_legal(graph: TaskGraph, action: AgentAction) -> Subtask:
    """Validate an action, returning the target subtask. Raises ActionError."""
    sub = graph.subtask(action.subtask_id)
    key = (sub.state, action.kind)
    if key not in TRANSITIONS:
        raise ActionError(
            "illegal_transition",
            f"{action.kind.value} is not allowed while subtask {sub.id} "
            f"is {sub.state.value}",
        )
    if action.kind in _FRESH_SPOT_KINDS and not graph.preds_complete(sub.id):
        raise ActionError(
            "precedence",
            f"subtask {sub.id} has incomplete predecessors",
        )
    if action.kind in COLOR_KINDS:
        if action.block_color is None:
            raise ActionError(
                "color_required", f"{action.kind.value} needs a block color"
            )
    elif action.block_color is not None:
        # the color of every other kind is dictated by the spot, not chosen
        raise ActionError(
            "color_not_allowed", f"{action.kind.value} does not take a color"
        )
    if action.kind == ActionKind.H1:
        color = action.block_color
        assert color is not None
        if graph.inventory(Agent.HUMAN, color) <= 0:
            raise ActionError(
                "no_blocks", f"human has no {color.value} blocks left"
            )
    elif action.kind == ActionKind.H4:
        if graph.inventory(Agent.HUMAN, sub.required_color) <= 0:
            raise ActionError(
                "no_blocks",
                f"human has no {sub.required_color.value} blocks left",
            )
    elif action.kind in (ActionKind.R1, ActionKind.R4):
        if graph.inventory(Agent.ROBOT, sub.required_color) <= 0:
            raise ActionError(
                "no_blocks",
                f"robot has no {sub.required_color.value} blocks left",
            )
    return sub


def apply_action(graph: TaskGraph, action: AgentAction) -> TaskGraph:
    """Apply one agent action, returning the successor graph.

    Exactly one subtask changes state; inventories move with the block.
    Raises ``ActionError`` (graph unchanged) for any illegal action.
    """
    sub = _check_legal(graph, action)
    outcome = TRANSITIONS[(sub.state, action.kind)]
    if isinstance(outcome, tuple):
        correct, wrong = outcome
        next_state = correct if action.block_color == sub.required_color else wrong
    else:
        next_state = outcome

    inventories = dict(graph.inventories)
    placed = sub.placed_color
    assigned = sub.assigned_color
    kind = action.kind
    if kind == ActionKind.H1:
        assert action.block_color is not None
        inventories[(Agent.HUMAN, action.block_color)] -= 1
        placed = action.block_color
    elif kind == ActionKind.H4:
        inventories[(Agent.HUMAN, sub.required_color)] -= 1
        placed = sub.required_color
        assigned = None
    elif kind in (ActionKind.R1, ActionKind.R4):
        inventories[(Agent.ROBOT, sub.required_color)] -= 1
        placed = sub.required_color
        assigned = None
    elif kind in (ActionKind.H3, ActionKind.R3):
        assert placed is not None
        inventories[(Agent.HUMAN, placed)] += 1
        placed = None
    elif kind == ActionKind.H2:
        assigned = action.block_color
    elif kind == ActionKind.R2:
        assigned = sub.required_color
    else:  # H5, H6, R5, R6: assignment dissolves, no block moves
        assigned = None

    subtasks = dict(graph.subtasks)
    subtasks[sub.id] = replace(
        sub, state=next_state, placed_color=placed, assigned_color=assigned
    )
    return replace(graph, subtasks=subtasks, inventories=inventories)


def feasible_actions(graph: TaskGraph, agent: Agent) -> list[AgentAction]:
    """Every action of ``agent`` that apply_action would accept right now.

    Color-carrying kinds are expanded per candidate color. Deterministic
    order: subtask id, then kind, then color name.
    """
    actions: list[AgentAction] = []
    for sid in sorted(graph.subtasks):
        sub = graph.subtasks[sid]
        for (state, kind), _ in TRANSITIONS.items():
            if state != sub.state or kind.agent != agent:
                continue
            if kind in COLOR_KINDS:
                candidates = [
                    AgentAction(kind, sid, color)
                    for color in sorted(Color, key=lambda c: c.value)
                ]
            else:
                candidates = [AgentAction(kind, sid)]
            for candidate in candidates:
                try:
                    _check_legal(graph, candidate)
                except ActionError:
                    continue
                actions.append(candidate)
    actions.sort(key=lambda a: (a.subtask_id, a.kind.value,
                                a.block_color.value if a.block_color else ""))
    return actions


def immediately_feasible_robot_set(graph: TaskGraph) -> frozenset[int]:
    """U: subtasks the robot could start placing now.

    All predecessors complete and own state Initial. Misplaced spots do
    not qualify: the wrong block must be returned before anyone can
    place, and that return already keeps the robot busy, which is the
    whole point of constraining U during allocation.
    """
    return frozenset(
        sid
        for sid, sub in graph.subtasks.items()
        if sub.state == SubtaskState.INITIAL and graph.preds_complete(sid)
    )


def color_correctness(graph: TaskGraph, action: AgentAction) -> bool | None:
    """Whether a color-choosing action picked the required color.

    None for kinds whose color is dictated rather than chosen.
    """
    if action.kind not in COLOR_KINDS:
        return None
    return action.block_color == graph.subtask(action.subtask_id).required_color


def robot_action_duration(graph: TaskGraph, action: AgentAction) -> float:
    """Seconds the robot is occupied by one of its actions."""
    if action.kind in (ActionKind.R1, ActionKind.R4):
        return graph.subtask(action.subtask_id).t_r
    if action.kind == ActionKind.R3:
        # return trip drops the block at the near hand-over point
        return graph.config.nominal_times[(Agent.ROBOT, Distance.NEAR)]
    return 0.0  # R2, R5, R6 are messages


def color_census(graph: TaskGraph) -> dict[Color, int]:
    """Blocks per color summed over both inventories and the shared area."""
    census = {color: 0 for color in Color}
    for (_, color), count in graph.inventories.items():
        census[color] += count
    for sub in graph.subtasks.values():
        if sub.placed_color is not None:
            census[sub.placed_color] += 1
    return census


def iter_subtasks(graph: TaskGraph) -> Iterator[Subtask]:
    for sid in sorted(graph.subtasks):
        yield graph.subtasks[sid]
