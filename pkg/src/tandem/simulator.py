"""Scripted human archetypes and deterministic whole-run simulation.

The scripts reproduce the qualitative participant profiles: leaders pick
their own work and veto suggestions, followers delegate the far tables and
wait to be told, with two collaborative blends in between, plus a mid-run
preference switcher, an error-prone leader, and a builder who garbles the
final workspace. A run is a pure function of (scenario, script, planner
parameters): every stochastic choice draws from one seeded generator and
the engine loop is event-driven, so equal inputs give byte-identical logs.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Mapping

import numpy as np
from numpy.polynomial import Polynomial

from .events import EventKind, EventLog
from .model import (
    ActionKind,
    Agent,
    AgentAction,
    Color,
    Distance,
    ScenarioConfig,
    SubtaskState,
    TaskGraph,
    build_study_graph,
)
from .planner import (
    DriverMove,
    PlannerParams,
    PlannerState,
    initial_state,
    run_to_completion,
)
from .scenarios import COLOR_DISTANCE


class HumanStyle(str, Enum):
    LEADER = "leader"
    COLLABORATIVE_LEADER = "collaborative_leader"
    COLLABORATIVE_FOLLOWER = "collaborative_follower"
    FOLLOWER = "follower"
    SWITCHER = "switcher"
    ERROR_PRONE = "error_prone"
    CONFUSED_TAIL = "confused_tail"


# Per-style policy numbers: (veto probability on an incoming assignment,
# delegation bias for near colors, delegation bias for far colors,
# probability of self-placing when nothing was delegated this poll).
_PROFILES: dict[HumanStyle, tuple[float, float, float, float]] = {
    HumanStyle.LEADER: (1.0, 0.0, 0.0, 1.0),
    HumanStyle.COLLABORATIVE_LEADER: (0.35, 0.05, 0.30, 0.85),
    HumanStyle.COLLABORATIVE_FOLLOWER: (0.08, 0.20, 0.65, 0.35),
    HumanStyle.FOLLOWER: (0.0, 0.25, 1.0, 0.10),
    HumanStyle.ERROR_PRONE: (0.80, 0.0, 0.10, 1.0),
    # a leader until corrected twice, then accepts guidance (see
    # ScriptedHuman: the veto applies only before that point)
    HumanStyle.CONFUSED_TAIL: (0.85, 0.05, 0.30, 0.95),
}


def _study_bias(near: float, far: float) -> dict[Color, float]:
    return {
        color: near
        if COLOR_DISTANCE[(Agent.HUMAN, color)] is Distance.NEAR
        else far
        for color in Color
    }


@dataclass(frozen=True)
class HumanScript:
    """Parameter bundle describing one scripted participant.

    ``assign_to_robot_bias`` maps block color to the probability of
    delegating a fresh spot of that color instead of keeping it.
    ``error_rate`` is the slip probability on a color choice; at spots the
    participant only partially remembers it compounds with a coin flip
    between the two candidate colors (see ``ScriptedHuman``).
    """

    style: HumanStyle
    reject_prob: float
    assign_to_robot_bias: Mapping[Color, float]
    memory_accuracy: float = 1.0
    speed_factor: float = 1.0
    rng_seed: int = 0
    error_rate: float = 0.0
    switch_time: float | None = None
    confused_workspace: int | None = None

    def __post_init__(self) -> None:
        for name in ("reject_prob", "memory_accuracy", "error_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        for color, p in self.assign_to_robot_bias.items():
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"bias for {color.value} must be in [0, 1]")
        if self.speed_factor <= 0:
            raise ValueError("speed_factor must be positive")
        if self.style is HumanStyle.SWITCHER:
            if self.switch_time is None or self.switch_time < 0:
                raise ValueError("switcher style needs a nonnegative switch_time")
        if self.style is HumanStyle.CONFUSED_TAIL and self.confused_workspace is None:
            raise ValueError("confused_tail style needs a confused_workspace")

    @classmethod
    def _preset(cls, style: HumanStyle, seed: int, **extra: object) -> "HumanScript":
        reject, near, far, _ = _PROFILES.get(style, _PROFILES[HumanStyle.LEADER])
        return cls(
            style=style,
            reject_prob=reject,
            assign_to_robot_bias=_study_bias(near, far),
            rng_seed=seed,
            **extra,  # type: ignore[arg-type]
        )

    @classmethod
    def leader(cls, seed: int = 0) -> "HumanScript":
        return cls._preset(HumanStyle.LEADER, seed)

    @classmethod
    def collaborative_leader(cls, seed: int = 0) -> "HumanScript":
        return cls._preset(HumanStyle.COLLABORATIVE_LEADER, seed)

    @classmethod
    def collaborative_follower(cls, seed: int = 0) -> "HumanScript":
        return cls._preset(HumanStyle.COLLABORATIVE_FOLLOWER, seed)

    @classmethod
    def follower(cls, seed: int = 0) -> "HumanScript":
        return cls._preset(HumanStyle.FOLLOWER, seed)

    @classmethod
    def switcher(cls, switch_time: float = 300.0, seed: int = 0) -> "HumanScript":
        return cls._preset(HumanStyle.SWITCHER, seed, switch_time=switch_time)

    @classmethod
    def error_prone(
        cls, rate: float = 0.3, seed: int = 0, memory_accuracy: float = 1.0
    ) -> "HumanScript":
        return cls._preset(
            HumanStyle.ERROR_PRONE,
            seed,
            error_rate=rate,
            memory_accuracy=memory_accuracy,
        )

    @classmethod
    def confused_tail(cls, workspace: int = 4, seed: int = 0) -> "HumanScript":
        return cls._preset(HumanStyle.CONFUSED_TAIL, seed, confused_workspace=workspace)

    def to_dict(self) -> dict:
        d: dict = {
            "style": self.style.value,
            "reject_prob": self.reject_prob,
            "assign_to_robot_bias": {
                c.value: p for c, p in sorted(self.assign_to_robot_bias.items())
            },
            "memory_accuracy": self.memory_accuracy,
            "speed_factor": self.speed_factor,
            "rng_seed": self.rng_seed,
            "error_rate": self.error_rate,
        }
        if self.switch_time is not None:
            d["switch_time"] = self.switch_time
        if self.confused_workspace is not None:
            d["confused_workspace"] = self.confused_workspace
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "HumanScript":
        return cls(
            style=HumanStyle(d["style"]),
            reject_prob=float(d["reject_prob"]),
            assign_to_robot_bias={
                Color(c): float(p) for c, p in d["assign_to_robot_bias"].items()
            },
            memory_accuracy=float(d.get("memory_accuracy", 1.0)),
            speed_factor=float(d.get("speed_factor", 1.0)),
            rng_seed=int(d.get("rng_seed", 0)),
            error_rate=float(d.get("error_rate", 0.0)),
            switch_time=(
                float(d["switch_time"]) if d.get("switch_time") is not None else None
            ),
            confused_workspace=(
                int(d["confused_workspace"])
                if d.get("confused_workspace") is not None
                else None
            ),
        )


def named_script(name: str, seed: int = 0) -> HumanScript:
    """Build a script from a CLI-style name.

    Plain names pick an archetype; ``switcher:<seconds>``,
    ``error_prone:<rate>`` and ``confused_tail:<workspace>`` carry their
    parameter after a colon.
    """
    base, _, arg = name.partition(":")
    base = base.strip().lower()
    try:
        if base == "switcher":
            return HumanScript.switcher(float(arg) if arg else 300.0, seed)
        if base == "error_prone":
            return HumanScript.error_prone(float(arg) if arg else 0.3, seed)
        if base == "confused_tail":
            return HumanScript.confused_tail(int(arg) if arg else 4, seed)
        factory = {
            "leader": HumanScript.leader,
            "collaborative_leader": HumanScript.collaborative_leader,
            "collaborative_follower": HumanScript.collaborative_follower,
            "follower": HumanScript.follower,
        }[base]
    except (KeyError, ValueError) as exc:
        raise ValueError(f"unknown human script {name!r}") from exc
    return factory(seed)


@dataclass(frozen=True)
class SimConfig:
    """Run envelope around a scenario.

    ``walking_speed`` (m/s) is the reference pace the default nominal times
    assume; it is carried for documentation and export, not recomputed.
    """

    scenario: ScenarioConfig
    horizon: float | None = None
    ui_action_time: float = 2.0
    walking_speed: float = 1.3

    def __post_init__(self) -> None:
        if self.horizon is not None and self.horizon <= 0:
            raise ValueError("horizon must be positive when set")
        if self.ui_action_time < 0:
            raise ValueError("ui_action_time must be nonnegative")
        if self.walking_speed <= 0:
            raise ValueError("walking_speed must be positive")

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario.to_dict(),
            "horizon": self.horizon,
            "ui_action_time": self.ui_action_time,
            "walking_speed": self.walking_speed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SimConfig":
        return cls(
            scenario=ScenarioConfig.from_dict(d["scenario"]),
            horizon=d.get("horizon"),
            ui_action_time=float(d.get("ui_action_time", 2.0)),
            walking_speed=float(d.get("walking_speed", 1.3)),
        )


class ScriptedHuman:
    """Callable driver turning a script into timed actions.

    Whether the participant knows the true color of each partially known
    spot is drawn once per run (Bernoulli with the script's memory
    accuracy). At an unknown spot they flip a coin between the two sheet
    colors, so the wrong-pick probability there is
    ``error_rate + (1 - error_rate) / 2`` versus plain ``error_rate`` at a
    fully known spot.
    """

    def __init__(
        self,
        script: HumanScript,
        scenario: ScenarioConfig,
        ui_action_time: float = 2.0,
    ) -> None:
        self.script = script
        self.scenario = scenario
        self.ui_action_time = ui_action_time
        self._rng = np.random.default_rng(script.rng_seed)
        self._knows = {
            sid: bool(self._rng.random() < script.memory_accuracy)
            for sid in sorted(scenario.partially_known)
        }
        # a confused builder misremembers one workspace as a fixed wrong
        # recollection: the same bad color every visit, and it also skews
        # which spots look near, since they plan trips from memory
        self._garbled: dict[int, Color] = {}
        if script.style is HumanStyle.CONFUSED_TAIL:
            layout = build_study_graph(scenario)
            for sid in sorted(layout.subtasks):
                sub = layout.subtask(sid)
                if sub.workspace != script.confused_workspace:
                    continue
                decoy = scenario.partially_known.get(sid)
                self._garbled[sid] = (
                    decoy if decoy is not None
                    else self._other_color(sub.required_color)
                )
        # spots acted on from the garbled memory; seeing two of them undone
        # by the robot ends the insisting phase and vetoes stop
        self._garbled_acts: set[int] = set()
        self._corrections_seen = 0
        self._chastened = False

    def __call__(self, state: PlannerState, now: float) -> DriverMove | None:
        graph = state.graph
        reject_prob, bias, self_place = self._policy(now)
        self._notice_corrections(graph)
        if self._chastened:
            reject_prob = 0.0

        assigned = graph.ids_in_state(SubtaskState.ASSIGNED_HUMAN)
        if assigned:
            sid = min(assigned)
            if self._rng.random() < reject_prob:
                return self._ui_move(ActionKind.H6, sid)
            sub = graph.subtask(sid)
            if graph.inventory(Agent.HUMAN, sub.required_color) <= 0:
                return None  # cannot comply; leave the spot for withdrawal
            return DriverMove(
                AgentAction(ActionKind.H4, sid),
                sub.t_h * self.script.speed_factor,
            )

        fresh = self._fresh_spots(graph, state.robot_underway)
        if not fresh:
            return None
        for sid in fresh:
            hint = self._cue_nearest(sid)
            if self._rng.random() < bias.get(hint, 0.0):
                color = self._pick_color(graph, sid, physical=False)
                if color is None:
                    continue
                if sid in self._garbled:
                    self._garbled_acts.add(sid)
                return self._ui_move(ActionKind.H2, sid, color)
        # the session opens with the human acting, so force a move while the
        # robot is still waiting for its first evidence
        must_act = not state.human_started
        if must_act or self._rng.random() < self_place:
            for sid in fresh:
                color = self._pick_color(graph, sid, physical=True)
                if color is None:
                    continue
                if sid in self._garbled:
                    self._garbled_acts.add(sid)
                duration = (
                    self.scenario.nominal_time(Agent.HUMAN, color)
                    * self.script.speed_factor
                )
                return DriverMove(AgentAction(ActionKind.H1, sid, color), duration)
        return None

    # -- policy internals --------------------------------------------------

    def _notice_corrections(self, graph: TaskGraph) -> None:
        """A garbled move undone by the robot reads as a correction.

        The spot shows Initial again even though this builder remembers
        acting on it: the robot returned the block or refused the
        delegation. Two of those end the insisting phase.
        """
        if self._chastened or not self._garbled_acts:
            return
        undone = {
            sid
            for sid in self._garbled_acts
            if graph.subtask(sid).state is SubtaskState.INITIAL
        }
        if undone:
            self._corrections_seen += len(undone)
            self._garbled_acts -= undone
            if self._corrections_seen >= 2:
                self._chastened = True

    def _policy(self, now: float) -> tuple[float, Mapping[Color, float], float]:
        style = self.script.style
        if style is HumanStyle.SWITCHER:
            assert self.script.switch_time is not None
            phase = (
                HumanStyle.LEADER
                if now < self.script.switch_time
                else HumanStyle.FOLLOWER
            )
            reject, near, far, self_place = _PROFILES[phase]
            return reject, _study_bias(near, far), self_place
        _, _, _, self_place = _PROFILES.get(style, _PROFILES[HumanStyle.LEADER])
        return self.script.reject_prob, self.script.assign_to_robot_bias, self_place

    def _fresh_spots(self, graph: TaskGraph, busy: int | None = None) -> list[int]:
        ready = [
            sid
            for sid in graph.ids_in_state(SubtaskState.INITIAL)
            if sid != busy and graph.preds_complete(sid)
        ]
        return sorted(ready, key=lambda sid: (self._distance_rank(sid), sid))

    def _cues(self, sid: int) -> tuple[Color, ...]:
        # what this builder remembers the spot wanting, not the hidden truth
        garbled = self._garbled.get(sid)
        if garbled is not None:
            return (garbled,)
        return self.scenario.cue(sid)

    def _distance_rank(self, sid: int) -> int:
        return min(
            0
            if COLOR_DISTANCE.get((Agent.HUMAN, c), Distance.FAR) is Distance.NEAR
            else 1
            for c in self._cues(sid)
        )

    def _cue_nearest(self, sid: int) -> Color:
        return min(
            self._cues(sid),
            key=lambda c: (
                0
                if COLOR_DISTANCE.get((Agent.HUMAN, c), Distance.FAR)
                is Distance.NEAR
                else 1,
                c.value,
            ),
        )

    def _pick_color(
        self, graph: TaskGraph, sid: int, physical: bool
    ) -> Color | None:
        sub = graph.subtask(sid)
        required = sub.required_color
        decoy = self.scenario.partially_known.get(sid)
        script = self.script

        garbled = self._garbled.get(sid)
        if garbled is not None:
            # insists on the misremembered color every time
            return self._stocked(graph, garbled, required, physical)

        wrong_prob = script.error_rate
        if decoy is not None and not self._knows[sid]:
            wrong_prob = script.error_rate + (1.0 - script.error_rate) * 0.5
        if self._rng.random() < wrong_prob:
            wrong = decoy if decoy is not None else self._other_color(required)
            return self._stocked(graph, wrong, required, physical)
        return self._stocked(graph, required, decoy or required, physical)

    def _other_color(self, required: Color) -> Color:
        options = [c for c in sorted(Color) if c is not required]
        return options[int(self._rng.integers(len(options)))]

    def _stocked(
        self, graph: TaskGraph, choice: Color, fallback: Color, physical: bool
    ) -> Color | None:
        """Respect the block count: a color the human is out of cannot be picked up."""
        if not physical:
            return choice
        if graph.inventory(Agent.HUMAN, choice) > 0:
            return choice
        if graph.inventory(Agent.HUMAN, fallback) > 0:
            return fallback
        return None

    def _ui_move(
        self, kind: ActionKind, sid: int, color: Color | None = None
    ) -> DriverMove:
        return DriverMove(
            AgentAction(kind, sid, color),
            self.ui_action_time * self.script.speed_factor,
        )


def run_sim(
    config: SimConfig,
    script: HumanScript,
    planner_params: PlannerParams | None = None,
    seed: int | None = None,
) -> EventLog:
    """Simulate one full session and return its event log.

    ``seed`` overrides the script's own seed when given. The shared-area
    lock is always enforced: a human placement that would land inside a
    robot placement interval completes when the robot clears the table.
    """
    params = planner_params if planner_params is not None else PlannerParams()
    if seed is not None:
        script = replace(script, rng_seed=seed)
    graph = build_study_graph(config.scenario)
    state = initial_state(graph, params)
    log = EventLog()
    log.append(
        EventKind.RUN_META,
        {
            "event": "run_start",
            "scenario": config.scenario.to_dict(),
            "planner_params": params.to_dict(),
            "script": script.to_dict(),
            "sim": {
                "horizon": config.horizon,
                "ui_action_time": config.ui_action_time,
                "walking_speed": config.walking_speed,
            },
        },
        0.0,
    )
    driver = ScriptedHuman(script, config.scenario, config.ui_action_time)
    _, log = run_to_completion(
        state,
        params,
        driver,
        log=log,
        horizon=config.horizon,
        lock_shared_area=True,
    )
    return log


@dataclass(frozen=True)
class PreferenceFit:
    """Integrated following-preference estimate over a run window."""

    value: float
    method: str  # "polyfit" or "trapezoid"
    sample_count: int


def preference_fit(log: EventLog, t0: float = 0.2, degree: int = 4) -> PreferenceFit:
    """Summarize a run's following-preference trajectory as one number.

    Sample times are normalized by the run length, a least-squares
    polynomial of the given degree is fit to the posterior means, and its
    integral over [t0, 1] is returned. With fewer than degree + 1 samples
    the fit is ill-posed, so the raw samples are integrated trapezoidally
    instead and the result is flagged by ``method``.
    """
    if not 0.0 <= t0 < 1.0:
        raise ValueError("t0 must be in [0, 1)")
    samples = [
        (rec.sim_time, float(rec.payload["mean"]))
        for rec in log.of_kind(EventKind.BELIEF_F)
        if "mean" in rec.payload
    ]
    if not samples:
        prior = _prior_mean(log)
        return PreferenceFit(prior * (1.0 - t0), "trapezoid", 0)

    end = samples[-1][0]
    for rec in log.of_kind(EventKind.RUN_META):
        if rec.payload.get("event") == "run_complete":
            end = max(end, float(rec.payload.get("clock", end)))
    if log.records:
        end = max(end, log.records[-1].sim_time)
    if end <= 0:
        return PreferenceFit(samples[-1][1] * (1.0 - t0), "trapezoid", len(samples))

    t = np.array([s[0] / end for s in samples])
    y = np.array([s[1] for s in samples])
    if len(samples) >= degree + 1 and len(np.unique(t)) >= degree + 1:
        poly = Polynomial.fit(t, y, degree)
        anti = poly.integ()
        return PreferenceFit(float(anti(1.0) - anti(t0)), "polyfit", len(samples))

    # piecewise-linear fallback with flat extension to the window edges
    grid = np.unique(np.concatenate(([t0, 1.0], t[(t > t0) & (t < 1.0)])))
    vals = np.interp(grid, t, y)
    return PreferenceFit(float(np.trapezoid(vals, grid)), "trapezoid", len(samples))


def overall_preference(log: EventLog, t0: float = 0.2, degree: int = 4) -> float:
    return preference_fit(log, t0, degree).value


def _prior_mean(log: EventLog) -> float:
    for rec in log.of_kind(EventKind.RUN_META):
        if rec.payload.get("event") == "run_start":
            est = rec.payload.get("planner_params", {}).get("estimator", {})
            return float(est.get("prior_p_following", 0.7))
    return 0.7


def run_summary(log: EventLog) -> dict:
    """Digest one log into the headline run metrics."""
    start = end = None
    for rec in log.of_kind(EventKind.RUN_META):
        if rec.payload.get("event") == "run_start":
            start = rec
        elif rec.payload.get("event") == "run_complete":
            end = rec

    counts: Counter[str] = Counter()
    rejected = 0
    for rec in log:
        if rec.kind in (EventKind.HUMAN_ACTION, EventKind.ROBOT_ACTION):
            if rec.payload.get("accepted"):
                counts[rec.payload["action"]["kind"]] += 1
            else:
                rejected += 1
    misplacements = sum(
        1
        for rec in log.of_kind(EventKind.STATE_CHANGE)
        if rec.payload.get("to") == SubtaskState.MISPLACED.value
    )

    def last_mean(kind: EventKind, default: float) -> float:
        recs = log.of_kind(kind)
        return float(recs[-1].payload["mean"]) if recs else default

    est = {}
    if start is not None:
        est = start.payload.get("planner_params", {}).get("estimator", {})
    fit = preference_fit(log)
    timed_out = bool(end.payload.get("timed_out")) if end else False
    return {
        "completed": end is not None and not timed_out,
        "timed_out": timed_out,
        "makespan": float(end.payload["clock"]) if end else None,
        "actions": {k: counts[k] for k in sorted(counts)},
        "rejected_actions": rejected,
        "misplacements": misplacements,
        "robot_assignments": counts.get(ActionKind.R2.value, 0),
        "final_p_f": last_mean(
            EventKind.BELIEF_F, float(est.get("prior_p_following", 0.7))
        ),
        "final_p_e": last_mean(
            EventKind.BELIEF_E, float(est.get("prior_p_error", 0.1))
        ),
        "overall_preference": fit.value,
        "op_method": fit.method,
        "op_samples": fit.sample_count,
        "style": (start.payload.get("script", {}).get("style") if start else None),
        "seed": (start.payload.get("script", {}).get("rng_seed") if start else None),
    }
