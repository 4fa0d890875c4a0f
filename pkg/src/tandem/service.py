"""Live session service: a human client plays against the planning loop.

One WebSocket connection per session, JSON envelopes both ways:
``{"type": <MessageType>, "body": {...}}``. The client sends ``join`` and
``human_action``; the engine answers every ``human_action`` with either a
``snapshot`` (accepted) or an ``action_rejected`` (refused), streams
``robot_action`` / ``assignment_notice`` as the planner acts, re-sends
``legal_actions`` after every state change, and toggles ``light_state``
while the robot physically occupies the shared area. Physical moves sent
during a red light are refused with reason ``red_light``; moves naming
the spot the robot is working get ``robot_underway``.

Robot durations are simulated seconds scaled by a real-time factor for
playability (0 means no waiting at all). The session clock advances only
with robot actions; client actions are stamped at the current clock, so
a session is deterministic given the ordered client trace.

Each session appends its event log to a JSONL file, one flushed record
per event, so an abandoned session still replays. Disconnecting pauses
the session; the ``join`` ack carries a rejoin token that resumes it.
"""
from __future__ import annotations

import asyncio
import secrets
from dataclasses import dataclass, field, replace
from enum import Enum
from itertools import count
from pathlib import Path

from fastapi import FastAPI, WebSocket
from fastapi.websockets import WebSocketDisconnect

from .events import EventKind, PersistentEventLog
from .model import (
    PHYSICAL_KINDS,
    ActionKind,
    Agent,
    AgentAction,
    ScenarioConfig,
    SubtaskState,
    build_study_graph,
    feasible_actions,
    robot_action_duration,
)
from .planner import (
    PlannerFault,
    PlannerParams,
    PlannerState,
    initial_state,
    observe_human_action,
    plan_step,
)
from .simulator import run_summary


class MessageType(str, Enum):
    JOIN = "join"
    SNAPSHOT = "snapshot"
    LEGAL_ACTIONS = "legal_actions"
    HUMAN_ACTION = "human_action"
    ACTION_REJECTED = "action_rejected"
    ROBOT_ACTION = "robot_action"
    ASSIGNMENT_NOTICE = "assignment_notice"
    LIGHT_STATE = "light_state"
    TASK_COMPLETE = "task_complete"
    BELIEF_DEBUG = "belief_debug"


@dataclass(frozen=True)
class ServiceConfig:
    """Everything a service instance needs to host sessions."""

    scenario: ScenarioConfig
    params: PlannerParams = field(default_factory=PlannerParams)
    realtime_factor: float = 0.2  # wall seconds per simulated second
    log_dir: Path = Path(".")

    def __post_init__(self) -> None:
        if self.realtime_factor < 0:
            raise ValueError("realtime_factor must be >= 0")


class _ClientGone(Exception):
    """The client vanished mid-session; pause and keep state for rejoin."""


_GONE = object()  # queue sentinel pushed by the reader when the socket dies


async def _pump(ws: WebSocket, queue: asyncio.Queue) -> None:
    """Forward client frames into the session queue until the socket dies."""
    try:
        while True:
            queue.put_nowait(await ws.receive_json())
    except Exception:
        queue.put_nowait(_GONE)


class Session:
    """One live run: planner state, its log file, and the message handlers.

    A session outlives its connection. ``serve`` attaches a socket and
    drives the loop; on disconnect the state stays in the registry and a
    later ``join`` with the rejoin token picks it up where it paused.
    """

    def __init__(self, config: ServiceConfig, session_id: str):
        self.config = config
        self.params = config.params
        self.session_id = session_id
        self.rejoin_token = secrets.token_hex(8)
        self.state: PlannerState = initial_state(
            build_study_graph(config.scenario), config.params
        )
        self.t = 0.0
        self.attached = False
        self.complete = False
        self._burst = 0
        self.log = PersistentEventLog(
            Path(config.log_dir) / f"session-{session_id}.jsonl"
        )
        self.log.append(
            EventKind.RUN_META,
            {
                "event": "run_start",
                "scenario": config.scenario.to_dict(),
                "planner_params": config.params.to_dict(),
                "mode": "live",
                "realtime_factor": config.realtime_factor,
            },
            0.0,
        )

    # -- outbound -----------------------------------------------------

    async def _emit(self, ws: WebSocket, mtype: MessageType, body: dict) -> None:
        try:
            await ws.send_json({"type": mtype.value, "body": body})
        except (RuntimeError, WebSocketDisconnect) as exc:
            raise _ClientGone() from exc

    def _light(self) -> str:
        return "red" if self.state.robot_underway is not None else "green"

    def _snapshot_body(self) -> dict:
        graph = self.state.graph
        return {
            "sim_time": self.t,
            "graph": graph.to_dict(),
            "complete": graph.all_complete(),
            "light": self._light(),
            "pending_assignments": [
                {
                    "subtask_id": sid,
                    "color": (
                        graph.subtask(sid).assigned_color.value
                        if graph.subtask(sid).assigned_color
                        else None
                    ),
                }
                for sid in graph.ids_in_state(SubtaskState.ASSIGNED_HUMAN)
            ],
        }

    def _legal_body(self) -> dict:
        busy = self.state.robot_underway
        actions = [
            a
            for a in feasible_actions(self.state.graph, Agent.HUMAN)
            if a.subtask_id != busy
            and not (busy is not None and a.kind in PHYSICAL_KINDS)
        ]
        return {
            "sim_time": self.t,
            "actions": [a.to_dict() for a in actions],
        }

    async def _board_refresh(self, ws: WebSocket) -> None:
        await self._emit(ws, MessageType.SNAPSHOT, self._snapshot_body())
        await self._emit(ws, MessageType.LEGAL_ACTIONS, self._legal_body())

    async def _finalize(self, ws: WebSocket) -> None:
        self.complete = True
        self.log.append(
            EventKind.RUN_META,
            {
                "event": "run_complete",
                "final_graph": self.state.graph.to_dict(),
                "belief_f": self.state.estimator.belief_f.to_list(),
                "belief_e": self.state.estimator.belief_e.to_list(),
                "clock": self.t,
                "timed_out": False,
            },
            self.t,
        )
        self.log.close()
        await self._emit(
            ws,
            MessageType.TASK_COMPLETE,
            {
                "sim_time": self.t,
                "makespan": self.t,
                "summary": run_summary(self.log),
            },
        )

    # -- inbound ------------------------------------------------------

    async def _handle_client(self, ws: WebSocket, msg: object) -> None:
        if not isinstance(msg, dict):
            return
        mtype = msg.get("type")
        if mtype == MessageType.JOIN.value:
            await self._emit(
                ws, MessageType.JOIN, {"ok": False, "reason": "already_joined"}
            )
            return
        if mtype != MessageType.HUMAN_ACTION.value:
            return  # unknown types are ignored, not faulted
        body = msg.get("body") or {}
        try:
            action = AgentAction.from_dict(body)
            if action.agent is not Agent.HUMAN:
                raise ValueError(f"{action.kind.value} is not a human action")
        except (KeyError, TypeError, ValueError) as exc:
            await self._emit(
                ws,
                MessageType.ACTION_REJECTED,
                {
                    "sim_time": self.t,
                    "action": body if isinstance(body, dict) else {},
                    "reason": "malformed",
                    "detail": str(exc),
                },
            )
            return
        if self.state.robot_underway is not None and action.kind in PHYSICAL_KINDS:
            # red light: the robot is at the shared area, hands off
            self.log.append(
                EventKind.HUMAN_ACTION,
                {"action": action.to_dict(), "accepted": False,
                 "reason": "red_light"},
                self.t,
            )
            await self._emit(
                ws,
                MessageType.ACTION_REJECTED,
                {
                    "sim_time": self.t,
                    "action": action.to_dict(),
                    "reason": "red_light",
                    "detail": "the robot occupies the shared area",
                },
            )
            return
        self.state, accepted, reason = observe_human_action(
            self.state, action, self.params, log=self.log, at_time=self.t
        )
        if not accepted:
            await self._emit(
                ws,
                MessageType.ACTION_REJECTED,
                {
                    "sim_time": self.t,
                    "action": action.to_dict(),
                    "reason": reason,
                    "detail": reason,
                },
            )
            return
        await self._emit(ws, MessageType.SNAPSHOT, self._snapshot_body())
        await self._emit(
            ws,
            MessageType.BELIEF_DEBUG,
            {
                "sim_time": self.t,
                "p_f": self.state.estimator.p_f,
                "p_e": self.state.estimator.p_e,
            },
        )
        await self._emit(ws, MessageType.LEGAL_ACTIONS, self._legal_body())
        if self.state.graph.all_complete():
            await self._finalize(ws)

    # -- robot side ---------------------------------------------------

    async def _drain(self, ws: WebSocket, queue: asyncio.Queue, wall: float) -> None:
        """Serve client messages until the robot's wall-clock interval ends."""
        loop = asyncio.get_running_loop()
        deadline = loop.time() + max(wall, 0.0)
        while True:
            remaining = deadline - loop.time()
            if remaining <= 0:
                return
            try:
                msg = await asyncio.wait_for(queue.get(), timeout=remaining)
            except asyncio.TimeoutError:
                return
            if msg is _GONE:
                raise _ClientGone()
            await self._handle_client(ws, msg)

    async def _robot_turn(self, ws: WebSocket, queue: asyncio.Queue) -> bool:
        """Let the planner move once; True if it did anything."""
        self.state, action = plan_step(
            self.state, self.params, log=self.log, at_time=self.t
        )
        if action is None:
            return False
        duration = robot_action_duration(self.state.graph, action)
        if duration == 0:
            self._burst += 1
            if self._burst > self.params.burst_cap:
                raise PlannerFault(
                    f"{self._burst} zero-duration robot actions at "
                    f"t={self.t:.1f}; planner is spinning"
                )
        else:
            self._burst = 0
        await self._emit(
            ws,
            MessageType.ROBOT_ACTION,
            {"sim_time": self.t, "action": action.to_dict(),
             "duration": duration},
        )
        if action.kind is ActionKind.R2:
            sub = self.state.graph.subtask(action.subtask_id)
            await self._emit(
                ws,
                MessageType.ASSIGNMENT_NOTICE,
                {
                    "sim_time": self.t,
                    "subtask_id": sub.id,
                    "color": sub.assigned_color.value if sub.assigned_color else None,
                },
            )
        if duration > 0:
            self.state = replace(self.state, robot_underway=action.subtask_id)
            wall = duration * self.config.realtime_factor
            await self._emit(
                ws,
                MessageType.LIGHT_STATE,
                {"sim_time": self.t, "state": "red",
                 "wall_ms": int(wall * 1000)},
            )
            try:
                await self._drain(ws, queue, wall)
            finally:
                # the action was committed at its start, so a disconnect
                # mid-interval just fast-forwards the bookkeeping
                self.t += duration
                self.state = replace(self.state, robot_underway=None)
            await self._emit(
                ws,
                MessageType.LIGHT_STATE,
                {"sim_time": self.t, "state": "green"},
            )
        await self._board_refresh(ws)
        if self.state.graph.all_complete():
            await self._finalize(ws)
        return True

    # -- lifecycle ----------------------------------------------------

    async def _answer_leftovers(self, ws: WebSocket, queue: asyncio.Queue) -> None:
        """After completion, refuse whatever actions are still queued."""
        while True:
            try:
                msg = queue.get_nowait()
            except asyncio.QueueEmpty:
                return
            if not isinstance(msg, dict):
                continue  # includes the disconnect sentinel
            if msg.get("type") != MessageType.HUMAN_ACTION.value:
                continue
            await self._emit(
                ws,
                MessageType.ACTION_REJECTED,
                {
                    "sim_time": self.t,
                    "action": msg.get("body") or {},
                    "reason": "session_complete",
                    "detail": "the pattern is already complete",
                },
            )

    async def serve(self, ws: WebSocket, queue: asyncio.Queue, resumed: bool) -> None:
        self.attached = True
        try:
            await self._emit(
                ws,
                MessageType.JOIN,
                {
                    "ok": True,
                    "session_id": self.session_id,
                    "rejoin_token": self.rejoin_token,
                    "resumed": resumed,
                    "scenario": self.config.scenario.to_dict(),
                    "realtime_factor": self.config.realtime_factor,
                },
            )
            await self._emit(
                ws,
                MessageType.LIGHT_STATE,
                {"sim_time": self.t, "state": self._light()},
            )
            await self._board_refresh(ws)
            # Client input is committed only while the planner rests, so the
            # log depends on the order of client sends, never on how their
            # arrival interleaves with the robot's chain of moves.
            while not self.complete:
                if await self._robot_turn(ws, queue):
                    continue
                msg = await queue.get()
                if msg is _GONE:
                    raise _ClientGone()
                await self._handle_client(ws, msg)
            await self._answer_leftovers(ws, queue)
        except _ClientGone:
            pass  # paused; the registry keeps the session for rejoin
        finally:
            self.attached = False


async def _nack(ws: WebSocket, reason: str) -> None:
    try:
        await ws.send_json(
            {"type": MessageType.JOIN.value, "body": {"ok": False, "reason": reason}}
        )
        await ws.close()
    except (RuntimeError, WebSocketDisconnect):
        pass


def create_app(config: ServiceConfig) -> FastAPI:
    """Build the ASGI app hosting ``/session`` WebSocket endpoints."""
    app = FastAPI(title="tandem session service")
    sessions: dict[str, Session] = {}
    ids = count()
    app.state.sessions = sessions
    app.state.config = config

    @app.websocket("/session")
    async def session_ws(ws: WebSocket) -> None:
        await ws.accept()
        try:
            first = await ws.receive_json()
        except Exception:
            return
        if not isinstance(first, dict) or first.get("type") != MessageType.JOIN.value:
            await _nack(ws, "expected_join")
            return
        body = first.get("body") or {}
        sid = body.get("session_id")
        if sid is None:
            session = Session(config, f"{next(ids):03d}")
            sessions[session.session_id] = session
            resumed = False
        else:
            session = sessions.get(str(sid))
            if session is None:
                await _nack(ws, "unknown_session")
                return
            if body.get("rejoin_token") != session.rejoin_token:
                await _nack(ws, "bad_token")
                return
            if session.attached:
                await _nack(ws, "busy")
                return
            if session.complete:
                await _nack(ws, "completed")
                return
            resumed = True
        queue: asyncio.Queue = asyncio.Queue()
        pump = asyncio.create_task(_pump(ws, queue))
        try:
            await session.serve(ws, queue, resumed)
        finally:
            pump.cancel()
        try:
            await ws.close()
        except (RuntimeError, WebSocketDisconnect):
            pass

    return app


def serve_session(port: int, config: ServiceConfig, host: str = "127.0.0.1") -> None:
    """Run the session service until interrupted."""
    import uvicorn

    uvicorn.run(create_app(config), host=host, port=port, log_level="warning")
