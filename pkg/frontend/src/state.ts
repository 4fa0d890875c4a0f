// Console view state: a pure reducer over server messages. The board is a
// function of the latest snapshot plus the latest legal-action set; a
// malformed snapshot raises the banner and leaves the last good view alone.

import {
  ActionBody,
  BeliefDebugBody,
  ColorName,
  HumanAction,
  LightName,
  PHYSICAL_HUMAN_KINDS,
  ScenarioView,
  ServerMessage,
  SubtaskView,
  actionKey,
  isLegalActionsBody,
  isSnapshotBody,
} from "./protocol.js";

export interface BeliefSample {
  sim_time: number;
  p_f: number;
  p_e: number;
}

export interface ViewState {
  phase: "connecting" | "joined" | "rejected" | "complete" | "closed";
  sessionId: string | null;
  rejoinToken: string | null;
  resumed: boolean;
  joinError: string | null;
  scenario: ScenarioView | null;
  simTime: number;
  light: LightName;
  lightWallMs: number | null;
  subtasks: Record<string, SubtaskView>;
  inventories: Record<string, number>;
  pendingAssignments: Array<{ subtask_id: number; color: ColorName | null }>;
  legal: ActionBody[];
  awaitingAck: boolean;
  toast: string | null;
  banner: string | null;
  robotBusy: { subtask_id: number; kind: string } | null;
  lastRobotAction: ActionBody | null;
  beliefs: BeliefSample[];
  makespan: number | null;
  showDebug: boolean;
}

export function initialState(): ViewState {
  return {
    phase: "connecting",
    sessionId: null,
    rejoinToken: null,
    resumed: false,
    joinError: null,
    scenario: null,
    simTime: 0,
    light: "green",
    lightWallMs: null,
    subtasks: {},
    inventories: {},
    pendingAssignments: [],
    legal: [],
    awaitingAck: false,
    toast: null,
    banner: null,
    robotBusy: null,
    lastRobotAction: null,
    beliefs: [],
    makespan: null,
    showDebug: false,
  };
}

export function reduce(state: ViewState, msg: ServerMessage): ViewState {
  switch (msg.type) {
    case "join": {
      if (!msg.body.ok) {
        return { ...state, phase: "rejected", joinError: msg.body.reason };
      }
      return {
        ...state,
        phase: "joined",
        sessionId: msg.body.session_id,
        rejoinToken: msg.body.rejoin_token,
        resumed: msg.body.resumed,
        scenario: msg.body.scenario,
        joinError: null,
      };
    }
    case "snapshot": {
      if (!isSnapshotBody(msg.body)) {
        return { ...state, banner: "malformed snapshot; view may be stale" };
      }
      if (msg.body.sim_time < state.simTime) {
        return state; // stale: a newer snapshot already rendered
      }
      return {
        ...state,
        banner: null,
        awaitingAck: false,
        simTime: msg.body.sim_time,
        light: msg.body.light,
        subtasks: msg.body.graph.subtasks,
        inventories: msg.body.graph.inventories,
        pendingAssignments: msg.body.pending_assignments,
        phase: msg.body.complete && state.phase === "joined" ? "complete" : state.phase,
      };
    }
    case "legal_actions": {
      if (!isLegalActionsBody(msg.body)) {
        return { ...state, banner: "malformed legal-action set" };
      }
      return { ...state, legal: msg.body.actions };
    }
    case "light_state": {
      return {
        ...state,
        light: msg.body.state,
        lightWallMs: msg.body.state === "red" ? (msg.body.wall_ms ?? null) : null,
        robotBusy: msg.body.state === "green" ? null : state.robotBusy,
        simTime: Math.max(state.simTime, msg.body.sim_time),
      };
    }
    case "robot_action": {
      return {
        ...state,
        lastRobotAction: msg.body.action,
        robotBusy:
          msg.body.duration > 0
            ? { subtask_id: msg.body.action.subtask_id, kind: msg.body.action.kind }
            : state.robotBusy,
      };
    }
    case "assignment_notice": {
      // the follow-up snapshot carries the authoritative spot state; the
      // notice itself is just the nudge, surfaced as a toast
      return {
        ...state,
        toast: `robot assigned spot ${msg.body.subtask_id} to you`,
      };
    }
    case "action_rejected": {
      return {
        ...state,
        awaitingAck: false,
        toast: `rejected: ${msg.body.reason}`,
      };
    }
    case "belief_debug": {
      return {
        ...state,
        awaitingAck: false,
        beliefs: [...state.beliefs, msg.body as BeliefDebugBody],
      };
    }
    case "task_complete": {
      return {
        ...state,
        phase: "complete",
        makespan: msg.body.makespan,
        simTime: msg.body.sim_time,
        awaitingAck: false,
      };
    }
  }
}

export function markSubmitted(state: ViewState): ViewState {
  return { ...state, awaitingAck: true, toast: null };
}

export function toggleDebug(state: ViewState): ViewState {
  return { ...state, showDebug: !state.showDebug };
}

/**
 * The set of action keys the UI may enable right now. Strictly a subset
 * of the engine's last legal_actions: filtered further by the red light
 * (physical actions) and by an in-flight submission (everything).
 */
export function enabledActionKeys(state: ViewState): Set<string> {
  if (state.phase !== "joined" || state.awaitingAck) return new Set();
  const keys = new Set<string>();
  for (const a of state.legal) {
    if (state.light === "red" && PHYSICAL_HUMAN_KINDS.has(a.kind)) continue;
    keys.add(actionKey(a));
  }
  return keys;
}

export function isEnabled(state: ViewState, action: HumanAction): boolean {
  return enabledActionKeys(state).has(actionKey(action));
}

/** Legal actions for one spot, grouped for the per-spot control strip. */
export function spotActions(state: ViewState, subtaskId: number): ActionBody[] {
  return state.legal.filter((a) => a.subtask_id === subtaskId);
}
