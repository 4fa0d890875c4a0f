// Hand-built wire messages for the reducer and rendering tests. Shapes
// follow the session service's JSON exactly; the round-trip suite checks
// them against the real thing.

import type {
  ActionBody,
  ColorName,
  GraphView,
  ScenarioView,
  ServerMessage,
  SubtaskView,
} from "../src/protocol.js";

export function makeScenario(overrides: Partial<ScenarioView> = {}): ScenarioView {
  return {
    name: "test",
    workspaces: 2,
    spots_per_workspace: 2,
    pattern: { "1": "green", "2": "orange", "3": "pink", "4": "blue" },
    partially_known: { "2": "blue" },
    block_inventory: { green: 2, orange: 2, pink: 2, blue: 2 },
    color_distance: { green: "near", orange: "far", pink: "near", blue: "far" },
    nominal_times: { "human.near": 12, "human.far": 20, "robot.near": 35, "robot.far": 60 },
    ...overrides,
  };
}

export function makeSubtask(overrides: Partial<SubtaskView> = {}): SubtaskView {
  return { state: "initial", placed_color: null, assigned_color: null, ...overrides };
}

export function makeGraph(
  scenario: ScenarioView,
  subtasks: Record<string, Partial<SubtaskView>> = {},
): GraphView {
  const all: Record<string, SubtaskView> = {};
  const total = scenario.workspaces * scenario.spots_per_workspace;
  for (let sid = 1; sid <= total; sid++) {
    all[String(sid)] = makeSubtask(subtasks[String(sid)]);
  }
  return {
    config: scenario,
    subtasks: all,
    inventories: { "human.green": 2, "human.pink": 1, "robot.orange": 2, "robot.blue": 2 },
  };
}

export function joinOk(scenario: ScenarioView): ServerMessage {
  return {
    type: "join",
    body: {
      ok: true,
      session_id: "7",
      rejoin_token: "tok-7",
      resumed: false,
      scenario,
      realtime_factor: 0,
    },
  };
}

export function snapshot(
  graph: GraphView,
  overrides: Partial<{
    sim_time: number;
    complete: boolean;
    light: "red" | "green";
    pending_assignments: Array<{ subtask_id: number; color: ColorName | null }>;
  }> = {},
): ServerMessage {
  return {
    type: "snapshot",
    body: {
      sim_time: 0,
      graph,
      complete: false,
      light: "green",
      pending_assignments: [],
      ...overrides,
    },
  };
}

export function legal(actions: ActionBody[], simTime = 0): ServerMessage {
  return { type: "legal_actions", body: { sim_time: simTime, actions } };
}

export function act(
  kind: string,
  subtask_id: number,
  block_color: ColorName | null = null,
): ActionBody {
  return { agent: "human", kind, subtask_id, block_color };
}

/** Fresh-board offer: H1 in every color plus H2, on both chain heads. */
export function freshLegal(): ServerMessage {
  const heads = [1, 3];
  const actions: ActionBody[] = [];
  for (const sid of heads) {
    for (const color of ["green", "pink", "orange", "blue"] as ColorName[]) {
      actions.push(act("H1", sid, color));
    }
    actions.push(act("H2", sid));
  }
  return legal(actions);
}
