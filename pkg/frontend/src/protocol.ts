// Wire types for the session WebSocket: every message is {type, body}.
// These mirror the engine's JSON verbatim; the guards below are the only
// place the shapes are trusted, everything downstream gets typed values.

export type ColorName = "green" | "pink" | "orange" | "blue";

export type LightName = "red" | "green";

export type SubtaskStateName =
  | "initial"
  | "placed_correctly"
  | "misplaced"
  | "assigned_to_robot_correctly"
  | "assigned_to_robot_incorrectly"
  | "assigned_to_human";

export type HumanKind = "H1" | "H2" | "H3" | "H4" | "H5" | "H6";
export type RobotKind = "R1" | "R2" | "R3" | "R4" | "R5" | "R6";

export const COLOR_NAMES: ColorName[] = ["green", "pink", "orange", "blue"];

// placements and physical pickups; blocked while the light is red
export const PHYSICAL_HUMAN_KINDS: ReadonlySet<string> = new Set(["H1", "H3", "H4"]);

export interface ActionBody {
  agent?: string;
  kind: string;
  subtask_id: number;
  block_color: ColorName | null;
}

export interface SubtaskView {
  state: SubtaskStateName;
  placed_color: ColorName | null;
  assigned_color: ColorName | null;
}

export interface ScenarioView {
  name: string;
  workspaces: number;
  spots_per_workspace: number;
  pattern: Record<string, ColorName>;
  partially_known: Record<string, ColorName>;
  block_inventory: Record<string, number>;
  color_distance: Record<string, string>;
  nominal_times: Record<string, number>;
}

export interface GraphView {
  config: ScenarioView;
  subtasks: Record<string, SubtaskView>;
  inventories: Record<string, number>;
}

export interface JoinOkBody {
  ok: true;
  session_id: string;
  rejoin_token: string;
  resumed: boolean;
  scenario: ScenarioView;
  realtime_factor: number;
}

export interface JoinNackBody {
  ok: false;
  reason: string;
}

export interface SnapshotBody {
  sim_time: number;
  graph: GraphView;
  complete: boolean;
  light: LightName;
  pending_assignments: Array<{ subtask_id: number; color: ColorName | null }>;
}

export interface LegalActionsBody {
  sim_time: number;
  actions: ActionBody[];
}

export interface LightStateBody {
  sim_time: number;
  state: LightName;
  wall_ms?: number;
}

export interface RobotActionBody {
  sim_time: number;
  action: ActionBody;
  duration: number;
}

export interface AssignmentNoticeBody {
  sim_time: number;
  subtask_id: number;
  color: ColorName | null;
}

export interface ActionRejectedBody {
  sim_time: number;
  action: Partial<ActionBody>;
  reason: string;
  detail: string;
}

export interface BeliefDebugBody {
  sim_time: number;
  p_f: number;
  p_e: number;
}

export interface TaskCompleteBody {
  sim_time: number;
  makespan: number;
  summary: Record<string, unknown>;
}

export type ServerMessage =
  | { type: "join"; body: JoinOkBody | JoinNackBody }
  | { type: "snapshot"; body: SnapshotBody }
  | { type: "legal_actions"; body: LegalActionsBody }
  | { type: "light_state"; body: LightStateBody }
  | { type: "robot_action"; body: RobotActionBody }
  | { type: "assignment_notice"; body: AssignmentNoticeBody }
  | { type: "action_rejected"; body: ActionRejectedBody }
  | { type: "belief_debug"; body: BeliefDebugBody }
  | { type: "task_complete"; body: TaskCompleteBody };

export interface HumanAction {
  kind: HumanKind;
  subtask_id: number;
  block_color?: ColorName;
}

export function joinMessage(sessionId?: string, token?: string): string {
  const body: Record<string, string> = {};
  if (sessionId) body.session_id = sessionId;
  if (token) body.rejoin_token = token;
  return JSON.stringify({ type: "join", body });
}

export function actionMessage(action: HumanAction): string {
  const body: Record<string, unknown> = {
    kind: action.kind,
    subtask_id: action.subtask_id,
  };
  if (action.block_color) body.block_color = action.block_color;
  return JSON.stringify({ type: "human_action", body });
}

function isRecord(v: unknown): v is Record<string, unknown> {
  return typeof v === "object" && v !== null && !Array.isArray(v);
}

function isColorOrNull(v: unknown): boolean {
  return v === null || (COLOR_NAMES as string[]).includes(v as string);
}

function isSubtaskView(v: unknown): v is SubtaskView {
  if (!isRecord(v)) return false;
  const states = [
    "initial",
    "placed_correctly",
    "misplaced",
    "assigned_to_robot_correctly",
    "assigned_to_robot_incorrectly",
    "assigned_to_human",
  ];
  return (
    states.includes(v.state as string) &&
    isColorOrNull(v.placed_color) &&
    isColorOrNull(v.assigned_color)
  );
}

function isGraphView(v: unknown): v is GraphView {
  if (!isRecord(v) || !isRecord(v.config) || !isRecord(v.inventories)) return false;
  const cfg = v.config;
  if (typeof cfg.workspaces !== "number" || typeof cfg.spots_per_workspace !== "number")
    return false;
  if (!isRecord(cfg.pattern) || !isRecord(cfg.partially_known)) return false;
  if (!isRecord(v.subtasks)) return false;
  return Object.values(v.subtasks).every(isSubtaskView);
}

export function isSnapshotBody(v: unknown): v is SnapshotBody {
  return (
    isRecord(v) &&
    typeof v.sim_time === "number" &&
    typeof v.complete === "boolean" &&
    (v.light === "red" || v.light === "green") &&
    Array.isArray(v.pending_assignments) &&
    v.pending_assignments.every(
      (p) => isRecord(p) && typeof p.subtask_id === "number" && isColorOrNull(p.color),
    ) &&
    isGraphView(v.graph)
  );
}

export function isActionBody(v: unknown): v is ActionBody {
  return (
    isRecord(v) &&
    typeof v.kind === "string" &&
    typeof v.subtask_id === "number" &&
    isColorOrNull(v.block_color)
  );
}

export function isLegalActionsBody(v: unknown): v is LegalActionsBody {
  return (
    isRecord(v) &&
    typeof v.sim_time === "number" &&
    Array.isArray(v.actions) &&
    v.actions.every(isActionBody)
  );
}

export function parseServerMessage(raw: string): ServerMessage | null {
  let parsed: unknown;
  try {
    parsed = JSON.parse(raw);
  } catch {
    return null;
  }
  if (!isRecord(parsed) || typeof parsed.type !== "string" || !isRecord(parsed.body))
    return null;
  const { type, body } = parsed;
  switch (type) {
    case "join":
    case "snapshot":
    case "legal_actions":
    case "light_state":
    case "robot_action":
    case "assignment_notice":
    case "action_rejected":
    case "belief_debug":
    case "task_complete":
      return { type, body } as unknown as ServerMessage;
    default:
      return null;
  }
}

export function actionKey(a: {
  kind: string;
  subtask_id: number;
  block_color?: ColorName | null;
}): string {
  return `${a.kind}:${a.subtask_id}:${a.block_color ?? ""}`;
}
