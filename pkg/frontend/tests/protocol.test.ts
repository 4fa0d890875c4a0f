import { describe, expect, it } from "vitest";

import {
  actionKey,
  actionMessage,
  isActionBody,
  isLegalActionsBody,
  isSnapshotBody,
  joinMessage,
  parseServerMessage,
} from "../src/protocol.js";
import { act, makeGraph, makeScenario, snapshot } from "./fixtures.js";

describe("outbound builders", () => {
  it("joinMessage without credentials asks for a fresh session", () => {
    expect(JSON.parse(joinMessage())).toEqual({ type: "join", body: {} });
  });

  it("joinMessage carries rejoin credentials when given", () => {
    expect(JSON.parse(joinMessage("12", "tok"))).toEqual({
      type: "join",
      body: { session_id: "12", rejoin_token: "tok" },
    });
  });

  it("actionMessage includes the color only when one is chosen", () => {
    expect(JSON.parse(actionMessage({ kind: "H1", subtask_id: 3, block_color: "pink" })))
      .toEqual({
        type: "human_action",
        body: { kind: "H1", subtask_id: 3, block_color: "pink" },
      });
    expect(JSON.parse(actionMessage({ kind: "H2", subtask_id: 6 }))).toEqual({
      type: "human_action",
      body: { kind: "H2", subtask_id: 6 },
    });
  });
});

describe("parseServerMessage", () => {
  it("accepts every known envelope type", () => {
    for (const type of [
      "join",
      "snapshot",
      "legal_actions",
      "light_state",
      "robot_action",
      "assignment_notice",
      "action_rejected",
      "belief_debug",
      "task_complete",
    ]) {
      const msg = parseServerMessage(JSON.stringify({ type, body: { sim_time: 1 } }));
      expect(msg?.type).toBe(type);
    }
  });

  it("rejects garbage, unknown types and malformed envelopes", () => {
    expect(parseServerMessage("not json")).toBeNull();
    expect(parseServerMessage('"just a string"')).toBeNull();
    expect(parseServerMessage(JSON.stringify({ type: "mystery", body: {} }))).toBeNull();
    expect(parseServerMessage(JSON.stringify({ type: "snapshot" }))).toBeNull();
    expect(parseServerMessage(JSON.stringify({ type: "snapshot", body: [] }))).toBeNull();
    expect(parseServerMessage(JSON.stringify({ body: {} }))).toBeNull();
  });

  it("keeps the body verbatim", () => {
    const raw = JSON.stringify({
      type: "belief_debug",
      body: { sim_time: 4.5, p_f: 0.7, p_e: 0.1 },
    });
    const msg = parseServerMessage(raw);
    expect(msg).toEqual({
      type: "belief_debug",
      body: { sim_time: 4.5, p_f: 0.7, p_e: 0.1 },
    });
  });
});

describe("body guards", () => {
  const goodSnapshot = () => snapshot(makeGraph(makeScenario())).body;

  it("accepts a well-formed snapshot", () => {
    expect(isSnapshotBody(goodSnapshot())).toBe(true);
  });

  it("rejects a snapshot with a bad light or clock", () => {
    expect(isSnapshotBody({ ...goodSnapshot(), light: "amber" })).toBe(false);
    expect(isSnapshotBody({ ...goodSnapshot(), sim_time: "soon" })).toBe(false);
  });

  it("rejects a snapshot whose graph is damaged", () => {
    const body = goodSnapshot() as { graph: ReturnType<typeof makeGraph> };
    const brokenState = {
      ...body,
      graph: {
        ...body.graph,
        subtasks: { ...body.graph.subtasks, "2": { state: "floating" } },
      },
    };
    expect(isSnapshotBody(brokenState)).toBe(false);
    const noConfig = { ...body, graph: { ...body.graph, config: 7 } };
    expect(isSnapshotBody(noConfig)).toBe(false);
  });

  it("rejects pending assignments without spot ids", () => {
    expect(
      isSnapshotBody({ ...goodSnapshot(), pending_assignments: [{ color: "pink" }] }),
    ).toBe(false);
  });

  it("validates action bodies and legal-action sets", () => {
    expect(isActionBody(act("H1", 1, "green"))).toBe(true);
    expect(isActionBody(act("H2", 9))).toBe(true);
    expect(isActionBody({ kind: "H1", subtask_id: "one", block_color: null })).toBe(false);
    expect(isActionBody({ kind: "H1", subtask_id: 1, block_color: "teal" })).toBe(false);
    expect(isLegalActionsBody({ sim_time: 0, actions: [act("H1", 1, "green")] })).toBe(true);
    expect(isLegalActionsBody({ sim_time: 0, actions: [{ kind: "H1" }] })).toBe(false);
    expect(isLegalActionsBody({ actions: [] })).toBe(false);
  });
});

describe("actionKey", () => {
  it("distinguishes kind, spot and color", () => {
    expect(actionKey({ kind: "H1", subtask_id: 1, block_color: "green" }))
      .toBe("H1:1:green");
    expect(actionKey({ kind: "H1", subtask_id: 1, block_color: "pink" }))
      .toBe("H1:1:pink");
    expect(actionKey({ kind: "H2", subtask_id: 14 })).toBe("H2:14:");
    expect(actionKey({ kind: "H2", subtask_id: 14, block_color: null })).toBe("H2:14:");
  });
});
