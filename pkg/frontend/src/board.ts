// DOM rendering: the whole console is re-rendered from ViewState on every
// message. At 20 spots a full rebuild is cheaper than bookkeeping, and it
// keeps render a pure function of the latest state.

import {
  ActionBody,
  ColorName,
  HumanAction,
  HumanKind,
  actionKey,
} from "./protocol.js";
import { ViewState, enabledActionKeys, spotActions } from "./state.js";

// Okabe-Ito palette: distinguishable under the common color-vision
// deficiencies; every block also carries its name as a text label.
export const COLOR_HEX: Record<ColorName, string> = {
  green: "#009e73",
  pink: "#cc79a7",
  orange: "#e69f00",
  blue: "#0072b2",
};

const KIND_LABELS: Record<HumanKind, string> = {
  H1: "place",
  H2: "delegate",
  H3: "take back",
  H4: "do assigned",
  H5: "recall",
  H6: "reject",
};

export interface BoardHandlers {
  submit: (action: HumanAction) => void;
  toggleDebug: () => void;
}

function el<K extends keyof HTMLElementTagNameMap>(
  doc: Document,
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = doc.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function colorChip(doc: Document, color: ColorName): HTMLElement {
  const chip = el(doc, "span", "chip", color);
  chip.style.backgroundColor = COLOR_HEX[color];
  chip.dataset.color = color;
  return chip;
}

function patternReference(doc: Document, state: ViewState, sid: number): HTMLElement {
  const ref = el(doc, "div", "target");
  const scenario = state.scenario!;
  const required = scenario.pattern[String(sid)];
  const decoy = scenario.partially_known[String(sid)];
  if (!required) return ref;
  if (decoy) {
    // the reference sheet shows two candidates for this spot; sort them
    // so the display order never betrays which one is required
    const pair = [required, decoy].sort() as ColorName[];
    ref.appendChild(colorChip(doc, pair[0]!));
    ref.appendChild(el(doc, "span", "or", "or"));
    ref.appendChild(colorChip(doc, pair[1]!));
  } else {
    ref.appendChild(colorChip(doc, required));
  }
  return ref;
}

function actionButton(
  doc: Document,
  action: ActionBody,
  enabled: Set<string>,
  handlers: BoardHandlers,
): HTMLButtonElement {
  const kind = action.kind as HumanKind;
  const button = el(doc, "button", `act act-${action.kind.toLowerCase()}`);
  button.dataset.kind = action.kind;
  button.dataset.spot = String(action.subtask_id);
  const label = KIND_LABELS[kind] ?? action.kind;
  if (action.block_color) {
    button.dataset.color = action.block_color;
    button.appendChild(colorChip(doc, action.block_color));
    button.appendChild(el(doc, "span", undefined, label));
  } else {
    button.textContent = label;
  }
  button.disabled = !enabled.has(actionKey(action));
  button.addEventListener("click", () => {
    handlers.submit({
      kind,
      subtask_id: action.subtask_id,
      block_color: action.block_color ?? undefined,
    });
  });
  return button;
}

function spotCell(
  doc: Document,
  state: ViewState,
  sid: number,
  enabled: Set<string>,
  handlers: BoardHandlers,
): HTMLElement {
  const view = state.subtasks[String(sid)];
  const cell = el(doc, "div", `spot state-${view ? view.state : "unknown"}`);
  cell.dataset.spot = String(sid);
  const head = el(doc, "div", "spot-head");
  head.appendChild(el(doc, "span", "spot-num", String(sid)));
  head.appendChild(patternReference(doc, state, sid));
  cell.appendChild(head);

  if (view?.placed_color) {
    const block = el(doc, "div", "block", view.placed_color);
    block.style.backgroundColor = COLOR_HEX[view.placed_color];
    cell.appendChild(block);
  }
  if (view?.state === "misplaced") {
    cell.appendChild(el(doc, "div", "flag flag-misplaced", "wrong color"));
  }
  if (view?.state === "assigned_to_human") {
    const badge = el(doc, "div", "flag flag-assigned", "assigned to you");
    if (view.assigned_color) badge.appendChild(colorChip(doc, view.assigned_color));
    cell.appendChild(badge);
  }
  if (
    view?.state === "assigned_to_robot_correctly" ||
    view?.state === "assigned_to_robot_incorrectly"
  ) {
    cell.appendChild(el(doc, "div", "flag flag-delegated", "robot's task"));
  }
  if (state.robotBusy && state.robotBusy.subtask_id === sid) {
    cell.appendChild(el(doc, "div", "flag flag-busy", "robot working"));
  }

  const controls = el(doc, "div", "controls");
  for (const action of spotActions(state, sid)) {
    controls.appendChild(actionButton(doc, action, enabled, handlers));
  }
  cell.appendChild(controls);
  return cell;
}

function inventoryPanel(doc: Document, state: ViewState): HTMLElement {
  const panel = el(doc, "div", "inventory");
  panel.appendChild(el(doc, "h3", undefined, "blocks"));
  for (const agent of ["human", "robot"]) {
    const row = el(doc, "div", `inv-row inv-${agent}`);
    row.appendChild(el(doc, "span", "inv-agent", agent));
    for (const [key, count] of Object.entries(state.inventories).sort()) {
      const [owner, color] = key.split(".");
      if (owner !== agent) continue;
      const item = el(doc, "span", "inv-item");
      item.appendChild(colorChip(doc, color as ColorName));
      item.appendChild(el(doc, "span", "inv-count", String(count)));
      row.appendChild(item);
    }
    panel.appendChild(row);
  }
  return panel;
}

function beliefPlot(doc: Document, state: ViewState): HTMLElement {
  const wrap = el(doc, "div", "debug-panel");
  wrap.appendChild(el(doc, "h3", undefined, "estimates"));
  const svgNS = "http://www.w3.org/2000/svg";
  const svg = doc.createElementNS(svgNS, "svg");
  svg.setAttribute("viewBox", "0 0 200 100");
  svg.setAttribute("class", "belief-plot");
  const samples = state.beliefs;
  const maxT = Math.max(state.simTime, samples.length ? samples[samples.length - 1]!.sim_time : 1, 1);
  for (const [field, cls] of [
    ["p_f", "line-pf"],
    ["p_e", "line-pe"],
  ] as const) {
    const points = samples
      .map((s) => `${(s.sim_time / maxT) * 200},${100 - s[field] * 100}`)
      .join(" ");
    const line = doc.createElementNS(svgNS, "polyline");
    line.setAttribute("points", points);
    line.setAttribute("class", cls);
    line.setAttribute("fill", "none");
    svg.appendChild(line);
  }
  wrap.appendChild(svg as unknown as Node);
  const last = samples[samples.length - 1];
  wrap.appendChild(
    el(
      doc,
      "div",
      "belief-readout",
      last
        ? `follow ${last.p_f.toFixed(2)}  error ${last.p_e.toFixed(2)}`
        : "no samples yet",
    ),
  );
  return wrap;
}

export function renderBoard(
  root: HTMLElement,
  state: ViewState,
  handlers: BoardHandlers,
): void {
  const doc = root.ownerDocument;
  root.innerHTML = "";

  const header = el(doc, "header", "topbar");
  header.appendChild(
    el(doc, "span", "session", state.sessionId ? `session ${state.sessionId}` : "connecting"),
  );
  header.appendChild(el(doc, "span", "clock", `t = ${state.simTime.toFixed(0)} s`));
  const light = el(doc, "span", `light light-${state.light}`, state.light);
  header.appendChild(light);
  const debugToggle = el(doc, "button", "debug-toggle", "estimates");
  debugToggle.addEventListener("click", handlers.toggleDebug);
  header.appendChild(debugToggle);
  root.appendChild(header);

  if (state.banner) {
    root.appendChild(el(doc, "div", "banner", state.banner));
  }
  if (state.toast) {
    root.appendChild(el(doc, "div", "toast", state.toast));
  }
  if (state.phase === "rejected") {
    root.appendChild(el(doc, "div", "banner", `cannot join: ${state.joinError}`));
    return;
  }
  if (!state.scenario) return;

  const enabled = enabledActionKeys(state);
  const board = el(doc, "div", "board");
  const { workspaces, spots_per_workspace: perRow } = state.scenario;
  for (let w = 1; w <= workspaces; w++) {
    const section = el(doc, "section", "workspace");
    section.appendChild(el(doc, "h3", undefined, `workspace ${w}`));
    const row = el(doc, "div", "spots");
    for (let k = 1; k <= perRow; k++) {
      const sid = (w - 1) * perRow + k;
      row.appendChild(spotCell(doc, state, sid, enabled, handlers));
    }
    section.appendChild(row);
    board.appendChild(section);
  }
  root.appendChild(board);
  root.appendChild(inventoryPanel(doc, state));
  if (state.showDebug) {
    root.appendChild(beliefPlot(doc, state));
  }
  if (state.phase === "complete") {
    const overlay = el(doc, "div", "complete-overlay");
    overlay.appendChild(el(doc, "h2", undefined, "pattern complete"));
    if (state.makespan !== null) {
      overlay.appendChild(
        el(doc, "div", undefined, `finished at t = ${state.makespan.toFixed(0)} s`),
      );
    }
    root.appendChild(overlay);
  }
}
