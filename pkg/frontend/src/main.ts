// Browser entry point: wire the socket client, the reducer and the DOM
// renderer together, and keep the rejoin token in sessionStorage so a
// refreshed page resumes its session instead of opening a new one.

import { renderBoard } from "./board.js";
import { SessionClient } from "./client.js";
import { HumanAction } from "./protocol.js";
import { ViewState, initialState, markSubmitted, reduce, toggleDebug } from "./state.js";

const STORAGE_KEY = "tandem-session";

function serviceUrl(): string {
  const params = new URLSearchParams(location.search);
  const explicit = params.get("ws");
  if (explicit) return explicit;
  const proto = location.protocol === "https:" ? "wss" : "ws";
  const host = params.get("host") ?? "127.0.0.1:8765";
  return `${proto}://${host}/session`;
}

function savedSession(): { sessionId?: string; rejoinToken?: string } {
  try {
    const raw = sessionStorage.getItem(STORAGE_KEY);
    return raw ? JSON.parse(raw) : {};
  } catch {
    return {};
  }
}

function main(): void {
  const root = document.getElementById("app");
  if (!root) throw new Error("missing #app element");

  let state: ViewState = initialState();
  const saved = savedSession();
  const client = new SessionClient({
    url: serviceUrl(),
    sessionId: saved.sessionId,
    rejoinToken: saved.rejoinToken,
  });

  const handlers = {
    submit: (action: HumanAction) => {
      state = markSubmitted(state);
      client.submit(action);
      render();
    },
    toggleDebug: () => {
      state = toggleDebug(state);
      render();
    },
  };

  const render = () => renderBoard(root, state, handlers);

  client.onMessage((msg) => {
    state = reduce(state, msg);
    if (msg.type === "join" && msg.body.ok) {
      sessionStorage.setItem(
        STORAGE_KEY,
        JSON.stringify({
          sessionId: msg.body.session_id,
          rejoinToken: msg.body.rejoin_token,
        }),
      );
    }
    render();
  });

  client.onDisconnect = () => {
    state = { ...state, banner: "connection lost; reload to resume", phase: "closed" };
    render();
  };

  render();
  client.connect().catch(() => {
    state = { ...state, banner: "cannot reach the session service", phase: "closed" };
    render();
  });
}

main();
