// Session client: one WebSocket, one ordered message stream, and a small
// outbound queue so user input issued while an acknowledgement is pending
// is sent afterwards instead of being dropped.
//
// Attach listeners before calling connect(); the server starts streaming
// board state immediately after the join acknowledgement.

import {
  HumanAction,
  JoinNackBody,
  JoinOkBody,
  ServerMessage,
  actionMessage,
  joinMessage,
  parseServerMessage,
} from "./protocol.js";

export interface SocketLike {
  send(data: string): void;
  close(): void;
  onopen: ((ev?: unknown) => void) | null;
  onmessage: ((ev: { data: unknown }) => void) | null;
  onclose: ((ev?: unknown) => void) | null;
  onerror: ((ev?: unknown) => void) | null;
}

export type SocketFactory = (url: string) => SocketLike;

export interface ClientOptions {
  url: string;
  sessionId?: string;
  rejoinToken?: string;
  socketFactory?: SocketFactory;
}

export type MessageListener = (msg: ServerMessage) => void;

const browserFactory: SocketFactory = (url) =>
  new WebSocket(url) as unknown as SocketLike;

export class SessionClient {
  private ws: SocketLike | null = null;
  private listeners: MessageListener[] = [];
  private queue: HumanAction[] = [];
  private awaiting = false;
  private closedByUs = false;
  readonly options: ClientOptions;
  onDisconnect: (() => void) | null = null;

  constructor(options: ClientOptions) {
    this.options = options;
  }

  onMessage(listener: MessageListener): void {
    this.listeners.push(listener);
  }

  connect(): Promise<JoinOkBody | JoinNackBody> {
    const factory = this.options.socketFactory ?? browserFactory;
    const ws = factory(this.options.url);
    this.ws = ws;
    return new Promise((resolve, reject) => {
      let joined = false;
      ws.onopen = () => {
        ws.send(joinMessage(this.options.sessionId, this.options.rejoinToken));
      };
      ws.onerror = (ev) => {
        if (!joined) reject(ev instanceof Error ? ev : new Error("socket error"));
      };
      ws.onclose = () => {
        if (!joined) reject(new Error("socket closed before join"));
        if (!this.closedByUs) this.onDisconnect?.();
      };
      ws.onmessage = (ev) => {
        const msg = parseServerMessage(String(ev.data));
        if (!msg) return;
        if (msg.type === "join" && !joined) {
          joined = true;
          resolve(msg.body);
        }
        this.dispatch(msg);
      };
    });
  }

  private dispatch(msg: ServerMessage): void {
    // belief_debug closes an accepted submission, action_rejected a
    // refused one; either way the next queued action may go out
    if (msg.type === "belief_debug" || msg.type === "action_rejected") {
      this.awaiting = false;
    }
    for (const listener of this.listeners) listener(msg);
    if (!this.awaiting) this.flush();
  }

  private flush(): void {
    const next = this.queue.shift();
    if (next && this.ws) {
      this.awaiting = true;
      this.ws.send(actionMessage(next));
    }
  }

  /** Send now, or queue when a prior action is still unacknowledged. */
  submit(action: HumanAction): void {
    if (!this.ws) throw new Error("not connected");
    if (this.awaiting) {
      this.queue.push(action);
      return;
    }
    this.awaiting = true;
    this.ws.send(actionMessage(action));
  }

  get pendingCount(): number {
    return this.queue.length + (this.awaiting ? 1 : 0);
  }

  close(): void {
    this.closedByUs = true;
    this.ws?.close();
  }
}
