/**
 * Session client: WebSocket + handshake + reconnect with backoff + command
 * acknowledgement tracking. The client never computes physics; it only
 * relays frames to the view and commands to the server.
 */

import {
  AckMessage,
  checkHello,
  encodeCommand,
  encodeHello,
  HelloMessage,
  LineDecoder,
  parseServerMessage,
  SessionCommand,
  TelemetryFrame,
} from "./protocol.js";

export type ConnectionState =
  | "connecting"
  | "handshaking"
  | "live"
  | "rejected"
  | "closed";

export interface ClientEvents {
  onState?: (state: ConnectionState, detail?: string) => void;
  onHello?: (hello: HelloMessage) => void;
  onFrame?: (frame: TelemetryFrame) => void;
  onAck?: (ack: AckMessage) => void;
  onServerError?: (error: string) => void;
}

export interface WebSocketLike {
  send(data: string): void;
  close(): void;
  onopen: ((ev?: unknown) => void) | null;
  onmessage: ((ev: { data: unknown }) => void) | null;
  onclose: ((ev?: unknown) => void) | null;
  onerror: ((ev?: unknown) => void) | null;
}

export type SocketFactory = (url: string) => WebSocketLike;

const ACK_TIMEOUT_MS = 3000;
const BACKOFF_START_MS = 500;
const BACKOFF_MAX_MS = 8000;

interface PendingCommand {
  resolve: (ack: AckMessage) => void;
  timer: ReturnType<typeof setTimeout>;
}

export class SessionClient {
  readonly url: string;
  private events: ClientEvents;
  private makeSocket: SocketFactory;
  private ws: WebSocketLike | null = null;
  private decoder = new LineDecoder();
  private pending = new Map<string, PendingCommand>();
  private nextId = 1;
  private backoff = BACKOFF_START_MS;
  private wantReconnect = true;
  private reconnectTimer: ReturnType<typeof setTimeout> | null = null;
  state: ConnectionState = "closed";
  hello: HelloMessage | null = null;

  constructor(url: string, events: ClientEvents, makeSocket?: SocketFactory) {
    this.url = url;
    this.events = events;
    this.makeSocket =
      makeSocket ?? ((u) => new WebSocket(u) as unknown as WebSocketLike);
  }

  connect(): void {
    this.wantReconnect = true;
    this.open();
  }

  close(): void {
    this.wantReconnect = false;
    if (this.reconnectTimer) clearTimeout(this.reconnectTimer);
    this.ws?.close();
    this.setState("closed");
  }

  private setState(s: ConnectionState, detail?: string): void {
    this.state = s;
    this.events.onState?.(s, detail);
  }

  private open(): void {
    this.setState("connecting");
    this.decoder = new LineDecoder();
    const ws = this.makeSocket(this.url);
    this.ws = ws;
    ws.onopen = () => this.setState("handshaking");
    ws.onmessage = (ev) => this.onData(String(ev.data));
    ws.onerror = () => undefined;
    ws.onclose = () => {
      for (const [, p] of this.pending) clearTimeout(p.timer);
      this.pending.clear();
      if (this.state === "rejected" || !this.wantReconnect) {
        if (this.state !== "rejected") this.setState("closed");
        return;
      }
      this.setState("closed", "connection lost");
      this.scheduleReconnect();
    };
  }

  private scheduleReconnect(): void {
    if (!this.wantReconnect) return;
    const delay = this.backoff;
    this.backoff = Math.min(this.backoff * 2, BACKOFF_MAX_MS);
    this.reconnectTimer = setTimeout(() => this.open(), delay);
  }

  private onData(chunk: string): void {
    for (const line of this.decoder.push(chunk)) {
      let msg;
      try {
        msg = parseServerMessage(line);
      } catch (err) {
        this.events.onServerError?.(String(err));
        continue;
      }
      this.dispatch(msg);
    }
  }

  private dispatch(msg: ReturnType<typeof parseServerMessage>): void {
    if (this.state === "handshaking") {
      const problem = checkHello(msg);
      if (problem !== null) {
        // explicit rejection: never render from a mismatched stream
        this.setState("rejected", problem);
        this.wantReconnect = false;
        this.ws?.close();
        return;
      }
      this.hello = msg as HelloMessage;
      this.ws?.send(encodeHello());
      this.backoff = BACKOFF_START_MS;
      this.setState("live");
      this.events.onHello?.(this.hello);
      return;
    }
    switch (msg.type) {
      case "frame":
        this.events.onFrame?.(msg);
        break;
      case "ack": {
        this.events.onAck?.(msg);
        if (msg.id && this.pending.has(msg.id)) {
          const p = this.pending.get(msg.id)!;
          this.pending.delete(msg.id);
          clearTimeout(p.timer);
          p.resolve(msg);
        }
        break;
      }
      case "error":
        this.events.onServerError?.(msg.error);
        break;
      case "hello":
        break; // late duplicate, ignore
    }
  }

  /** Send a command; resolves with the ack or a synthetic timeout failure. */
  command(cmd: SessionCommand): Promise<AckMessage> {
    if (this.state !== "live" || !this.ws) {
      return Promise.resolve({
        type: "ack",
        name: cmd.name,
        ok: false,
        error: "not connected",
      });
    }
    const id = `c${this.nextId++}`;
    const ws = this.ws;
    return new Promise((resolve) => {
      const timer = setTimeout(() => {
        this.pending.delete(id);
        resolve({ type: "ack", name: cmd.name, ok: false, error: "ack timeout" });
      }, ACK_TIMEOUT_MS);
      this.pending.set(id, { resolve, timer });
      ws.send(encodeCommand(cmd, id));
    });
  }
}
