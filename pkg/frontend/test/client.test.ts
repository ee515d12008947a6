import { describe, expect, it, vi } from "vitest";
import { SessionClient, WebSocketLike } from "../src/client.js";
import { SCHEMA_VERSION } from "../src/protocol.js";

/** Scriptable fake socket: tests drive both ends synchronously. */
class FakeSocket implements WebSocketLike {
  sent: string[] = [];
  closed = false;
  onopen: ((ev?: unknown) => void) | null = null;
  onmessage: ((ev: { data: unknown }) => void) | null = null;
  onclose: ((ev?: unknown) => void) | null = null;
  onerror: ((ev?: unknown) => void) | null = null;

  send(data: string): void {
    this.sent.push(data);
  }

  close(): void {
    if (!this.closed) {
      this.closed = true;
      this.onclose?.();
    }
  }

  serverSends(obj: unknown): void {
    this.onmessage?.({ data: JSON.stringify(obj) + "\n" });
  }
}

function serverHello(version = SCHEMA_VERSION) {
  return {
    type: "hello",
    schema_version: version,
    fleet_size: 2,
    hidden_dim: 16,
    dt: 0.01,
    frame_decimation: 2,
  };
}

function liveClient() {
  const sockets: FakeSocket[] = [];
  const states: string[] = [];
  const frames: unknown[] = [];
  const client = new SessionClient(
    "ws://test",
    {
      onState: (s) => states.push(s),
      onFrame: (f) => frames.push(f),
    },
    () => {
      const s = new FakeSocket();
      sockets.push(s);
      return s;
    },
  );
  client.connect();
  const ws = sockets[sockets.length - 1];
  ws.onopen?.();
  return { client, ws, sockets, states, frames };
}

describe("handshake", () => {
  it("completes and replies with the client version", () => {
    const { client, ws, states } = liveClient();
    ws.serverSends(serverHello());
    expect(client.state).toBe("live");
    expect(states).toContain("handshaking");
    expect(JSON.parse(ws.sent[0]).schema_version).toBe(SCHEMA_VERSION);
  });

  it("rejects a mismatched version and does not reconnect", () => {
    const { client, ws, sockets } = liveClient();
    ws.serverSends(serverHello(99));
    expect(client.state).toBe("rejected");
    expect(ws.closed).toBe(true);
    expect(sockets.length).toBe(1); // no reconnect attempts after rejection
  });

  it("delivers no frames before the handshake completes", () => {
    const { ws, frames } = liveClient();
    ws.serverSends({ type: "frame", step: 1 });
    // a frame instead of hello is a protocol violation: rejected, not rendered
    expect(frames.length).toBe(0);
  });
});

describe("frames and acks", () => {
  it("routes frames to the handler", () => {
    const { ws, frames } = liveClient();
    ws.serverSends(serverHello());
    ws.serverSends({ type: "frame", step: 1, t: 0.01 });
    ws.serverSends({ type: "frame", step: 2, t: 0.02 });
    expect(frames.length).toBe(2);
  });

  it("resolves commands with their ack by id", async () => {
    const { client, ws } = liveClient();
    ws.serverSends(serverHello());
    const pending = client.command({ name: "poke", dv: [1, 0, 0] });
    const sent = JSON.parse(ws.sent[1]);
    expect(sent.name).toBe("poke");
    ws.serverSends({ type: "ack", name: "poke", ok: true, id: sent.id });
    const ack = await pending;
    expect(ack.ok).toBe(true);
  });

  it("times out unacknowledged commands", async () => {
    vi.useFakeTimers();
    try {
      const { client, ws } = liveClient();
      ws.serverSends(serverHello());
      const pending = client.command({ name: "activate" });
      vi.advanceTimersByTime(4000);
      const ack = await pending;
      expect(ack.ok).toBe(false);
      expect(ack.error).toMatch(/timeout/);
    } finally {
      vi.useRealTimers();
    }
  });

  it("commands fail fast when not connected", async () => {
    const { client } = liveClient();
    const ack = await client.command({ name: "activate" });
    expect(ack.ok).toBe(false);
    expect(ack.error).toMatch(/not connected/);
  });
});

describe("reconnect", () => {
  it("reopens with backoff after a drop and completes a new handshake", () => {
    vi.useFakeTimers();
    try {
      const { client, ws, sockets } = liveClient();
      ws.serverSends(serverHello());
      expect(client.state).toBe("live");
      ws.close(); // connection drops
      expect(client.state).toBe("closed");
      vi.advanceTimersByTime(600);
      expect(sockets.length).toBe(2);
      const ws2 = sockets[1];
      ws2.onopen?.();
      ws2.serverSends(serverHello());
      expect(client.state).toBe("live");
    } finally {
      vi.useRealTimers();
    }
  });

  it("stops reconnecting after close()", () => {
    vi.useFakeTimers();
    try {
      const { client, ws, sockets } = liveClient();
      ws.serverSends(serverHello());
      client.close();
      vi.advanceTimersByTime(60_000);
      expect(sockets.length).toBe(1);
    } finally {
      vi.useRealTimers();
    }
  });
});
