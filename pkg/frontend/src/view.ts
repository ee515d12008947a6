/**
 * SessionView: render state derived purely from received frames plus local
 * UI state. No physics is ever computed client-side; when frames stop, the
 * plots freeze exactly as they are.
 */

import { TelemetryBuffer } from "./buffers.js";
import type { ConnectionState } from "./client.js";
import type { TelemetryFrame } from "./protocol.js";

export class SessionView {
  buffer = new TelemetryBuffer();
  latest: TelemetryFrame | null = null;
  connection: ConnectionState = "closed";
  connectionDetail = "";
  lastError = "";
  pendingCommands = 0;
  framesReceived = 0;
  private lastQuadIndex = -1;

  onFrame(frame: TelemetryFrame): void {
    if (frame.status.quadrotor_index !== this.lastQuadIndex) {
      if (this.lastQuadIndex !== -1) this.buffer.clear();
      this.lastQuadIndex = frame.status.quadrotor_index;
    }
    if (this.buffer.push(frame)) {
      this.latest = frame;
      this.framesReceived += 1;
    }
  }

  onState(state: ConnectionState, detail?: string): void {
    this.connection = state;
    this.connectionDetail = detail ?? "";
  }

  onServerError(error: string): void {
    this.lastError = error;
  }

  statusLine(): string {
    if (this.connection === "rejected") {
      return `connection rejected: ${this.connectionDetail}`;
    }
    if (this.connection !== "live") {
      return `${this.connection}${this.connectionDetail ? ` (${this.connectionDetail})` : ""}`;
    }
    const f = this.latest;
    if (!f) return "live, waiting for frames";
    const flags = [
      f.status.active ? "policy active" : "drifting",
      f.status.faulted ? "FAULTED" : null,
      f.status.terminal ? "outside bounds" : null,
    ]
      .filter(Boolean)
      .join(", ");
    return (
      `live | t=${f.t.toFixed(2)}s | quad #${f.status.quadrotor_index}` +
      ` | mass ${f.status.mass.toFixed(3)} kg | ${flags}`
    );
  }
}
