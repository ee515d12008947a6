/**
 * Wire protocol for the live session: newline-delimited JSON over a
 * WebSocket. Mirrors docs/telemetry_schema.md (schema version 1).
 */

export const SCHEMA_VERSION = 1;

export interface HelloMessage {
  type: "hello";
  schema_version: number;
  fleet_size: number;
  hidden_dim: number;
  dt: number;
  frame_decimation: number;
}

export interface VehicleState {
  position: number[];
  orientation: number[];
  linear_velocity: number[];
  angular_velocity: number[];
  prev_action: number[];
  motor_speeds: number[];
}

export interface TelemetryFrame {
  type: "frame";
  schema_version: number;
  step: number;
  t: number;
  state: VehicleState;
  ref: { position: number[]; velocity: number[] };
  action: number[];
  hidden: number[];
  t2w_estimate: number | null;
  t2w_true: number;
  status: {
    active: boolean;
    faulted: boolean;
    terminal: boolean;
    quadrotor_index: number;
    mass: number;
    motor_scale: number[];
  };
}

export interface AckMessage {
  type: "ack";
  name: string;
  ok: boolean;
  error?: string;
  id?: string;
}

export interface ErrorMessage {
  type: "error";
  error: string;
}

export type ServerMessage = HelloMessage | TelemetryFrame | AckMessage | ErrorMessage;

export type SessionCommand =
  | { name: "activate" }
  | { name: "deactivate" }
  | { name: "reset_hidden" }
  | { name: "set_target"; p: number[] }
  | { name: "poke"; dv: number[] }
  | { name: "payload"; dm: number }
  | { name: "prop_swap"; motor: number; scale: number }
  | { name: "select_quadrotor"; index: number }
  | { name: "set_reference"; kind: "null" }
  | { name: "set_reference"; kind: "fig8"; period: number };

/** Incremental splitter for newline-delimited JSON arriving in chunks. */
export class LineDecoder {
  private tail = "";

  push(chunk: string): string[] {
    const data = this.tail + chunk;
    const parts = data.split("\n");
    this.tail = parts.pop() ?? "";
    return parts.filter((p) => p.trim().length > 0);
  }
}

export function parseServerMessage(line: string): ServerMessage {
  let obj: unknown;
  try {
    obj = JSON.parse(line);
  } catch {
    throw new Error(`malformed server message: ${line.slice(0, 80)}`);
  }
  const msg = obj as { type?: string };
  if (
    msg.type !== "hello" &&
    msg.type !== "frame" &&
    msg.type !== "ack" &&
    msg.type !== "error"
  ) {
    throw new Error(`unknown server message type: ${String(msg.type)}`);
  }
  return obj as ServerMessage;
}

export function encodeHello(): string {
  return JSON.stringify({ type: "hello", schema_version: SCHEMA_VERSION }) + "\n";
}

export function encodeCommand(cmd: SessionCommand, id: string): string {
  return JSON.stringify({ type: "command", id, ...cmd }) + "\n";
}

/** Returns an error string when the server hello is unusable, else null. */
export function checkHello(msg: ServerMessage): string | null {
  if (msg.type !== "hello") {
    return `expected hello, got ${msg.type}`;
  }
  if (msg.schema_version !== SCHEMA_VERSION) {
    return `schema version mismatch: server ${msg.schema_version}, client ${SCHEMA_VERSION}`;
  }
  return null;
}
