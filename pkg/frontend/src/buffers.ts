/**
 * Rolling telemetry buffers behind the plots. Frames are keyed by their
 * simulation step, so a reconnect resumes cleanly: stale or duplicate steps
 * are dropped and time stays monotone.
 */

import type { TelemetryFrame } from "./protocol.js";

export interface TracePoint {
  step: number;
  t: number;
  x: number;
  y: number;
  z: number;
  refX: number;
  refY: number;
  refZ: number;
}

export class TelemetryBuffer {
  readonly capacity: number;
  trace: TracePoint[] = [];
  hidden: { step: number; values: number[] }[] = [];
  probe: { step: number; estimate: number | null; truth: number }[] = [];
  lastStep = -1;
  dropped = 0;

  constructor(capacity = 1500) {
    this.capacity = capacity;
  }

  push(frame: TelemetryFrame): boolean {
    if (frame.step <= this.lastStep) {
      this.dropped += 1; // duplicate or out-of-order after a reconnect
      return false;
    }
    this.lastStep = frame.step;
    this.trace.push({
      step: frame.step,
      t: frame.t,
      x: frame.state.position[0],
      y: frame.state.position[1],
      z: frame.state.position[2],
      refX: frame.ref.position[0],
      refY: frame.ref.position[1],
      refZ: frame.ref.position[2],
    });
    this.hidden.push({ step: frame.step, values: frame.hidden.slice() });
    this.probe.push({
      step: frame.step,
      estimate: frame.t2w_estimate,
      truth: frame.t2w_true,
    });
    if (this.trace.length > this.capacity) {
      this.trace.splice(0, this.trace.length - this.capacity);
      this.hidden.splice(0, this.hidden.length - this.capacity);
      this.probe.splice(0, this.probe.length - this.capacity);
    }
    return true;
  }

  /** Vehicle swap or explicit reset: history no longer comparable. */
  clear(): void {
    this.trace = [];
    this.hidden = [];
    this.probe = [];
    // lastStep is kept: the server's step counter keeps increasing
  }

  isMonotone(): boolean {
    for (let i = 1; i < this.trace.length; i++) {
      if (this.trace[i].step <= this.trace[i - 1].step) return false;
    }
    return true;
  }
}
