/**
 * Hand-drawn canvas charts: top-down / side position traces against the
 * reference, a hidden-state strip chart, and the live probe estimate with
 * the ground-truth line. Pure functions of the buffer contents.
 */

import type { TelemetryBuffer } from "./buffers.js";

const TRACE_COLOR = "#4fc3f7";
const REF_COLOR = "#aaaaaa";
const TRUTH_COLOR = "#ffb74d";
const ESTIMATE_COLOR = "#81c784";

function prepare(canvas: HTMLCanvasElement): CanvasRenderingContext2D {
  const ctx = canvas.getContext("2d")!;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  ctx.strokeStyle = "#333";
  ctx.strokeRect(0, 0, canvas.width, canvas.height);
  return ctx;
}

function drawPolyline(
  ctx: CanvasRenderingContext2D,
  pts: Array<[number, number]>,
  color: string,
  dashed = false,
): void {
  if (pts.length < 2) return;
  ctx.save();
  ctx.strokeStyle = color;
  ctx.setLineDash(dashed ? [4, 3] : []);
  ctx.beginPath();
  ctx.moveTo(pts[0][0], pts[0][1]);
  for (let i = 1; i < pts.length; i++) ctx.lineTo(pts[i][0], pts[i][1]);
  ctx.stroke();
  ctx.restore();
}

/** Symmetric scale holding both traces, with a minimum half-extent. */
function extent(values: number[], minimum = 0.5): number {
  let m = minimum;
  for (const v of values) m = Math.max(m, Math.abs(v));
  return m * 1.1;
}

export function drawPlan(canvas: HTMLCanvasElement, buf: TelemetryBuffer): void {
  const ctx = prepare(canvas);
  const { width: w, height: h } = canvas;
  const pts = buf.trace;
  if (pts.length === 0) return;
  const m = extent(pts.flatMap((p) => [p.x, p.y, p.refX, p.refY]));
  const sx = (v: number) => (v / m) * (w / 2 - 6) + w / 2;
  const sy = (v: number) => h / 2 - (v / m) * (h / 2 - 6);
  drawPolyline(ctx, pts.map((p) => [sx(p.refX), sy(p.refY)]), REF_COLOR, true);
  drawPolyline(ctx, pts.map((p) => [sx(p.x), sy(p.y)]), TRACE_COLOR);
  const last = pts[pts.length - 1];
  ctx.fillStyle = TRACE_COLOR;
  ctx.beginPath();
  ctx.arc(sx(last.x), sy(last.y), 4, 0, 2 * Math.PI);
  ctx.fill();
  ctx.fillStyle = REF_COLOR;
  ctx.fillRect(sx(last.refX) - 3, sy(last.refY) - 3, 6, 6);
  ctx.fillStyle = "#888";
  ctx.fillText(`top-down  ±${m.toFixed(1)} m`, 6, 12);
}

export function drawSide(canvas: HTMLCanvasElement, buf: TelemetryBuffer): void {
  const ctx = prepare(canvas);
  const { width: w, height: h } = canvas;
  const pts = buf.trace;
  if (pts.length === 0) return;
  const m = extent(pts.flatMap((p) => [p.x, p.z, p.refX, p.refZ]));
  const sx = (v: number) => (v / m) * (w / 2 - 6) + w / 2;
  const sy = (v: number) => h / 2 - (v / m) * (h / 2 - 6);
  drawPolyline(ctx, pts.map((p) => [sx(p.refX), sy(p.refZ)]), REF_COLOR, true);
  drawPolyline(ctx, pts.map((p) => [sx(p.x), sy(p.z)]), TRACE_COLOR);
  ctx.fillStyle = "#888";
  ctx.fillText(`side (x-z)  ±${m.toFixed(1)} m`, 6, 12);
}

export function drawHidden(canvas: HTMLCanvasElement, buf: TelemetryBuffer): void {
  const ctx = prepare(canvas);
  const { width: w, height: h } = canvas;
  const rows = buf.hidden;
  if (rows.length === 0) return;
  const n = rows[0].values.length;
  const sx = (i: number) => (i / Math.max(1, rows.length - 1)) * (w - 8) + 4;
  const sy = (v: number) => h / 2 - v * (h / 2 - 4); // gate range (-1, 1)
  for (let k = 0; k < n; k++) {
    const hue = (k * 360) / n;
    drawPolyline(
      ctx,
      rows.map((r, i) => [sx(i), sy(r.values[k])] as [number, number]),
      `hsl(${hue}, 60%, 60%)`,
    );
  }
  ctx.fillStyle = "#888";
  ctx.fillText("hidden state (-1..1)", 6, 12);
}

export function drawProbe(canvas: HTMLCanvasElement, buf: TelemetryBuffer): void {
  const ctx = prepare(canvas);
  const { width: w, height: h } = canvas;
  const rows = buf.probe;
  if (rows.length === 0) return;
  const lo = 1.0;
  const hi = 6.0;
  const sx = (i: number) => (i / Math.max(1, rows.length - 1)) * (w - 8) + 4;
  const sy = (v: number) =>
    h - 4 - ((Math.min(Math.max(v, lo), hi) - lo) / (hi - lo)) * (h - 8);
  const truth = rows[rows.length - 1].truth;
  drawPolyline(ctx, [[4, sy(truth)], [w - 4, sy(truth)]], TRUTH_COLOR, true);
  const est = rows
    .map((r, i) => (r.estimate === null ? null : ([sx(i), sy(r.estimate)] as [number, number])))
    .filter((p): p is [number, number] => p !== null);
  drawPolyline(ctx, est, ESTIMATE_COLOR);
  ctx.fillStyle = "#888";
  ctx.fillText(
    est.length
      ? `probe thrust-to-weight estimate (truth ${truth.toFixed(2)})`
      : `probe estimate unavailable (truth ${truth.toFixed(2)})`,
    6,
    12,
  );
}
