/**
 * Browser bootstrap. Configuration via query parameters:
 *   ?server=ws://127.0.0.1:8765   session address
 *   &rate=30                      display refresh rate (Hz)
 */

import { SessionClient } from "./client.js";
import { CommandPanel } from "./panel.js";
import { SessionView } from "./view.js";
import { drawHidden, drawPlan, drawProbe, drawSide } from "./charts.js";

function canvasById(id: string): HTMLCanvasElement {
  return document.getElementById(id) as HTMLCanvasElement;
}

function boot(): void {
  const params = new URLSearchParams(window.location.search);
  const server = params.get("server") ?? "ws://127.0.0.1:8765";
  const rate = Number(params.get("rate") ?? "30");

  const view = new SessionView();
  const status = document.getElementById("status")!;
  const banner = document.getElementById("banner")!;

  const client = new SessionClient(server, {
    onState: (s, detail) => {
      view.onState(s, detail);
      banner.textContent = s === "rejected" ? view.statusLine() : "";
      banner.style.display = s === "rejected" ? "block" : "none";
    },
    onFrame: (f) => view.onFrame(f),
    onServerError: (e) => view.onServerError(e),
  });
  client.connect();

  new CommandPanel(document.getElementById("panel")!, client, view);

  const plan = canvasById("plan");
  const side = canvasById("side");
  const hidden = canvasById("hidden");
  const probe = canvasById("probe");

  let lastDrawnStep = -1;
  setInterval(() => {
    status.textContent = view.statusLine() +
      (view.lastError ? `  |  server: ${view.lastError}` : "");
    if (view.connection === "rejected") return; // no stale rendering
    const step = view.buffer.lastStep;
    if (step === lastDrawnStep) return; // frames paused: plots freeze
    lastDrawnStep = step;
    drawPlan(plan, view.buffer);
    drawSide(side, view.buffer);
    drawHidden(hidden, view.buffer);
    drawProbe(probe, view.buffer);
  }, 1000 / Math.max(1, rate));
}

window.addEventListener("DOMContentLoaded", boot);
