/**
 * Command panel: buttons and sliders mapped to session commands. Controls
 * disable while a command is awaiting acknowledgement and any server error
 * is surfaced verbatim in the status area.
 */

import type { SessionClient } from "./client.js";
import type { SessionCommand } from "./protocol.js";
import type { SessionView } from "./view.js";

export class CommandPanel {
  private root: HTMLElement;
  private client: SessionClient;
  private view: SessionView;
  private feedback: HTMLElement;
  private buttons: HTMLButtonElement[] = [];

  constructor(root: HTMLElement, client: SessionClient, view: SessionView) {
    this.root = root;
    this.client = client;
    this.view = view;
    this.feedback = document.createElement("div");
    this.feedback.className = "feedback";
    this.build();
  }

  private async issue(cmd: SessionCommand): Promise<void> {
    this.setEnabled(false);
    this.view.pendingCommands += 1;
    try {
      const ack = await this.client.command(cmd);
      this.feedback.textContent = ack.ok
        ? `${ack.name}: ok`
        : `${ack.name}: ${ack.error ?? "failed"}`;
      this.feedback.className = ack.ok ? "feedback ok" : "feedback error";
    } finally {
      this.view.pendingCommands -= 1;
      this.setEnabled(true);
    }
  }

  private setEnabled(on: boolean): void {
    for (const b of this.buttons) b.disabled = !on;
  }

  private button(label: string, make: () => SessionCommand): HTMLButtonElement {
    const b = document.createElement("button");
    b.textContent = label;
    b.onclick = () => void this.issue(make());
    this.buttons.push(b);
    return b;
  }

  private numberInput(value: number, step: number, width = 64): HTMLInputElement {
    const input = document.createElement("input");
    input.type = "number";
    input.value = String(value);
    input.step = String(step);
    input.style.width = `${width}px`;
    return input;
  }

  private row(label: string, ...nodes: (HTMLElement | string)[]): void {
    const div = document.createElement("div");
    div.className = "row";
    const span = document.createElement("span");
    span.className = "label";
    span.textContent = label;
    div.appendChild(span);
    for (const n of nodes) {
      div.appendChild(typeof n === "string" ? document.createTextNode(n) : n);
    }
    this.root.appendChild(div);
  }

  private build(): void {
    this.row(
      "session",
      this.button("activate", () => ({ name: "activate" })),
      this.button("deactivate", () => ({ name: "deactivate" })),
      this.button("reset hidden", () => ({ name: "reset_hidden" })),
    );

    const dvx = this.numberInput(1.0, 0.1);
    const dvz = this.numberInput(0.0, 0.1);
    this.row(
      "poke [m/s]",
      "x:", dvx, "z:", dvz,
      this.button("poke", () => ({
        name: "poke",
        dv: [Number(dvx.value), 0, Number(dvz.value)],
      })),
    );

    const dm = this.numberInput(0.1, 0.05);
    this.row(
      "payload [kg]",
      dm,
      this.button("add payload", () => ({ name: "payload", dm: Number(dm.value) })),
    );

    const motor = this.numberInput(0, 1, 44);
    const scale = this.numberInput(0.8, 0.05);
    this.row(
      "prop swap",
      "motor:", motor, "scale:", scale,
      this.button("swap", () => ({
        name: "prop_swap",
        motor: Number(motor.value),
        scale: Number(scale.value),
      })),
    );

    const quad = this.numberInput(0, 1, 44);
    this.row(
      "vehicle",
      quad,
      this.button("select", () => ({
        name: "select_quadrotor",
        index: Number(quad.value),
      })),
    );

    const period = this.numberInput(10, 0.5);
    this.row(
      "reference",
      this.button("hover", () => ({ name: "set_reference", kind: "null" })),
      "period:", period,
      this.button("figure-eight", () => ({
        name: "set_reference",
        kind: "fig8",
        period: Number(period.value),
      })),
    );

    const tx = this.numberInput(0, 0.1);
    const ty = this.numberInput(0, 0.1);
    const tz = this.numberInput(0, 0.1);
    this.row(
      "target [m]",
      tx, ty, tz,
      this.button("go", () => ({
        name: "set_target",
        p: [Number(tx.value), Number(ty.value), Number(tz.value)],
      })),
    );

    this.root.appendChild(this.feedback);
  }
}
