"""Live telemetry/command session over a WebSocket.

One asyncio simulation loop owns all mutable session state; network handlers
only exchange messages with it through queues (commands in, frames out), so
there is no concurrent mutation of the environment. Messages are
newline-terminated JSON objects; see docs/telemetry_schema.md for the
versioned schema and the handshake.

With pacing disabled and no commands, the served trajectory is bit-identical
to analysis.simulate_policy on the same vehicle: the loop calls the same
observe / policy / integrate_step sequence in the same order.
"""

from __future__ import annotations

import asyncio
import json
import time

import numpy as np

from .analysis import probe_predict
from .config import ServeConfig
from .dynamics import (QuadParams, QuadState, SimConfig, SimulationFault,
                       integrate_step)
from .env import observe, target_state, terminal
from .policy import PolicyGRU
from .trajectory import FigureEightConfig, ReferenceState, lissajous_figure_eight

SCHEMA_VERSION = 1
HANDSHAKE_TIMEOUT = 5.0


def _round9(x):
    """Serialize floats with 9 significant digits."""
    if isinstance(x, float):
        return float(f"{x:.9g}")
    if isinstance(x, dict):
        return {k: _round9(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_round9(v) for v in x]
    if isinstance(x, np.ndarray):
        return [_round9(float(v)) for v in x.tolist()]
    if isinstance(x, (np.floating,)):
        return _round9(float(x))
    if isinstance(x, (np.integer,)):
        return int(x)
    return x


def encode_message(msg: dict) -> str:
    return json.dumps(_round9(msg)) + "\n"


class SessionState:
    """All mutable state of one live simulation session."""

    def __init__(self, student: PolicyGRU, fleet, index: int,
                 sim: SimConfig | None = None, probe_weights=None):
        self.student = student
        self.fleet = fleet
        self.sim = sim or SimConfig()
        self.probe_weights = probe_weights
        self.select_quadrotor(index)

    def select_quadrotor(self, index: int) -> None:
        if not 0 <= index < len(self.fleet):
            raise ValueError(f"fleet index {index} out of range")
        self.index = index
        self.params: QuadParams = self.fleet[index][0]
        self.t2w_true = float(self.fleet[index][1].r_t2w)
        self.motor_scale = np.ones(4)
        self.state: QuadState = target_state(self.params, self.sim.gravity)
        self.hidden = self.student.reset_hidden()
        self.active = True
        self.target = np.zeros(3)
        self.reference_kind = "null"
        self.fig8_cfg = FigureEightConfig()
        self.ref_t = 0.0
        self.steps = 0            # episode steps (reset by activate)
        if not hasattr(self, "total_steps"):
            self.total_steps = 0  # monotone frame clock, never reset
        self.faulted = False
        self.last_action = self.state.prev_action.copy()

    # -- commands ------------------------------------------------------------

    def apply_command(self, cmd: dict) -> dict:
        name = cmd.get("name")
        try:
            if name == "activate":
                self.target = self.state.position.copy()
                self.hidden = self.student.reset_hidden()
                self.reference_kind = "null"
                self.active = True
                self.steps = 0
            elif name == "deactivate":
                self.active = False
            elif name == "reset_hidden":
                self.hidden = self.student.reset_hidden()
            elif name == "set_target":
                p = np.asarray([float(v) for v in cmd["p"]], dtype=float)
                if p.shape != (3,) or not np.all(np.isfinite(p)):
                    raise ValueError("target must be a finite 3-vector")
                self.target = p
            elif name == "poke":
                dv = np.asarray([float(v) for v in cmd["dv"]], dtype=float)
                if dv.shape != (3,) or not np.all(np.isfinite(dv)):
                    raise ValueError("dv must be a finite 3-vector")
                self.state.linear_velocity = self.state.linear_velocity + dv
            elif name == "payload":
                dm = float(cmd["dm"])
                self.params = self.params.with_mass(self.params.mass + dm)
            elif name == "prop_swap":
                motor = int(cmd["motor"])
                scale = float(cmd["scale"])
                if not 0 <= motor < 4:
                    raise ValueError("motor index must be 0..3")
                if scale <= 0:
                    raise ValueError("scale must be positive")
                self.motor_scale[motor] *= scale
            elif name == "select_quadrotor":
                self.select_quadrotor(int(cmd["index"]))
            elif name == "set_reference":
                kind = cmd.get("kind")
                if kind == "null":
                    self.reference_kind = "null"
                elif kind == "fig8":
                    period = float(cmd.get("period", 10.0))
                    if period <= 0:
                        raise ValueError("period must be positive")
                    self.fig8_cfg = FigureEightConfig(period=period)
                    self.reference_kind = "fig8"
                    self.ref_t = 0.0
                else:
                    raise ValueError(f"unknown reference kind {kind!r}")
            else:
                raise ValueError(f"unknown command {name!r}")
        except (KeyError, TypeError, ValueError) as exc:
            return {"type": "ack", "name": name, "ok": False, "error": str(exc)}
        return {"type": "ack", "name": name, "ok": True}

    # -- stepping ------------------------------------------------------------

    def reference(self) -> ReferenceState:
        if self.reference_kind == "fig8":
            c = self.fig8_cfg
            ref = lissajous_figure_eight(c.period, (c.amplitude_x, c.amplitude_y),
                                         c.ramp, self.ref_t)
            return ReferenceState(ref.position + self.target, ref.velocity)
        return ReferenceState(self.target.copy(), np.zeros(3))

    def step(self) -> dict:
        ref = self.reference()
        obs = observe(self.state, ref)
        if self.active:
            action, self.hidden = self.student.forward(obs, self.hidden)
        else:
            from .dynamics import hover_command
            action = np.full(4, hover_command(self.params, self.sim.gravity))
        if not self.faulted:
            try:
                self.state = integrate_step(self.state, self.params, action,
                                            self.sim, motor_scale=self.motor_scale)
            except SimulationFault:
                self.faulted = True
        self.last_action = np.asarray(action, dtype=float)
        if self.reference_kind == "fig8":
            self.ref_t += self.sim.dt
        self.steps += 1
        self.total_steps += 1
        return self.frame()

    def frame(self) -> dict:
        ref = self.reference()  # post-step reference, pairs with the new state
        t2w_est = None
        if self.probe_weights is not None:
            t2w_est = probe_predict(self.probe_weights, self.hidden)
        return {
            "type": "frame",
            "schema_version": SCHEMA_VERSION,
            "step": self.total_steps,
            "t": self.total_steps * self.sim.dt,
            "state": self.state.to_dict(),
            "ref": {"position": ref.position.tolist(),
                    "velocity": ref.velocity.tolist()},
            "action": self.last_action.tolist(),
            "hidden": self.hidden.tolist(),
            "t2w_estimate": t2w_est,
            "t2w_true": self.t2w_true,
            "status": {
                "active": self.active,
                "episode_steps": self.steps,
                "faulted": self.faulted,
                "terminal": bool(terminal(self.state, ref, self.params)),
                "quadrotor_index": self.index,
                "mass": self.params.mass,
                "motor_scale": self.motor_scale.tolist(),
            },
        }


class _Client:
    __slots__ = ("queue",)

    def __init__(self):
        self.queue: asyncio.Queue = asyncio.Queue()


async def run_server(student: PolicyGRU, fleet, index: int, cfg: ServeConfig,
                     seed: int = 0, probe_weights=None,
                     max_steps: int | None = None,
                     started: asyncio.Event | None = None,
                     port_holder: list | None = None):
    """Session server: frames out at >= 50 Hz of simulated time, commands
    applied at the next simulation step, simulation paused while no client
    is connected."""
    from websockets.asyncio.server import serve as ws_serve

    session = SessionState(student, fleet, index, probe_weights=probe_weights)
    commands: asyncio.Queue = asyncio.Queue()
    clients: set[_Client] = set()
    stop = asyncio.Event()

    async def handler(ws):
        await ws.send(encode_message({
            "type": "hello", "schema_version": SCHEMA_VERSION,
            "fleet_size": len(fleet), "hidden_dim": student.hidden,
            "dt": session.sim.dt, "frame_decimation": cfg.frame_decimation}))
        try:
            raw = await asyncio.wait_for(ws.recv(), timeout=HANDSHAKE_TIMEOUT)
        except (asyncio.TimeoutError, Exception):
            await ws.close()
            return
        ok = False
        try:
            msg = json.loads(raw)
            ok = msg.get("type") == "hello" and msg.get("schema_version") == SCHEMA_VERSION
        except json.JSONDecodeError:
            ok = False
        if not ok:
            await ws.send(encode_message({
                "type": "error",
                "error": f"schema_version mismatch: server speaks {SCHEMA_VERSION}"}))
            await ws.close(code=1002, reason="schema mismatch")
            return
        client = _Client()
        clients.add(client)

        async def pump_out():
            while True:
                msg = await client.queue.get()
                if msg is None:
                    break
                await ws.send(msg)

        out_task = asyncio.create_task(pump_out())
        try:
            async for raw in ws:
                for line in str(raw).splitlines():
                    if not line.strip():
                        continue
                    try:
                        msg = json.loads(line)
                    except json.JSONDecodeError:
                        await ws.send(encode_message(
                            {"type": "error", "error": "malformed JSON"}))
                        continue
                    if msg.get("type") == "command":
                        await commands.put((client, msg))
                    else:
                        await ws.send(encode_message(
                            {"type": "error",
                             "error": f"unexpected message type {msg.get('type')!r}"}))
        except Exception:
            pass
        finally:
            clients.discard(client)
            out_task.cancel()

    def broadcast(text: str) -> None:
        for c in clients:
            c.queue.put_nowait(text)

    async def sim_loop():
        sim_time = 0.0
        wall_anchor = None
        while not stop.is_set():
            if not clients:
                wall_anchor = None  # pause; re-anchor pacing on resume
                await asyncio.sleep(0.02)
                continue
            while not commands.empty():
                client, msg = commands.get_nowait()
                ack = session.apply_command(msg)
                if "id" in msg:
                    ack["id"] = msg["id"]
                client.queue.put_nowait(encode_message(ack))
            frame = session.step()
            sim_time += session.sim.dt
            if session.total_steps % cfg.frame_decimation == 0:
                broadcast(encode_message(frame))
            if max_steps is not None and session.total_steps >= max_steps:
                break
            if cfg.pace > 0:
                now = time.monotonic()
                if wall_anchor is None:
                    wall_anchor = (now, sim_time)
                target = wall_anchor[0] + (sim_time - wall_anchor[1]) / cfg.pace
                delay = target - now
                if delay > 0:
                    await asyncio.sleep(delay)
            else:
                await asyncio.sleep(0)
        for c in clients:
            c.queue.put_nowait(None)

    async with ws_serve(handler, cfg.host, cfg.port) as server:
        actual_port = server.sockets[0].getsockname()[1]
        if port_holder is not None:
            port_holder.append(actual_port)
        print(f"listening on ws://{cfg.host}:{actual_port}", flush=True)
        if started is not None:
            started.set()
        loop_task = asyncio.create_task(sim_loop())
        try:
            await loop_task
        finally:
            stop.set()


def serve_forever(student: PolicyGRU, fleet, index: int, cfg: ServeConfig,
                  seed: int = 0, probe_weights=None,
                  max_steps: int | None = None) -> None:
    print(f"serving quadrotor {index} on ws://{cfg.host}:{cfg.port} "
          f"(pace {cfg.pace}x, schema v{SCHEMA_VERSION})")
    asyncio.run(run_server(student, fleet, index, cfg, seed=seed,
                           probe_weights=probe_weights, max_steps=max_steps))
