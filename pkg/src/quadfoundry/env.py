"""Position/trajectory-control environment over the quadrotor simulator.

Observations are error-state: the policy sees its position and velocity
relative to the reference, the absolute attitude (as a flattened rotation
matrix), the body angular rate, and its previous action. Motor speeds are
hidden from the student observation and appended for teachers.

Observation layout (22):
    [0:3]   position - reference position (world, m)
    [3:12]  rotation matrix of the attitude quaternion, row-major
    [12:15] velocity - reference velocity (world, m/s)
    [15:18] angular velocity (body, rad/s)
    [18:22] previous action (normalized)
Teacher observation (26): the 22 above ++ motor speeds (normalized).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dynamics import (GRAVITY, QuadParams, QuadState, SimConfig,
                       _rigid_body_derivative, hover_command, integrate_step,
                       quat_from_axis_angle, quat_to_rotmat)
from .trajectory import (FigureEightConfig, LangevinConfig, ReferenceState,
                         sample_task)

OBS_DIM = 22
TEACHER_OBS_DIM = 26
DEFAULT_HORIZON = 500

REWARD_BASE = 1.5
YAW_PENALTY = 0.2
TERMINAL_PENALTY = 100.0
POS_BOUND_ARMS = 20.0   # * l_arm
VEL_BOUND = 2.0         # m/s, error velocity
OMEGA_BOUND = 35.0      # rad/s

RESET_POS_ARMS = 10.0   # * l_arm, per-axis uniform
RESET_MAX_TILT = math.pi / 2
RESET_MAX_VEL = 1.0
RESET_MAX_OMEGA = 1.0
RESET_TARGET_PROB = 0.1


def observe(state: QuadState, ref: ReferenceState, out: np.ndarray | None = None) -> np.ndarray:
    obs = out if out is not None else np.empty(OBS_DIM)
    obs[0:3] = state.position - ref.position
    obs[3:12] = quat_to_rotmat(state.orientation).reshape(9)
    obs[12:15] = state.linear_velocity - ref.velocity
    obs[15:18] = state.angular_velocity
    obs[18:22] = state.prev_action
    return obs


def teacher_observe(state: QuadState, ref: ReferenceState) -> np.ndarray:
    obs = np.empty(TEACHER_OBS_DIM)
    observe(state, ref, out=obs[:OBS_DIM])
    obs[OBS_DIM:] = state.motor_speeds
    return obs


def terminal(state: QuadState, ref: ReferenceState, params: QuadParams) -> bool:
    if np.linalg.norm(state.position - ref.position) > POS_BOUND_ARMS * params.arm_length:
        return True
    if np.linalg.norm(state.linear_velocity - ref.velocity) > VEL_BOUND:
        return True
    return bool(np.linalg.norm(state.angular_velocity) > OMEGA_BOUND)


def reward(state: QuadState, ref: ReferenceState, action: np.ndarray,
           terminal_next: bool) -> float:
    """Survival bonus minus position, yaw, and action-derivative penalties,
    with a large penalty when the next state terminates the episode."""
    pos_err = float(np.linalg.norm(state.position - ref.position))
    qz = abs(float(state.orientation[3]))
    yaw_err = math.acos(min(1.0, max(-1.0, 1.0 - qz)))
    act_diff = float(np.linalg.norm(np.asarray(action, dtype=float) - state.prev_action))
    r = REWARD_BASE - pos_err - YAW_PENALTY * yaw_err - act_diff
    if terminal_next:
        r -= TERMINAL_PENALTY
    return r


def target_state(params: QuadParams, gravity: float = GRAVITY) -> QuadState:
    """Zero pose and twist with rotors (and previous action) at hover, so the
    hover command is an exact equilibrium from this state."""
    u_h = hover_command(params, gravity)
    return QuadState(prev_action=np.full(4, u_h), motor_speeds=np.full(4, u_h))


def _ball_draw(rng: np.random.Generator, radius: float) -> np.ndarray:
    """Uniform draw from the ball: per-axis uniform with rejection."""
    while True:
        v = rng.uniform(-radius, radius, 3)
        if np.linalg.norm(v) <= radius:
            return v


def reset_state(params: QuadParams, rng: np.random.Generator,
                gravity: float = GRAVITY) -> QuadState:
    """Draw an initial state: position within +-10 arm lengths per axis, tilt
    up to 90 deg about a random axis, speed and body rate uniform up to 1
    (ball-uniform); with probability 0.1 the draw is replaced by the target
    state."""
    span = RESET_POS_ARMS * params.arm_length
    pos = rng.uniform(-span, span, 3)
    axis = rng.standard_normal(3)
    axis_norm = np.linalg.norm(axis)
    axis = axis / axis_norm if axis_norm > 0 else np.array([0.0, 0.0, 1.0])
    angle = rng.uniform(0.0, RESET_MAX_TILT)
    quat = quat_from_axis_angle(axis, angle)
    vel = _ball_draw(rng, RESET_MAX_VEL)
    omega = _ball_draw(rng, RESET_MAX_OMEGA)
    u_h = hover_command(params, gravity)
    state = QuadState(pos, quat, vel, omega,
                      np.full(4, u_h), np.full(4, u_h))
    if rng.random() < RESET_TARGET_PROB:
        return target_state(params, gravity)
    return state


@dataclass
class EpisodeRecord:
    """Time-indexed log of one rollout."""

    params: QuadParams
    observations: np.ndarray          # (T, 22)
    actions: np.ndarray               # (T, 4) executed actions
    rewards: np.ndarray               # (T,)
    terminated: bool                  # True if the last step hit the termination set
    teacher_labels: np.ndarray | None = None  # (T, 4)
    hidden_states: np.ndarray | None = None   # (T, H)
    positions: np.ndarray | None = None       # (T, 3) post-step position
    velocities: np.ndarray | None = None      # (T, 3) post-step velocity
    ref_positions: np.ndarray | None = None   # (T, 3) post-step reference
    times: np.ndarray | None = None           # (T,)

    def __len__(self) -> int:
        return len(self.observations)

    def validate(self) -> None:
        n = len(self.observations)
        for name in ("actions", "rewards", "teacher_labels", "hidden_states",
                     "positions", "velocities", "ref_positions", "times"):
            arr = getattr(self, name)
            if arr is not None and len(arr) != n:
                raise ValueError(f"{name} length {len(arr)} != {n}")

    def save_npz(self, path: str | Path) -> None:
        data = {"observations": self.observations, "actions": self.actions,
                "rewards": self.rewards, "terminated": np.array(self.terminated),
                "params_json": np.array(repr(self.params.to_dict()))}
        for name in ("teacher_labels", "hidden_states", "positions",
                     "velocities", "ref_positions", "times"):
            arr = getattr(self, name)
            if arr is not None:
                data[name] = arr
        np.savez(path, **data)

    def save_csv(self, path: str | Path) -> None:
        self.validate()
        n = len(self)
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            header = ["step"] + [f"obs_{i}" for i in range(OBS_DIM)] \
                + [f"action_{i}" for i in range(4)] + ["reward", "terminal"]
            if self.teacher_labels is not None:
                header += [f"label_{i}" for i in range(4)]
            if self.hidden_states is not None:
                header += [f"h_{i}" for i in range(self.hidden_states.shape[1])]
            w.writerow(header)
            for t in range(n):
                row = [t] + list(self.observations[t]) + list(self.actions[t]) \
                    + [self.rewards[t], int(self.terminated and t == n - 1)]
                if self.teacher_labels is not None:
                    row += list(self.teacher_labels[t])
                if self.hidden_states is not None:
                    row += list(self.hidden_states[t])
                w.writerow([f"{x:.9g}" if isinstance(x, float) else x for x in row])


class QuadEnv:
    """Single-vehicle environment; owns the state, reference, and bookkeeping.

    Instances are independent value machines with no shared state, so a batch
    of them can be stepped concurrently.
    """

    def __init__(self, params: QuadParams, sim: SimConfig | None = None,
                 langevin: LangevinConfig | None = None,
                 horizon: int = DEFAULT_HORIZON):
        params.validate()
        self.params = params
        self.sim = sim or SimConfig()
        self.langevin = langevin or LangevinConfig()
        self.horizon = horizon
        self.motor_scale: np.ndarray | None = None
        self.state: QuadState | None = None
        self.ref: ReferenceState | None = None
        self.task = None
        self.steps = 0

    def reset(self, rng: np.random.Generator, task=None) -> np.ndarray:
        self.state = reset_state(self.params, rng, self.sim.gravity)
        self.task = task if task is not None else sample_task(
            rng, self.langevin, start=self.state.position)
        self.ref = self.task.reset()
        self.steps = 0
        return observe(self.state, self.ref)

    def step(self, action) -> tuple[np.ndarray, float, bool, dict]:
        if self.state is None:
            raise RuntimeError("step() before reset()")
        next_state = integrate_step(self.state, self.params, action, self.sim,
                                    motor_scale=self.motor_scale)
        next_ref = self.task.step(self.ref, self.sim.dt)
        term = terminal(next_state, next_ref, self.params)
        r = reward(self.state, self.ref, action, term)
        self.state, self.ref = next_state, next_ref
        self.steps += 1
        done = term or self.steps >= self.horizon
        info = {"terminal": term, "truncated": done and not term}
        return observe(next_state, next_ref), r, done, info

    def teacher_obs(self) -> np.ndarray:
        return teacher_observe(self.state, self.ref)


# ---------------------------------------------------------------------------
# vectorized batch of environments (one vehicle's params per row)

class StackedParams:
    """Struct-of-arrays view of a list of QuadParams for broadcast stepping."""

    def __init__(self, params_list: list[QuadParams]):
        def col(f):
            return np.array([getattr(p, f) for p in params_list])
        self.mass = col("mass")
        self.arm_length = col("arm_length")
        self.c_f0 = col("c_f0")[:, None]
        self.c_f1 = col("c_f1")[:, None]
        self.c_f2 = col("c_f2")[:, None]
        self.c_m = col("c_m")
        self.J_xx = col("J_xx")
        self.J_yy = col("J_yy")
        self.J_zz = col("J_zz")
        self.motor_tau_up = col("motor_tau_up")[:, None]
        self.motor_tau_down = col("motor_tau_down")[:, None]
        self.hover = np.array([hover_command(p) for p in params_list])
        self.n = len(params_list)


def _ball_draw_batch(rng: np.random.Generator, radius: float, n: int) -> np.ndarray:
    out = rng.uniform(-radius, radius, (n, 3))
    bad = np.linalg.norm(out, axis=1) > radius
    while bad.any():
        out[bad] = rng.uniform(-radius, radius, (int(bad.sum()), 3))
        bad = np.linalg.norm(out, axis=1) > radius
    return out


class BatchEnv:
    """Steps B independent environments in lockstep with array math.

    Faulted or terminated rows are frozen and masked out; the mask is the
    ground truth for which rows still produce valid data.
    """

    def __init__(self, params_list: list[QuadParams], sim: SimConfig | None = None,
                 langevin: LangevinConfig | None = None,
                 horizon: int = DEFAULT_HORIZON, task_mode: str = "mixture",
                 fig8: FigureEightConfig | None = None):
        if task_mode not in ("mixture", "null", "fig8"):
            raise ValueError(f"unknown task mode {task_mode!r}")
        self.sp = StackedParams(params_list)
        self.params_list = params_list
        self.sim = sim or SimConfig()
        self.langevin = langevin or LangevinConfig()
        self.horizon = horizon
        self.task_mode = task_mode
        self.fig8 = fig8 or FigureEightConfig()
        b = self.sp.n
        self.motor_scale = np.ones((b, 4))
        self.t = 0.0

    def reset(self, rng: np.random.Generator) -> np.ndarray:
        sp, b = self.sp, self.sp.n
        span = (RESET_POS_ARMS * sp.arm_length)[:, None]
        self.pos = rng.uniform(-1.0, 1.0, (b, 3)) * span
        axis = rng.standard_normal((b, 3))
        axis /= np.linalg.norm(axis, axis=1, keepdims=True)
        angle = rng.uniform(0.0, RESET_MAX_TILT, b)
        half = 0.5 * angle
        self.quat = np.concatenate([np.cos(half)[:, None],
                                    np.sin(half)[:, None] * axis], axis=1)
        self.vel = _ball_draw_batch(rng, RESET_MAX_VEL, b)
        self.omega = _ball_draw_batch(rng, RESET_MAX_OMEGA, b)
        self.prev_action = np.repeat(sp.hover[:, None], 4, axis=1)
        self.motor = self.prev_action.copy()

        at_target = rng.random(b) < RESET_TARGET_PROB
        self.pos[at_target] = 0.0
        self.quat[at_target] = np.array([1.0, 0.0, 0.0, 0.0])
        self.vel[at_target] = 0.0
        self.omega[at_target] = 0.0

        if self.task_mode == "mixture":
            self.null_mask = rng.random(b) < 0.5
        else:
            self.null_mask = np.ones(b, dtype=bool)
        if self.task_mode == "fig8":
            self.ref_p = np.zeros((b, 3))
            self.ref_v = np.zeros((b, 3))
        else:
            self.ref_p = np.where(self.null_mask[:, None], 0.0, self.pos)
            self.ref_v = np.zeros((b, 3))
        self.t = 0.0
        self.steps = 0
        self.active = np.ones(b, dtype=bool)
        return self._observe()

    def _observe(self) -> np.ndarray:
        b = self.sp.n
        obs = np.empty((b, OBS_DIM))
        obs[:, 0:3] = self.pos - self.ref_p
        obs[:, 3:12] = quat_to_rotmat(self.quat).reshape(b, 9)
        obs[:, 12:15] = self.vel - self.ref_v
        obs[:, 15:18] = self.omega
        obs[:, 18:22] = self.prev_action
        return obs

    def teacher_obs(self) -> np.ndarray:
        return np.concatenate([self._observe(), self.motor], axis=1)

    def _step_reference(self, rng: np.random.Generator) -> None:
        dt = self.sim.dt
        if self.task_mode == "fig8":
            from .trajectory import lissajous_figure_eight
            c = self.fig8
            ref = lissajous_figure_eight(c.period, (c.amplitude_x, c.amplitude_y),
                                         c.ramp, self.t)
            self.ref_p = np.broadcast_to(ref.position, self.ref_p.shape).copy()
            self.ref_v = np.broadcast_to(ref.velocity, self.ref_v.shape).copy()
            return
        cfg = self.langevin
        xi = rng.standard_normal(self.ref_p.shape)
        v_new = self.ref_v + (-cfg.damping * self.ref_v - cfg.stiffness * self.ref_p) * dt \
            + cfg.noise_scale * math.sqrt(dt) * xi
        p_new = self.ref_p + self.ref_v * dt
        clipped = np.clip(p_new, -cfg.position_clamp, cfg.position_clamp)
        v_new = np.where(clipped == p_new, v_new, 0.0)
        live = ~self.null_mask[:, None]
        self.ref_p = np.where(live, clipped, 0.0)
        self.ref_v = np.where(live, v_new, 0.0)

    def step(self, actions: np.ndarray, rng: np.random.Generator):
        """Returns (obs, reward, done, active_before) arrays; frozen rows keep
        their last state and report zero reward."""
        sp = self.sp
        dt = self.sim.dt
        act_before = self.active.copy()
        u = np.clip(actions, 0.0, 1.0)

        tau = np.where(u > self.motor, sp.motor_tau_up, sp.motor_tau_down)
        motor_new = u + (self.motor - u) * np.exp(-dt / tau)
        motor_new = np.clip(motor_new, 0.0, 1.0)
        thrusts = (sp.c_f0 + sp.c_f1 * motor_new + sp.c_f2 * motor_new ** 2) * self.motor_scale

        def deriv(p, q, v, w):
            return _rigid_body_derivative(p, q, v, w, thrusts, sp, self.sim.gravity)

        p, q, v, w = self.pos, self.quat, self.vel, self.omega
        k1 = deriv(p, q, v, w)
        k2 = deriv(p + 0.5 * dt * k1[0], q + 0.5 * dt * k1[1],
                   v + 0.5 * dt * k1[2], w + 0.5 * dt * k1[3])
        k3 = deriv(p + 0.5 * dt * k2[0], q + 0.5 * dt * k2[1],
                   v + 0.5 * dt * k2[2], w + 0.5 * dt * k2[3])
        k4 = deriv(p + dt * k3[0], q + dt * k3[1], v + dt * k3[2], w + dt * k3[3])
        sixth = dt / 6.0
        p_new = p + sixth * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        q_new = q + sixth * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        v_new = v + sixth * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
        w_new = w + sixth * (k1[3] + 2 * k2[3] + 2 * k3[3] + k4[3])
        q_new = q_new / np.linalg.norm(q_new, axis=1, keepdims=True)

        finite = (np.isfinite(p_new).all(axis=1) & np.isfinite(q_new).all(axis=1)
                  & np.isfinite(v_new).all(axis=1) & np.isfinite(w_new).all(axis=1))

        # pre-step errors for the reward
        pos_err = np.linalg.norm(self.pos - self.ref_p, axis=1)
        qz = np.abs(self.quat[:, 3])
        yaw_err = np.arccos(np.clip(1.0 - qz, -1.0, 1.0))
        act_diff = np.linalg.norm(u - self.prev_action, axis=1)

        upd = (self.active & finite)[:, None]
        self.pos = np.where(upd, p_new, self.pos)
        self.quat = np.where(upd, q_new, self.quat)
        self.vel = np.where(upd, v_new, self.vel)
        self.omega = np.where(upd, w_new, self.omega)
        self.motor = np.where(upd, motor_new, self.motor)
        self.prev_action = np.where(upd, u, self.prev_action)

        self.t += dt
        self.steps += 1
        self._step_reference(rng)

        term = ((np.linalg.norm(self.pos - self.ref_p, axis=1)
                 > POS_BOUND_ARMS * sp.arm_length)
                | (np.linalg.norm(self.vel - self.ref_v, axis=1) > VEL_BOUND)
                | (np.linalg.norm(self.omega, axis=1) > OMEGA_BOUND)
                | ~finite)
        rew = REWARD_BASE - pos_err - YAW_PENALTY * yaw_err - act_diff \
            - TERMINAL_PENALTY * (term & act_before)
        rew = np.where(act_before, rew, 0.0)

        done = term | (self.steps >= self.horizon)
        self.active &= ~done
        return self._observe(), rew, done, act_before
