"""Evaluation studies of the distilled policy.

Covers the linear probe for implicit system identification, figure-eight
tracking error, mid-air activation, disturbance injection, the velocity-delay
reproduction with its accelerometer-integral mitigation, context-window
extrapolation, and the size/teacher-count scaling harness. All studies are
batch jobs over independent episodes and emit plain arrays; the CLI layer
writes them out as CSV plus figures.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .dynamics import (GRAVITY, QuadParams, QuadState, SimConfig, SimulationFault,
                       integrate_step, quat_rotate, thrust_curve)
from .env import (DEFAULT_HORIZON, EpisodeRecord, observe, reset_state,
                  reward, target_state, terminal)
from .policy import PolicyGRU, flop_count
from .trajectory import (FigureEightConfig, FigureEightTrajectory,
                         NullTrajectory, sample_task)

PROBE_MIN_STEP_DEFAULT = 100  # collect hidden states after 1 s of flight


# ---------------------------------------------------------------------------
# generic policy rollout with optional observation pipeline and events

@dataclass
class VelFilterState:
    """Decayed accelerometer integral grounding a delayed velocity source."""

    v_a: np.ndarray = field(default_factory=lambda: np.zeros(3))
    time_constant: float = 0.025  # s


def velocity_filter_step(fs: VelFilterState, accel_body: np.ndarray,
                         orientation: np.ndarray, dt: float,
                         gravity: float = GRAVITY) -> VelFilterState:
    """One step of the leaky accelerometer integral.

    accel_body is the specific force measured in the body frame (a stationary
    level vehicle reads +g along body z, which cancels exactly after rotation
    into the world frame and gravity subtraction).
    """
    if dt <= 0 or fs.time_constant <= 0:
        raise ValueError("dt and time constant must be positive")
    a_g = quat_rotate(orientation, np.asarray(accel_body, dtype=float))
    a_g = a_g - np.array([0.0, 0.0, gravity])
    alpha = math.exp(-dt / fs.time_constant)
    return VelFilterState(alpha * fs.v_a + a_g * dt, fs.time_constant)


class DelayedObservationBuffer:
    """Ring of timestamped samples; emits the newest sample older than `delay`."""

    def __init__(self, delay: float):
        if delay < 0:
            raise ValueError("delay must be non-negative")
        self.delay = delay
        self._times: list[float] = []
        self._values: list[np.ndarray] = []

    def push(self, t: float, value: np.ndarray) -> None:
        self._times.append(t)
        self._values.append(np.asarray(value, dtype=float).copy())

    def query(self, t: float) -> np.ndarray:
        cutoff = t - self.delay
        idx = None
        for i in range(len(self._times) - 1, -1, -1):
            if self._times[i] <= cutoff + 1e-12:
                idx = i
                break
        if idx is None:
            idx = 0  # before enough history exists, fall back to the oldest
        value = self._values[idx]
        if idx > 2:  # drop samples that can never be emitted again
            del self._times[:idx - 2]
            del self._values[:idx - 2]
        return value


def specific_force_body(state: QuadState, params: QuadParams,
                        motor_scale: np.ndarray | None = None) -> np.ndarray:
    """Accelerometer model: rotor thrust is the only non-gravitational force."""
    thrust = thrust_curve(params, state.motor_speeds)
    if motor_scale is not None:
        thrust = thrust * motor_scale
    return np.array([0.0, 0.0, float(np.sum(thrust)) / params.mass])


def simulate_policy(student: PolicyGRU, params: QuadParams, steps: int,
                    task=None, state0: QuadState | None = None,
                    sim: SimConfig | None = None,
                    events: dict | None = None,
                    velocity_delay: float = 0.0,
                    velocity_mitigation: bool = False,
                    filter_time_constant: float = 0.025,
                    stop_on_terminal: bool = True) -> EpisodeRecord:
    """Roll the student for `steps` control steps and log everything.

    events maps step index -> callable(context) applied before that step;
    the context exposes mutable `state`, `params`, `motor_scale`, and the
    policy `hidden` so disturbances and hidden-state resets compose.
    velocity_delay feeds the observed velocity through a delay line, with the
    accelerometer-integral correction added when velocity_mitigation is on.
    """
    sim = sim or SimConfig()
    task = task or NullTrajectory()
    state = state0.copy() if state0 is not None else target_state(params)
    ref = task.reset()

    ctx = _SimContext(state=state, params=params, motor_scale=None,
                      hidden=student.reset_hidden(), student=student)
    delay_buf = DelayedObservationBuffer(velocity_delay) if velocity_delay > 0 else None
    fs = VelFilterState(time_constant=filter_time_constant)

    n_obs, n_act = student.obs_dim, student.act_dim
    obs_log = np.zeros((steps, n_obs))
    act_log = np.zeros((steps, n_act))
    rew_log = np.zeros(steps)
    hid_log = np.zeros((steps, student.hidden))
    pos_log = np.zeros((steps, 3))
    vel_log = np.zeros((steps, 3))
    ref_log = np.zeros((steps, 3))
    times = np.zeros(steps)
    terminated = False
    t_count = 0

    for t in range(steps):
        if events and t in events:
            events[t](ctx)
        now = t * sim.dt
        obs = observe(ctx.state, ref)
        if delay_buf is not None:
            delay_buf.push(now, ctx.state.linear_velocity)
            v_meas = delay_buf.query(now)
            if velocity_mitigation:
                accel = specific_force_body(ctx.state, ctx.params, ctx.motor_scale)
                fs = velocity_filter_step(fs, accel, ctx.state.orientation, sim.dt,
                                          sim.gravity)
                v_meas = v_meas + fs.v_a
            obs[12:15] = v_meas - ref.velocity
        act, ctx.hidden = student.forward(obs, ctx.hidden)
        try:
            next_state = integrate_step(ctx.state, ctx.params, act, sim,
                                        motor_scale=ctx.motor_scale)
        except SimulationFault:
            terminated = True
            t_count = t
            break
        next_ref = task.step(ref, sim.dt)
        term = terminal(next_state, next_ref, ctx.params)
        rew_log[t] = reward(ctx.state, ref, act, term)
        ctx.state, ref = next_state, next_ref
        obs_log[t] = obs
        act_log[t] = act
        hid_log[t] = ctx.hidden
        pos_log[t] = ctx.state.position
        vel_log[t] = ctx.state.linear_velocity
        ref_log[t] = ref.position
        times[t] = now + sim.dt
        t_count = t + 1
        if term:
            terminated = True
            if stop_on_terminal:
                break

    sl = slice(0, t_count)
    return EpisodeRecord(
        params=params, observations=obs_log[sl], actions=act_log[sl],
        rewards=rew_log[sl], terminated=terminated, hidden_states=hid_log[sl],
        positions=pos_log[sl], ref_positions=ref_log[sl], times=times[sl],
        velocities=vel_log[sl])


@dataclass
class _SimContext:
    state: QuadState
    params: QuadParams
    motor_scale: np.ndarray | None
    hidden: np.ndarray
    student: PolicyGRU | None = None


# ---------------------------------------------------------------------------
# disturbances

def inject_disturbance(ctx, kind: str, *, dv=None, dm: float | None = None,
                       motor: int | None = None, scale: float | None = None):
    """Apply a disturbance to a simulation context (or QuadEnv).

    kinds: "impulse" (adds dv to the world velocity), "payload" (adds dm kg of
    dead mass, leaving the thrust curve fixed), "prop_swap" (scales one
    motor's thrust curve by `scale`).
    """
    if kind == "impulse":
        ctx.state.linear_velocity = ctx.state.linear_velocity + np.asarray(dv, dtype=float)
    elif kind == "payload":
        ctx.params = ctx.params.with_mass(ctx.params.mass + float(dm))
    elif kind == "prop_swap":
        if not 0 <= motor < 4:
            raise ValueError("motor index must be 0..3")
        if scale is None or scale <= 0:
            raise ValueError("prop_swap scale must be positive")
        ms = np.ones(4) if ctx.motor_scale is None else np.asarray(ctx.motor_scale, float).copy()
        ms[motor] *= scale
        ctx.motor_scale = ms
    else:
        raise ValueError(f"unknown disturbance kind {kind!r}")
    return ctx


def disturbance_event(kind: str, **kwargs):
    """Event callable for simulate_policy's schedule."""
    def apply(ctx):
        inject_disturbance(ctx, kind, **kwargs)
    return apply


def reset_hidden_event():
    def apply(ctx):
        ctx.hidden = ctx.student.reset_hidden()
    return apply


# ---------------------------------------------------------------------------
# recovery / activation

RECOVERY_POS_TOL = 0.2   # m
RECOVERY_VEL_TOL = 0.2   # m/s
RECOVERY_WINDOW = 1.0    # s sustained
ACTIVATION_DURATION = 10.0  # s


def recovered_flag(record: EpisodeRecord, dt: float = 0.01,
                   window: float = RECOVERY_WINDOW) -> bool:
    """True when position error and speed stay inside tolerance for the
    final `window` seconds of a run that did not terminate."""
    if record.terminated:
        return False
    n = len(record)
    k = int(round(window / dt))
    if n < k:
        return False
    pos_err = np.linalg.norm(record.positions[-k:] - record.ref_positions[-k:], axis=1)
    if np.any(pos_err >= RECOVERY_POS_TOL):
        return False
    if record.velocities is not None:
        vels = record.velocities[-k:]
    else:
        vels = np.diff(record.positions[-(k + 1):], axis=0) / dt
    return bool(np.all(np.linalg.norm(vels, axis=1) < RECOVERY_VEL_TOL))


def midair_activation_test(student: PolicyGRU, params: QuadParams,
                           initial_speed: float,
                           duration: float = ACTIVATION_DURATION,
                           direction=(1.0, 0.0, 0.0)) -> tuple[EpisodeRecord, bool]:
    """Activate the policy on a level vehicle moving at `initial_speed`;
    hidden state starts from the learnable initial vector and the target is
    the activation position."""
    sim = SimConfig()
    state = target_state(params)
    d = np.asarray(direction, dtype=float)
    d = d / np.linalg.norm(d)
    state.linear_velocity = initial_speed * d
    steps = int(round(duration / sim.dt))
    record = simulate_policy(student, params, steps, task=NullTrajectory(),
                             state0=state, sim=sim)
    return record, recovered_flag(record, sim.dt)


def disturbance_recovery_test(student: PolicyGRU, params: QuadParams,
                              kind: str, settle: float = 2.0,
                              duration: float = ACTIVATION_DURATION,
                              **kwargs) -> tuple[EpisodeRecord, bool]:
    """Hover, apply one disturbance after `settle` seconds, and check
    recovery over the remainder of the run."""
    sim = SimConfig()
    steps = int(round((settle + duration) / sim.dt))
    events = {int(round(settle / sim.dt)): disturbance_event(kind, **kwargs)}
    record = simulate_policy(student, params, steps, task=NullTrajectory(),
                             state0=target_state(params), sim=sim, events=events)
    return record, recovered_flag(record, sim.dt)


# ---------------------------------------------------------------------------
# tracking error

def rmse_tracking(record: EpisodeRecord, include_z: bool = True,
                  skip_time: float = 0.0, dt: float = 0.01) -> float:
    """Root-mean-square position error over the configured axes, evaluated
    after `skip_time` (the ramp window)."""
    if record.positions is None or record.ref_positions is None:
        raise ValueError("record carries no position traces")
    start = int(round(skip_time / dt))
    err = record.positions[start:] - record.ref_positions[start:]
    if not include_z:
        err = err[:, :2]
    if len(err) == 0:
        return float("nan")
    return float(np.sqrt(np.mean(np.sum(err ** 2, axis=1))))


def figure_eight_eval(student: PolicyGRU, params: QuadParams,
                      fig8: FigureEightConfig, loops: int = 1) -> EpisodeRecord:
    """Track `loops` consecutive figure-eight loops from a hover start."""
    sim = SimConfig()
    steps = int(round((fig8.ramp + loops * fig8.period) / sim.dt))
    task = FigureEightTrajectory(fig8)
    return simulate_policy(student, params, steps, task=task,
                           state0=target_state(params), sim=sim)


def context_extrapolation_test(student: PolicyGRU, params: QuadParams,
                               loops: int, period: float,
                               fig8: FigureEightConfig | None = None):
    """Consecutive figure-eight loops without hidden-state reset.

    Returns (per-loop RMSE list, record, failed_loop_index or None).
    """
    if loops < 1:
        raise ValueError("loops must be >= 1")
    cfg = replace(fig8 or FigureEightConfig(), period=period)
    record = figure_eight_eval(student, params, cfg, loops=loops)
    dt = 0.01
    per_loop = []
    failed_at = None
    steps_per_loop = int(round(period / dt))
    ramp_steps = int(round(cfg.ramp / dt))
    for k in range(loops):
        lo = ramp_steps + k * steps_per_loop
        hi = lo + steps_per_loop
        if hi > len(record):
            failed_at = k
            break
        err = record.positions[lo:hi] - record.ref_positions[lo:hi]
        per_loop.append(float(np.sqrt(np.mean(np.sum(err ** 2, axis=1)))))
    if record.terminated and failed_at is None:
        failed_at = loops - 1
    return per_loop, record, failed_at


# ---------------------------------------------------------------------------
# linear probe

@dataclass
class ProbeDataset:
    hidden: np.ndarray      # (N, H)
    target: np.ndarray      # (N,) ground-truth thrust-to-weight ratio
    group: np.ndarray       # (N,) quadrotor index per row

    def __post_init__(self) -> None:
        if not (len(self.hidden) == len(self.target) == len(self.group)):
            raise ValueError("probe dataset arrays must align")


def build_probe_dataset(student: PolicyGRU, fleet, episodes_per_quad: int,
                        seed: int, min_step: int = PROBE_MIN_STEP_DEFAULT,
                        horizon: int = DEFAULT_HORIZON) -> ProbeDataset:
    """Roll the student on each quadrotor and collect hidden states with the
    vehicle's true thrust-to-weight ratio (taken from the sample trace,
    never re-derived)."""
    hid, tgt, grp = [], [], []
    for gi, (params, trace) in enumerate(fleet):
        for ep in range(episodes_per_quad):
            rng = np.random.Generator(np.random.PCG64(
                np.random.SeedSequence([seed, gi, ep])))
            state = reset_state(params, rng)
            task = sample_task(rng, start=state.position)
            record = simulate_policy(student, params, horizon, task=task,
                                     state0=state)
            h = record.hidden_states[min_step:]
            if len(h) == 0:
                continue
            hid.append(h)
            tgt.append(np.full(len(h), trace.r_t2w))
            grp.append(np.full(len(h), gi))
    return ProbeDataset(np.concatenate(hid), np.concatenate(tgt),
                        np.concatenate(grp))


def linear_probe_fit(data: ProbeDataset, split: float = 0.8,
                     seed: int = 0) -> tuple[np.ndarray, float, float]:
    """OLS with intercept, split by quadrotor (no vehicle appears in both
    splits). Returns (weights incl. intercept, test MSE, test R^2)."""
    quads = np.unique(data.group)
    if len(quads) < 2:
        raise ValueError("probe needs at least 2 quadrotors for a split")
    rng = np.random.default_rng(seed)
    order = rng.permutation(quads)
    n_train = max(1, int(round(split * len(quads))))
    n_train = min(n_train, len(quads) - 1)
    train_q = set(order[:n_train].tolist())
    train_mask = np.isin(data.group, list(train_q))
    x_tr = _with_intercept(data.hidden[train_mask])
    y_tr = data.target[train_mask]
    x_te = _with_intercept(data.hidden[~train_mask])
    y_te = data.target[~train_mask]
    w, _, rank, _ = np.linalg.lstsq(x_tr, y_tr, rcond=None)
    if rank < x_tr.shape[1]:
        raise np.linalg.LinAlgError("rank-deficient probe design matrix")
    pred = x_te @ w
    mse = float(np.mean((pred - y_te) ** 2))
    ss_res = float(np.sum((pred - y_te) ** 2))
    ss_tot = float(np.sum((y_te - np.mean(y_te)) ** 2))
    r2 = 1.0 - ss_res / ss_tot
    return w, mse, r2


def probe_predict(weights: np.ndarray, hidden: np.ndarray) -> float:
    return float(np.concatenate([hidden, [1.0]]) @ weights)


def _with_intercept(x: np.ndarray) -> np.ndarray:
    return np.concatenate([x, np.ones((len(x), 1))], axis=1)


# ---------------------------------------------------------------------------
# delay study

def delay_study(student: PolicyGRU, params: QuadParams, delays,
                with_mitigation: bool = False, duration: float = 15.0,
                window: float = 5.0,
                filter_time_constant: float = 0.025) -> list[dict]:
    """Hover episodes with the velocity observation fed through a delay line.

    The oscillation metric is the standard deviation of z position over the
    final `window` seconds. Returns one row per delay value."""
    sim = SimConfig()
    steps = int(round(duration / sim.dt))
    k = int(round(window / sim.dt))
    rows = []
    for delay in delays:
        record = simulate_policy(student, params, steps, task=NullTrajectory(),
                                 state0=target_state(params), sim=sim,
                                 velocity_delay=float(delay),
                                 velocity_mitigation=with_mitigation,
                                 filter_time_constant=filter_time_constant)
        z = record.positions[-k:, 2] if len(record) >= k else record.positions[:, 2]
        rows.append({
            "delay": float(delay),
            "mitigation": bool(with_mitigation),
            "z_std": float(np.std(z)) if len(z) else float("nan"),
            "terminated": record.terminated,
            "steps": len(record),
        })
    return rows


# ---------------------------------------------------------------------------
# scaling harness

def scaling_sweep(train_pairs, holdout_params, hidden_sizes, teacher_counts,
                  distill_cfg, seed: int, eval_episodes: int = 8) -> list[dict]:
    """Distill one student per (hidden size, teacher count) cell and measure
    held-out episode length against inference FLOPs. Faulted cells are
    recorded and do not stop the sweep."""
    from .distill import distill, evaluate_student

    rows = []
    for count in teacher_counts:
        if count > len(train_pairs):
            raise ValueError(f"teacher count {count} exceeds available "
                             f"{len(train_pairs)}")
        for h in hidden_sizes:
            cfg = replace(distill_cfg, hidden=int(h))
            try:
                student, _ = distill(train_pairs[:count], holdout_params, cfg,
                                     seed=seed)
                lengths, _ = evaluate_student(
                    student, holdout_params,
                    max(1, eval_episodes // max(1, len(holdout_params))),
                    seed=seed, horizon=cfg.horizon)
                rows.append({"hidden": int(h), "teachers": int(count),
                             "flops": flop_count(int(h)),
                             "episode_length": float(np.mean(lengths)),
                             "fault": ""})
            except Exception as exc:  # cell isolation
                rows.append({"hidden": int(h), "teachers": int(count),
                             "flops": flop_count(int(h)),
                             "episode_length": float("nan"),
                             "fault": repr(exc)})
    return rows
