"""Soft actor-critic training of one fully-observing teacher per quadrotor.

Teachers observe the full simulator state (error-state observation plus motor
speeds, 26 inputs) and output per-motor commands through a squashed Gaussian
head mapped to [0, 1]. Twin critics with clipped double-Q targets, learned
temperature, and Polyak-averaged target networks. All gradients are written
out by hand; see tests for finite-difference validation.

Fleet pre-training is embarrassingly parallel: each run is an isolated
subprocess with its own RNG streams, so results are bit-identical regardless
of the worker count.
"""

from __future__ import annotations

import json
import struct
from concurrent.futures import ProcessPoolExecutor
import dataclasses
from dataclasses import asdict, dataclass
from pathlib import Path

import multiprocessing as mp
import numpy as np

from .dynamics import QuadParams
from .env import DEFAULT_HORIZON, QuadEnv, TEACHER_OBS_DIM
from .nets import MLP, Adam, TrainingFault, log1m_tanh_sq, polyak_update

ACT_DIM = 4
LOG_STD_MIN = -20.0
LOG_STD_MAX = 2.0
_HALF_LOG_2PI = 0.5 * np.log(2.0 * np.pi)

# Fixed pre-scale applied to observations entering the teacher networks
# (body rates reach +-35 rad/s; compressing them keeps the first layer in
# its responsive range). Part of the network, not of the observation.
OBS_SCALE = np.ones(TEACHER_OBS_DIM, dtype=np.float32)
OBS_SCALE[15:18] = 0.25


def scale_teacher_obs(obs: np.ndarray) -> np.ndarray:
    """Apply the fixed input scaling; broadcasts over leading axes."""
    return obs * OBS_SCALE

CHECKPOINT_MAGIC = b"QFTC"
CHECKPOINT_VERSION = 1


@dataclass
class SACConfig:
    gamma: float = 0.99
    actor_lr: float = 3e-4
    critic_lr: float = 3e-4
    alpha_lr: float = 3e-4
    batch_size: int = 256
    polyak: float = 5e-3
    entropy_target: float = -float(ACT_DIM)
    warmup_steps: int = 10_000
    total_steps: int = 1_000_000
    buffer_capacity: int = 1_000_000
    updates_per_step: float = 1.0
    entropy_target_final: float | None = None  # anneal the target linearly to this
    n_step: int = 1             # multi-step return horizon for the critic target
    hidden: int = 64            # actor hidden width (fixed by the observation/action contract)
    critic_hidden: int | None = None  # defaults to the actor width
    huber_delta: float = 0.0    # 0: squared critic loss; >0: Huber threshold
    horizon: int = DEFAULT_HORIZON
    eval_every: int = 20_000
    eval_episodes: int = 4
    dtype: str = "float32"

    def __post_init__(self) -> None:
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must be in (0, 1)")


class ReplayBuffer:
    """FIFO ring of transitions with uniform without-replacement batches."""

    def __init__(self, capacity: int, obs_dim: int = TEACHER_OBS_DIM):
        self.capacity = capacity
        self.obs = np.empty((capacity, obs_dim), dtype=np.float32)
        self.act = np.empty((capacity, ACT_DIM), dtype=np.float32)
        self.rew = np.empty(capacity, dtype=np.float32)
        self.obs2 = np.empty((capacity, obs_dim), dtype=np.float32)
        self.done = np.empty(capacity, dtype=np.float32)
        self.idx = 0
        self.size = 0

    def add(self, obs, act, rew, obs2, done: bool) -> None:
        i = self.idx
        self.obs[i] = obs
        self.act[i] = act
        self.rew[i] = rew
        self.obs2[i] = obs2
        self.done[i] = float(done)
        self.idx = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, rng: np.random.Generator, batch: int):
        if self.size < batch:
            raise ValueError("not enough transitions in buffer")
        if self.size < 4 * batch:
            idx = rng.permutation(self.size)[:batch]
        else:
            idx = rng.integers(0, self.size, batch)
            while np.any(np.diff(np.sort(idx)) == 0):  # redraw duplicate batches
                idx = rng.integers(0, self.size, batch)
        return (self.obs[idx], self.act[idx], self.rew[idx],
                self.obs2[idx], self.done[idx])


class SACAgent:
    def __init__(self, cfg: SACConfig, rng: np.random.Generator,
                 obs_dim: int = TEACHER_OBS_DIM):
        dt = np.dtype(cfg.dtype)
        h = cfg.hidden
        hc = cfg.critic_hidden or h
        self.cfg = cfg
        self.obs_dim = obs_dim
        self.actor = MLP([obs_dim, h, h, 2 * ACT_DIM], rng, dt)
        self.critic1 = MLP([obs_dim + ACT_DIM, hc, hc, 1], rng, dt)
        self.critic2 = MLP([obs_dim + ACT_DIM, hc, hc, 1], rng, dt)
        self.target1 = self.critic1.copy()
        self.target2 = self.critic2.copy()
        self.log_alpha = np.zeros(1, dtype=dt)
        self.opt_actor = Adam(self.actor.parameters(), cfg.actor_lr)
        self.opt_critic1 = Adam(self.critic1.parameters(), cfg.critic_lr)
        self.opt_critic2 = Adam(self.critic2.parameters(), cfg.critic_lr)
        self.opt_alpha = Adam([self.log_alpha], cfg.alpha_lr)

    @property
    def alpha(self) -> float:
        return float(np.exp(self.log_alpha[0]))


def actor_heads(actor: MLP, obs: np.ndarray, want_cache: bool = False):
    """Split the actor output into mean and clamped log-std."""
    if want_cache:
        out, cache = actor.forward(obs, True)
    else:
        out, cache = actor.forward(obs), None
    mean = out[:, :ACT_DIM]
    raw = out[:, ACT_DIM:]
    log_std = np.clip(raw, LOG_STD_MIN, LOG_STD_MAX)
    return mean, log_std, raw, cache


def squash(u: np.ndarray) -> np.ndarray:
    return 0.5 * (np.tanh(u) + 1.0)


def action_log_prob(eps: np.ndarray, log_std: np.ndarray, u: np.ndarray):
    """log pi of the squashed-Gaussian action, summed over components.

    The tanh-squash correction is computed in the cancellation-free form so
    its analytic derivative (2*tanh(u)) is exact to machine precision.
    """
    base = -0.5 * eps ** 2 - log_std - _HALF_LOG_2PI
    corr = log1m_tanh_sq(u) - np.log(2.0)
    return np.sum(base - corr, axis=1)


def sample_action(actor: MLP, obs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    mean, log_std, _, _ = actor_heads(actor, obs[None].astype(actor.dtype))
    eps = rng.standard_normal(ACT_DIM)
    u = mean[0] + np.exp(log_std[0]) * eps
    return squash(u)


def deterministic_action(actor: MLP, obs: np.ndarray) -> np.ndarray:
    mean, _, _, _ = actor_heads(actor, obs[None].astype(actor.dtype))
    return squash(mean[0])


def batch_deterministic_actions(actor: MLP, obs: np.ndarray) -> np.ndarray:
    mean, _, _, _ = actor_heads(actor, obs.astype(actor.dtype))
    return squash(mean)


def critic_target_values(agent: SACAgent, obs2, rew, done, eps2) -> np.ndarray:
    """Bootstrapped target y = R + gamma^n*(1-d)*(min Q' - alpha*log pi).

    With the default n_step=1, R is the one-step reward; with n-step
    accumulation R is the discounted n-step return and obs2 the state n
    steps later. Terminal transitions never bootstrap. No gradients."""
    mean2, log_std2, _, _ = actor_heads(agent.actor, obs2)
    u2 = mean2 + np.exp(log_std2) * eps2
    t2 = np.tanh(u2)
    a2 = 0.5 * (t2 + 1.0)
    logp2 = action_log_prob(eps2, log_std2, u2)
    x2 = np.concatenate([obs2, a2], axis=1)
    q1 = agent.target1.forward(x2)[:, 0]
    q2 = agent.target2.forward(x2)[:, 0]
    qmin = np.minimum(q1, q2)
    gamma_n = agent.cfg.gamma ** agent.cfg.n_step
    return rew + gamma_n * (1.0 - done) * (qmin - agent.alpha * logp2)


def critic_loss_and_grads(critic1: MLP, critic2: MLP, obs, act, y,
                          huber_delta: float = 0.0):
    """Twin-critic regression on the shared target y.

    huber_delta 0 gives L = sum_k 0.5*mean((Q_k - y)^2); a positive delta
    switches to the Huber form, which caps the gradient of the rare huge
    termination-penalty errors at delta. Returns (loss, grads1, grads2).
    """
    x = np.concatenate([obs, act], axis=1)
    n = x.shape[0]
    q1, c1 = critic1.forward(x, True)
    q2, c2 = critic2.forward(x, True)
    d1 = q1[:, 0] - y
    d2 = q2[:, 0] - y
    if huber_delta > 0:
        def hub(d):
            a = np.abs(d)
            quad = np.minimum(a, huber_delta)
            return quad * (a - 0.5 * quad)

        def dhub(d):
            return np.clip(d, -huber_delta, huber_delta)

        loss = np.mean(hub(d1)) + np.mean(hub(d2))
        e1, e2 = dhub(d1), dhub(d2)
    else:
        loss = 0.5 * (np.mean(d1 ** 2) + np.mean(d2 ** 2))
        e1, e2 = d1, d2
    g1, _ = critic1.backward(c1, (e1 / n)[:, None])
    g2, _ = critic2.backward(c2, (e2 / n)[:, None])
    return float(loss), g1, g2


def actor_loss_and_grads(agent: SACAgent, obs, eps):
    """L = mean(alpha*log pi - min Q(s, a(eps))); returns (loss, grads, mean log pi).

    The critics are evaluated with current weights but receive no parameter
    gradients; only the input gradient with respect to the action flows back.
    """
    n = obs.shape[0]
    alpha = agent.alpha
    mean, log_std, raw, cache = actor_heads(agent.actor, obs, want_cache=True)
    std = np.exp(log_std)
    u = mean + std * eps
    t = np.tanh(u)
    a = 0.5 * (t + 1.0)
    logp = action_log_prob(eps, log_std, u)

    x = np.concatenate([obs, a], axis=1)
    q1, c1 = agent.critic1.forward(x, True)
    q2, c2 = agent.critic2.forward(x, True)
    take1 = (q1 <= q2)
    qmin = np.where(take1, q1, q2)[:, 0]
    loss = float(np.mean(alpha * logp - qmin))

    # dL/da through the selected critic's input gradient
    dq1 = np.where(take1, -1.0 / n, 0.0)
    dq2 = np.where(take1, 0.0, -1.0 / n)
    dx1 = agent.critic1.input_gradient(c1, dq1.astype(obs.dtype))
    dx2 = agent.critic2.input_gradient(c2, dq2.astype(obs.dtype))
    da = dx1[:, agent.obs_dim:] + dx2[:, agent.obs_dim:]

    one_m_t2 = 1.0 - t ** 2
    du = da * 0.5 * one_m_t2                      # da/du
    du += (alpha / n) * (2.0 * t)                 # d(-log(1-tanh^2 u))/du of log pi
    dmean = du
    dlog_std = du * (std * eps) - alpha / n       # direct d log pi / d log_std = -1
    dlog_std = dlog_std * ((raw > LOG_STD_MIN) & (raw < LOG_STD_MAX))
    dout = np.concatenate([dmean, dlog_std], axis=1)
    grads, _ = agent.actor.backward(cache, dout)
    return loss, grads, float(np.mean(logp))


def alpha_loss_and_grad(log_alpha: np.ndarray, mean_logp: float, target: float):
    """L = -log_alpha * mean(log pi + target); returns (loss, grad array)."""
    err = mean_logp + target
    loss = -float(log_alpha[0]) * err
    return loss, np.array([-err], dtype=log_alpha.dtype)


def sac_update(agent: SACAgent, batch, rng: np.random.Generator) -> dict:
    """One gradient step on critics, actor, and temperature plus a Polyak
    update of the target critics. Raises TrainingFault on non-finite losses."""
    obs, act, rew, obs2, done = batch
    dt = agent.actor.dtype
    obs = obs.astype(dt, copy=False)
    act = act.astype(dt, copy=False)
    obs2 = obs2.astype(dt, copy=False)
    n = obs.shape[0]

    eps2 = rng.standard_normal((n, ACT_DIM), dtype=dt)
    y = critic_target_values(agent, obs2, rew.astype(dt, copy=False),
                             done.astype(dt, copy=False), eps2)
    closs, g1, g2 = critic_loss_and_grads(agent.critic1, agent.critic2, obs, act, y,
                                          huber_delta=agent.cfg.huber_delta)
    agent.opt_critic1.step(agent.critic1.parameters(), g1)
    agent.opt_critic2.step(agent.critic2.parameters(), g2)

    eps = rng.standard_normal((n, ACT_DIM), dtype=dt)
    aloss, ga, mean_logp = actor_loss_and_grads(agent, obs, eps)
    agent.opt_actor.step(agent.actor.parameters(), ga)

    tloss, gt = alpha_loss_and_grad(agent.log_alpha, mean_logp,
                                    agent.cfg.entropy_target)
    agent.opt_alpha.step([agent.log_alpha], [gt])

    if not (np.isfinite(closs) and np.isfinite(aloss) and np.isfinite(tloss)):
        raise TrainingFault(
            f"non-finite SAC losses: critic={closs} actor={aloss} alpha={tloss}")

    polyak_update(agent.target1.parameters(), agent.critic1.parameters(), agent.cfg.polyak)
    polyak_update(agent.target2.parameters(), agent.critic2.parameters(), agent.cfg.polyak)
    return {"critic_loss": closs, "actor_loss": aloss, "alpha_loss": tloss,
            "alpha": agent.alpha, "mean_logp": mean_logp}


class NStepAccumulator:
    """Folds consecutive transitions into n-step tuples for the buffer.

    Each emitted tuple is (s_t, a_t, sum_{k<n'} gamma^k r_{t+k}, s_{t+n'},
    terminal-in-window) with n' = n except where an episode boundary cuts
    the window short. Timeout tails still bootstrap (done=False); the target
    then applies gamma^n instead of gamma^{n'}, a negligible bias on at most
    n-1 transitions per episode.
    """

    def __init__(self, n: int, gamma: float):
        if n < 1:
            raise ValueError("n_step must be >= 1")
        self.n = n
        self.gamma = gamma
        self.pending: list[list] = []  # [obs, act, ret, gpow]

    def push(self, obs, act, rew, obs2, terminal: bool):
        for row in self.pending:
            row[2] += row[3] * rew
            row[3] *= self.gamma
        self.pending.append([obs, act, rew, self.gamma])
        out = []
        if terminal:
            for row in self.pending:
                out.append((row[0], row[1], row[2], obs2, True))
            self.pending.clear()
        elif len(self.pending) == self.n:
            row = self.pending.pop(0)
            out.append((row[0], row[1], row[2], obs2, False))
        return out

    def flush_timeout(self, obs2):
        """Horizon reached without termination: emit bootstrapping tails."""
        out = [(row[0], row[1], row[2], obs2, False) for row in self.pending]
        self.pending.clear()
        return out


# ---------------------------------------------------------------------------
# checkpoints

@dataclass
class TeacherCheckpoint:
    """A trained actor bound to one quadrotor, stored as float32."""

    sizes: list[int]
    weights: list[np.ndarray]  # [W0, b0, W1, b1, ...] float32
    params: QuadParams
    training_steps: int
    final_eval_episode_length: float
    seed: int
    trace: dict | None = None

    def make_actor(self, dtype=np.float32) -> MLP:
        actor = MLP.__new__(MLP)
        actor.sizes = list(self.sizes)
        actor.dtype = np.dtype(dtype)
        actor.weights = [w.astype(dtype) for w in self.weights[0::2]]
        actor.biases = [b.astype(dtype) for b in self.weights[1::2]]
        return actor


def save_checkpoint(ckpt: TeacherCheckpoint, path: str | Path) -> None:
    """Binary layout: magic, version u32, layer count u32, per layer
    (n_in u32, n_out u32), then row-major float32 LE weight and bias blocks."""
    path = Path(path)
    n_layers = len(ckpt.sizes) - 1
    blob = bytearray()
    blob += CHECKPOINT_MAGIC
    blob += struct.pack("<II", CHECKPOINT_VERSION, n_layers)
    for i in range(n_layers):
        blob += struct.pack("<II", ckpt.sizes[i], ckpt.sizes[i + 1])
    for arr in ckpt.weights:
        blob += np.ascontiguousarray(arr, dtype="<f4").tobytes()
    path.write_bytes(bytes(blob))
    sidecar = {
        "params": ckpt.params.to_dict(),
        "trace": ckpt.trace,
        "training_steps": ckpt.training_steps,
        "final_eval_episode_length": ckpt.final_eval_episode_length,
        "seed": ckpt.seed,
    }
    path.with_suffix(".json").write_text(json.dumps(sidecar, indent=1))


def load_checkpoint(path: str | Path) -> TeacherCheckpoint:
    path = Path(path)
    raw = path.read_bytes()
    if raw[:4] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: bad checkpoint magic")
    version, n_layers = struct.unpack_from("<II", raw, 4)
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    off = 12
    shapes = []
    for _ in range(n_layers):
        n_in, n_out = struct.unpack_from("<II", raw, off)
        shapes.append((n_in, n_out))
        off += 8
    weights = []
    for n_in, n_out in shapes:
        w = np.frombuffer(raw, dtype="<f4", count=n_in * n_out, offset=off).reshape(n_in, n_out)
        off += 4 * n_in * n_out
        b = np.frombuffer(raw, dtype="<f4", count=n_out, offset=off)
        off += 4 * n_out
        weights.extend([w.copy(), b.copy()])
    if off != len(raw):
        raise ValueError(f"{path}: trailing bytes in checkpoint")
    sidecar = json.loads(path.with_suffix(".json").read_text())
    sizes = [shapes[0][0]] + [s[1] for s in shapes]
    return TeacherCheckpoint(
        sizes=sizes, weights=weights,
        params=QuadParams.from_dict(sidecar["params"]),
        training_steps=int(sidecar["training_steps"]),
        final_eval_episode_length=float(sidecar["final_eval_episode_length"]),
        seed=int(sidecar["seed"]),
        trace=sidecar.get("trace"))


# ---------------------------------------------------------------------------
# training loops

def evaluate_teacher(actor: MLP, params: QuadParams, episodes: int, seed: int,
                     cfg: SACConfig) -> tuple[float, float]:
    """Deterministic-policy evaluation on the task mixture with fixed seeds.
    Returns (mean episode length, mean return)."""
    lengths, returns = [], []
    for ep in range(episodes):
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, ep])))
        env = QuadEnv(params, horizon=cfg.horizon)
        env.reset(rng)
        total, steps = 0.0, 0
        while True:
            a = deterministic_action(actor, scale_teacher_obs(env.teacher_obs()))
            _, r, done, _ = env.step(a)
            total += r
            steps += 1
            if done:
                break
        lengths.append(steps)
        returns.append(total)
    return float(np.mean(lengths)), float(np.mean(returns))


def train_teacher(params: QuadParams, cfg: SACConfig, seed: int,
                  trace: dict | None = None,
                  curve_path: str | Path | None = None) -> TeacherCheckpoint:
    """Run episodic SAC on one quadrotor; fully deterministic given the seed."""
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed])))
    cfg = dataclasses.replace(cfg)  # the anneal mutates the target in place
    base_entropy_target = cfg.entropy_target
    agent = SACAgent(cfg, rng)
    buffer = ReplayBuffer(min(cfg.buffer_capacity, cfg.total_steps))
    nstep = NStepAccumulator(cfg.n_step, cfg.gamma)
    env = QuadEnv(params, horizon=cfg.horizon)
    env.reset(rng)
    tobs = scale_teacher_obs(env.teacher_obs())

    curve: list[dict] = []
    ep_return, ep_len = 0.0, 0
    train_lens: list[int] = []
    last_info: dict = {}
    update_debt = 0.0

    for step in range(cfg.total_steps):
        if step < cfg.warmup_steps:
            a = rng.uniform(0.0, 1.0, ACT_DIM)
        else:
            a = sample_action(agent.actor, tobs, rng)
        _, r, done, info = env.step(a)
        tobs2 = scale_teacher_obs(env.teacher_obs())
        for tr in nstep.push(tobs, a, r, tobs2, info["terminal"]):
            buffer.add(*tr)
        ep_return += r
        ep_len += 1
        tobs = tobs2
        if done:
            if not info["terminal"]:
                for tr in nstep.flush_timeout(tobs2):
                    buffer.add(*tr)
            train_lens.append(ep_len)
            ep_return, ep_len = 0.0, 0
            env.reset(rng)
            tobs = scale_teacher_obs(env.teacher_obs())

        if step >= cfg.warmup_steps:
            if cfg.entropy_target_final is not None:
                frac = step / max(1, cfg.total_steps - 1)
                agent.cfg.entropy_target = (
                    (1.0 - frac) * base_entropy_target
                    + frac * cfg.entropy_target_final)
            update_debt += cfg.updates_per_step
            while update_debt >= 1.0:
                update_debt -= 1.0
                last_info = sac_update(agent, buffer.sample(rng, cfg.batch_size), rng)

        if (step + 1) % cfg.eval_every == 0 or step + 1 == cfg.total_steps:
            mlen, mret = evaluate_teacher(agent.actor, params, cfg.eval_episodes,
                                          seed=seed + 77_000, cfg=cfg)
            recent = train_lens[-20:]
            curve.append({
                "step": step + 1, "eval_return": mret, "eval_episode_length": mlen,
                "train_episode_length": float(np.mean(recent)) if recent else 0.0,
                "alpha": last_info.get("alpha", float("nan")),
                "mean_logp": last_info.get("mean_logp", float("nan")),
                "critic_loss": last_info.get("critic_loss", float("nan")),
            })

    final_len = curve[-1]["eval_episode_length"] if curve else float("nan")
    if curve_path is not None:
        cols = ["step", "eval_return", "eval_episode_length",
                "train_episode_length", "alpha", "mean_logp", "critic_loss"]
        with open(curve_path, "w") as f:
            f.write(",".join(cols) + "\n")
            for row in curve:
                f.write(",".join(f"{row[c]:.6g}" for c in cols) + "\n")

    weights = [w.astype(np.float32) for w in agent.actor.parameters()]
    return TeacherCheckpoint(
        sizes=list(agent.actor.sizes), weights=weights, params=params,
        training_steps=cfg.total_steps, final_eval_episode_length=final_len,
        seed=seed, trace=trace)


def _pretrain_worker(args) -> tuple[int, bytes, str, str]:
    index, params_dict, trace, cfg_dict, seed = args
    params = QuadParams.from_dict(params_dict)
    cfg = SACConfig(**cfg_dict)
    # serialize via the checkpoint codec so the parent writes canonical bytes
    import tempfile
    with tempfile.TemporaryDirectory() as td:
        curve = Path(td) / "curve.csv"
        ckpt = train_teacher(params, cfg, seed, trace=trace, curve_path=curve)
        p = Path(td) / "ckpt.bin"
        save_checkpoint(ckpt, p)
        return (index, p.read_bytes(), p.with_suffix(".json").read_text(),
                curve.read_text())


def pretrain_fleet(fleet, cfg: SACConfig, seed: int, out_dir: str | Path,
                   workers: int = 1) -> list[Path]:
    """Train one teacher per quadrotor; the same seed is used for every run.

    Runs are isolated in spawned subprocesses (even for a single worker), so
    checkpoints are bit-identical for any worker count. Failed runs are
    reported without affecting the others.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    jobs = [(i, p.to_dict(), t.to_dict(), asdict(cfg), seed)
            for i, (p, t) in enumerate(fleet)]
    results: dict[int, tuple[bytes, str, str]] = {}
    failures: dict[int, str] = {}
    ctx = mp.get_context("spawn")
    with ProcessPoolExecutor(max_workers=max(1, workers), mp_context=ctx) as pool:
        for fut, idx in [(pool.submit(_pretrain_worker, j), j[0]) for j in jobs]:
            try:
                i, blob, sidecar, curve = fut.result()
                results[i] = (blob, sidecar, curve)
            except Exception as exc:  # per-run isolation
                failures[idx] = repr(exc)
    paths = []
    for i in sorted(results):
        blob, sidecar, curve = results[i]
        p = out_dir / f"teacher_{i:04d}.bin"
        p.write_bytes(blob)
        p.with_suffix(".json").write_text(sidecar)
        p.with_suffix(".curve.csv").write_text(curve)
        paths.append(p)
    if failures:
        (out_dir / "failures.json").write_text(json.dumps(failures, indent=1))
    return paths
