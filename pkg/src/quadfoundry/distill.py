"""Distill many per-quadrotor teachers into one recurrent student.

Each epoch rolls out a fresh batch of environments, one teacher per
environment chosen by its quadrotor. For the first `warmup_epochs` the
executed actions are the teachers'; afterwards the student flies its own
rollouts (hidden state evolved across the whole episode) while the teachers
are queried at every step, from the full state including motor speeds, for
label actions only. The student never sees motor speeds or the dynamics
parameters. Epoch data is discarded after the gradient step; there is no
aggregation of past-epoch data.

The loss is 0.5 * ||teacher_mean - student_mean||^2 averaged over masked-in
steps, which is the KL divergence between unit-variance Gaussian action
distributions up to dropped constants.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dynamics import QuadParams
from .env import DEFAULT_HORIZON, OBS_DIM, BatchEnv
from .nets import MLP, Adam, TrainingFault, clip_grad_norm
from .policy import PolicyGRU
from .sac import (TeacherCheckpoint, batch_deterministic_actions,
                  scale_teacher_obs)
from .trajectory import FigureEightConfig, LangevinConfig


@dataclass
class DistillConfig:
    epochs: int = 1000
    warmup_epochs: int = 10
    horizon: int = DEFAULT_HORIZON
    envs_per_epoch: int = 64
    truncation: int | None = None   # None: BPTT over the full horizon
    lr: float = 1e-3
    grad_clip: float = 1.0
    hidden: int = 16
    eval_episodes: int = 8
    eval_every: int = 1
    dtype: str = "float32"

    def __post_init__(self) -> None:
        if self.warmup_epochs >= self.epochs:
            raise ValueError("warmup_epochs must be < epochs")
        if self.truncation is not None and self.truncation < 1:
            raise ValueError("truncation must be >= 1")


@dataclass
class DistillBatch:
    """Aligned rollout sequences across environments."""

    observations: np.ndarray   # (T, B, 22)
    labels: np.ndarray         # (T, B, 4) teacher mean actions
    executed: np.ndarray       # (T, B, 4) actions applied to the env
    mask: np.ndarray           # (T, B) 1.0 while the row was live

    @property
    def steps(self) -> int:
        return self.observations.shape[0]


def mse_loss(student_actions: np.ndarray, teacher_actions: np.ndarray,
             mask: np.ndarray) -> float:
    """0.5 * sum over masked steps of ||mu_T - mu_S||^2, / number of steps."""
    diff = (student_actions - teacher_actions) * mask[..., None]
    denom = max(float(mask.sum()), 1.0)
    return float(0.5 * np.sum(diff * diff) / denom)


def mse_loss_and_grad(student_actions: np.ndarray, teacher_actions: np.ndarray,
                      mask: np.ndarray) -> tuple[float, np.ndarray]:
    diff = (student_actions - teacher_actions) * mask[..., None]
    denom = max(float(mask.sum()), 1.0)
    loss = float(0.5 * np.sum(diff * diff) / denom)
    return loss, diff / denom


def rollout_epoch(student: PolicyGRU, teacher_actors: list[MLP],
                  assignment: np.ndarray, params_list: list[QuadParams],
                  cfg: DistillConfig, mode: str, rng: np.random.Generator,
                  langevin: LangevinConfig | None = None) -> DistillBatch:
    """Roll out one epoch batch.

    assignment[i] is the teacher index flown by environment i;
    params_list[assignment[i]] are that environment's dynamics.
    mode "warmup" executes the teacher labels, "onpolicy" the student.
    """
    if mode not in ("warmup", "onpolicy"):
        raise ValueError(f"unknown rollout mode {mode!r}")
    b = len(assignment)
    env = BatchEnv([params_list[j] for j in assignment], horizon=cfg.horizon,
                   langevin=langevin, task_mode="mixture")
    obs = env.reset(rng)
    groups = {j: np.flatnonzero(assignment == j) for j in np.unique(assignment)}

    T = cfg.horizon
    obs_seq = np.zeros((T, b, OBS_DIM), dtype=np.float32)
    labels = np.zeros((T, b, 4), dtype=np.float32)
    executed = np.zeros((T, b, 4), dtype=np.float32)
    mask = np.zeros((T, b), dtype=np.float32)
    h = student.reset_hidden(b)

    for t in range(T):
        tobs = scale_teacher_obs(env.teacher_obs())
        lab = np.empty((b, 4), dtype=np.float32)
        for j, idx in groups.items():
            lab[idx] = batch_deterministic_actions(teacher_actors[j], tobs[idx])
        if mode == "warmup":
            act = lab.astype(np.float64)
        else:
            act_s, h = student.step(obs, h)
            act = act_s.astype(np.float64)
        obs_seq[t] = obs
        labels[t] = lab
        executed[t] = act
        mask[t] = env.active
        obs, _, _, _ = env.step(act, rng)
        if not env.active.any():
            t_last = t + 1
            return DistillBatch(obs_seq[:t_last], labels[:t_last],
                                executed[:t_last], mask[:t_last])
    return DistillBatch(obs_seq, labels, executed, mask)


def bptt_update(student: PolicyGRU, batch: DistillBatch, opt: Adam,
                cfg: DistillConfig) -> float:
    """One truncated-BPTT gradient step on the batch. Returns the loss."""
    if batch.mask.sum() == 0:
        return 0.0
    actions, _, caches = student.forward_sequence(batch.observations, want_cache=True)
    loss, dact = mse_loss_and_grad(actions, batch.labels, batch.mask)
    if not np.isfinite(loss):
        bad = np.flatnonzero(~np.isfinite(
            ((actions - batch.labels) ** 2).sum(axis=(0, 2))))
        raise TrainingFault(f"non-finite distillation loss; sequences {bad.tolist()}")
    grads = student.backward_sequence(caches, dact, truncation=cfg.truncation)
    clip_grad_norm(grads, cfg.grad_clip)
    opt.step(student.parameters(), grads)
    return loss


def evaluate_student(student: PolicyGRU, params_list: list[QuadParams],
                     episodes: int, seed: int, horizon: int = DEFAULT_HORIZON,
                     task_mode: str = "mixture",
                     fig8: FigureEightConfig | None = None):
    """Deterministic fixed-seed evaluation.

    Runs `episodes` rollouts per quadrotor (all in one lockstep batch) and
    returns (lengths (n,), rmse (n,)) where rmse is the position RMSE versus
    the reference over the lived portion of each episode.
    """
    reps = [p for p in params_list for _ in range(episodes)]
    env = BatchEnv(reps, horizon=horizon, task_mode=task_mode, fig8=fig8)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, 9999])))
    obs = env.reset(rng)
    b = len(reps)
    h = student.reset_hidden(b)
    lengths = np.full(b, horizon, dtype=int)
    sq_sum = np.zeros(b)
    n_steps = np.zeros(b, dtype=int)
    for t in range(horizon):
        act, h = student.step(obs, h)
        obs, _, done, active_before = env.step(act.astype(np.float64), rng)
        lengths[done & active_before] = t + 1
        err = np.linalg.norm(env.pos - env.ref_p, axis=1)
        sq_sum += np.where(active_before, err ** 2, 0.0)
        n_steps += active_before.astype(int)
        if not env.active.any():
            break
    rmse = np.sqrt(sq_sum / np.maximum(n_steps, 1))
    return lengths, rmse


def distill(train_pairs: list[tuple[QuadParams, TeacherCheckpoint]],
            holdout_params: list[QuadParams], cfg: DistillConfig, seed: int,
            curve_path: str | Path | None = None,
            langevin: LangevinConfig | None = None,
            log: bool = False) -> tuple[PolicyGRU, list[dict]]:
    """Full meta-imitation loop: warm-up epochs from teacher rollouts, then
    on-policy epochs, a single gradient step per epoch, per-epoch held-out
    evaluation. Deterministic given the seed."""
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, 31337])))
    student = PolicyGRU(cfg.hidden, rng=rng, dtype=cfg.dtype)
    opt = Adam(student.parameters(), cfg.lr)
    params_list = [p for p, _ in train_pairs]
    teacher_actors = [c.make_actor() for _, c in train_pairs]
    curve: list[dict] = []
    faults = 0
    for epoch in range(cfg.epochs):
        mode = "warmup" if epoch < cfg.warmup_epochs else "onpolicy"
        assignment = rng.integers(0, len(train_pairs), cfg.envs_per_epoch)
        batch = rollout_epoch(student, teacher_actors, assignment, params_list,
                              cfg, mode, rng, langevin=langevin)
        try:
            loss = bptt_update(student, batch, opt, cfg)
            faults = 0
        except TrainingFault:
            faults += 1
            if faults >= 3:
                raise
            continue
        row = {"epoch": epoch, "mode": mode, "loss": loss}
        if holdout_params and epoch % cfg.eval_every == 0:
            lengths, rmse = evaluate_student(
                student, holdout_params,
                max(1, cfg.eval_episodes // max(1, len(holdout_params))),
                seed=seed, horizon=cfg.horizon)
            row["holdout_episode_length"] = float(np.mean(lengths))
            row["holdout_rmse"] = float(np.mean(rmse))
        curve.append(row)
        if log:
            msg = f"epoch {epoch:4d} [{mode}] loss {loss:.5f}"
            if "holdout_episode_length" in row:
                msg += (f"  len {row['holdout_episode_length']:6.1f}"
                        f"  rmse {row['holdout_rmse']:.3f}")
            print(msg, flush=True)
    if curve_path is not None:
        keys = ["epoch", "mode", "loss", "holdout_episode_length", "holdout_rmse"]
        with open(curve_path, "w") as f:
            f.write(",".join(keys) + "\n")
            for row in curve:
                f.write(",".join(str(row.get(k, "")) for k in keys) + "\n")
    return student, curve
