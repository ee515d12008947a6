"""Reference trajectories: null, second-order Langevin walks, Lissajous figure-eights.

Training references are deliberately slow and smooth; the stationary speed of
the default Langevin process stays well inside the 2 m/s error-velocity
termination bound. The figure-eight is the evaluation trajectory: it holds the
start point during the ramp window, then runs the periodic Lissajous pattern
so that exactly one loop completes every `period` seconds.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


@dataclass
class ReferenceState:
    position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def copy(self) -> "ReferenceState":
        return ReferenceState(self.position.copy(), self.velocity.copy())


@dataclass
class LangevinConfig:
    stiffness: float = 1.0      # 1/s^2, spring pull toward the origin
    damping: float = 1.0        # 1/s
    noise_scale: float = 0.4    # m/s^(3/2)
    position_clamp: float = 2.0  # m, componentwise

    def validate(self) -> None:
        if not (self.stiffness > 0 and self.damping > 0 and self.noise_scale >= 0):
            raise ValueError("Langevin coefficients must be positive")


def langevin_step(ref: ReferenceState, cfg: LangevinConfig, dt: float,
                  rng: np.random.Generator) -> ReferenceState:
    """One Euler-Maruyama step of the damped-spring random walk, per axis."""
    p, v = ref.position, ref.velocity
    xi = rng.standard_normal(3)
    v_new = v + (-cfg.damping * v - cfg.stiffness * p) * dt \
        + cfg.noise_scale * math.sqrt(dt) * xi
    p_new = p + v * dt
    clipped = np.clip(p_new, -cfg.position_clamp, cfg.position_clamp)
    v_new = np.where(clipped == p_new, v_new, 0.0)
    return ReferenceState(clipped, v_new)


class NullTrajectory:
    """The all-zeros reference: position control to the origin."""

    def reset(self) -> ReferenceState:
        return ReferenceState()

    def step(self, ref: ReferenceState, dt: float) -> ReferenceState:
        return ReferenceState()


class LangevinTrajectory:
    """Stateful wrapper seeding the walk at a start position."""

    def __init__(self, cfg: LangevinConfig, rng: np.random.Generator,
                 start: np.ndarray | None = None):
        cfg.validate()
        self.cfg = cfg
        self.rng = rng
        self.start = np.zeros(3) if start is None else np.asarray(start, dtype=float)

    def reset(self) -> ReferenceState:
        return ReferenceState(self.start.copy(), np.zeros(3))

    def step(self, ref: ReferenceState, dt: float) -> ReferenceState:
        return langevin_step(ref, self.cfg, dt, self.rng)


def sample_task(rng: np.random.Generator, cfg: LangevinConfig | None = None,
                start: np.ndarray | None = None):
    """Null trajectory with probability 0.5, otherwise a fresh Langevin walk
    seeded at the vehicle's initial position."""
    if rng.random() < 0.5:
        return NullTrajectory()
    return LangevinTrajectory(cfg or LangevinConfig(), rng, start)


# ---------------------------------------------------------------------------
# figure-eight

@dataclass
class FigureEightConfig:
    period: float = 10.0
    amplitude_x: float = 1.0
    amplitude_y: float = 0.5
    ramp: float = 1.0

    def validate(self) -> None:
        if self.period <= 0:
            raise ValueError("period must be positive")
        if self.ramp < 0:
            raise ValueError("ramp must be non-negative")


def lissajous_figure_eight(period: float, amplitudes: tuple[float, float],
                           ramp: float, t: float) -> ReferenceState:
    """Figure-eight reference at time t, starting from hover at the origin.

    The pattern holds the origin for the first `ramp` seconds while the
    amplitude envelope rises, then runs sin(2*pi*t'/period) on x against
    sin(4*pi*t'/period) on y with t' = t - ramp, so the vehicle is back at
    the start exactly at t = period + ramp and every period after.
    """
    if period <= 0:
        raise ValueError("period must be positive")
    if t < 0:
        raise ValueError("t must be non-negative")
    ax, ay = amplitudes
    scale = 1.0 if ramp == 0 else min(t / ramp, 1.0)
    tp = max(0.0, t - ramp)
    wx = 2.0 * math.pi / period
    wy = 4.0 * math.pi / period
    pos = np.array([ax * math.sin(wx * tp) * scale,
                    ay * math.sin(wy * tp) * scale,
                    0.0])
    if t < ramp:
        vel = np.zeros(3)  # t' pinned at 0 and sin(0) = 0: envelope term vanishes
    else:
        vel = np.array([ax * wx * math.cos(wx * tp),
                        ay * wy * math.cos(wy * tp),
                        0.0])
    return ReferenceState(pos, vel)


class FigureEightTrajectory:
    def __init__(self, cfg: FigureEightConfig):
        cfg.validate()
        self.cfg = cfg
        self.t = 0.0

    def reset(self) -> ReferenceState:
        self.t = 0.0
        return self.at(0.0)

    def at(self, t: float) -> ReferenceState:
        c = self.cfg
        return lissajous_figure_eight(c.period, (c.amplitude_x, c.amplitude_y), c.ramp, t)

    def step(self, ref: ReferenceState, dt: float) -> ReferenceState:
        self.t += dt
        return self.at(self.t)


def write_trajectory_csv(path: str | Path, rows) -> None:
    """rows: iterable of (t, ReferenceState)."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["t", "px", "py", "pz", "vx", "vy", "vz"])
        for t, ref in rows:
            w.writerow([f"{t:.6f}"] + [f"{x:.9g}" for x in ref.position]
                       + [f"{x:.9g}" for x in ref.velocity])
