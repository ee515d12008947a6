"""Ancestral sampling of physically plausible quadrotor dynamics parameters.

Root quantities (thrust-to-weight ratio, size scale, mass-size deviation,
torque-to-inertia ratio, moment constant, motor time constants) are drawn
from simple independent marginals; everything else follows deterministically
through physical relations, so the derived parameters are correlated the way
real vehicles are. Masses are sampled uniformly in cube-root space because
mass grows cubically with size and vehicles are roughly uniform in size.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dynamics import GRAVITY, QuadParams


@dataclass
class SamplerConfig:
    t2w_range: tuple[float, float] = (1.5, 5.0)
    mass_range: tuple[float, float] = (0.02, 5.0)  # kg
    # baseline thrust curve shape (constant, linear, quadratic), normalized
    # so it is scaled by max total thrust / 4
    baseline_thrust_shape: tuple[float, float, float] = (0.038, 0.154, 0.987)
    mass_size_ratio: float = 7.90          # cbrt(kg)/m, Crazyflie reference
    ms_deviation_mean: float = -0.1
    ms_deviation_std: float = 0.1
    t2i_range: tuple[float, float] = (40.0, 1200.0)
    jzz_factor: float = 1.832
    c_m_range: tuple[float, float] = (0.005, 0.05)
    tau_up_range: tuple[float, float] = (0.03, 0.1)    # s
    tau_down_range: tuple[float, float] = (0.03, 0.3)  # s

    def validate(self) -> None:
        for name in ("t2w_range", "mass_range", "t2i_range", "c_m_range",
                     "tau_up_range", "tau_down_range"):
            lo, hi = getattr(self, name)
            if not lo < hi:
                raise ValueError(f"{name} must have lower bound < upper bound")
        if self.ms_deviation_std <= 0:
            raise ValueError("ms_deviation_std must be positive")


@dataclass
class SampleTrace:
    """Every intermediate quantity of one ancestral sample.

    Replaying the chain from the root draws (r_t2w, s, u, r_t2i, c_m,
    tau_up, tau_down) reproduces the emitted QuadParams bit-exactly.
    """

    seed: int
    r_t2w: float       # thrust-to-weight ratio
    s: float           # size-scale draw, m = s**3
    m: float           # mass, kg
    T: float           # max total thrust, N
    u: float           # Gaussian mass-size deviation draw
    s_ms: float        # reciprocal/linear deviation factor
    r_ms: float        # realized mass-size ratio cbrt(m)/l_arm
    l_arm: float       # arm length, m
    r_t2i: float       # torque-to-inertia ratio
    tau: float         # max differential torque, N*m

    def to_dict(self) -> dict:
        return dict(self.__dict__)

    @classmethod
    def from_dict(cls, d: dict) -> "SampleTrace":
        return cls(seed=int(d["seed"]), **{k: float(d[k]) for k in d if k != "seed"})


def _rng_for(seed: int, index: int | None = None) -> np.random.Generator:
    entropy = [seed] if index is None else [seed, index]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


def derive_params(cfg: SamplerConfig, r_t2w: float, s: float, u: float,
                  r_t2i: float, c_m: float, tau_up: float, tau_down: float,
                  seed: int = 0) -> tuple[QuadParams, SampleTrace]:
    """Deterministic tail of the ancestral chain, shared by sampling and replay."""
    m = s ** 3
    T = r_t2w * GRAVITY * m
    cf = tuple(c * T / 4.0 for c in cfg.baseline_thrust_shape)
    s_ms = 1.0 / (1.0 - u) if u < 0 else 1.0 + u
    r_ms = s_ms * cfg.mass_size_ratio
    l_arm = m ** (1.0 / 3.0) / r_ms
    tau = T * np.sqrt(2.0) * l_arm
    j_xx = tau / r_t2i
    j_zz = j_xx * cfg.jzz_factor
    params = QuadParams(
        mass=m, arm_length=l_arm, c_f0=cf[0], c_f1=cf[1], c_f2=cf[2],
        c_m=c_m, J_xx=j_xx, J_yy=j_xx, J_zz=j_zz,
        motor_tau_up=tau_up, motor_tau_down=tau_down)
    trace = SampleTrace(seed=seed, r_t2w=r_t2w, s=s, m=m, T=T, u=u, s_ms=s_ms,
                        r_ms=r_ms, l_arm=l_arm, r_t2i=r_t2i, tau=tau)
    return params, trace


def sample_quadrotor(seed: int, cfg: SamplerConfig | None = None,
                     _rng: np.random.Generator | None = None) -> tuple[QuadParams, SampleTrace]:
    """Draw one quadrotor by ancestral sampling; deterministic given the seed."""
    cfg = cfg or SamplerConfig()
    cfg.validate()
    rng = _rng if _rng is not None else _rng_for(seed)
    r_t2w = rng.uniform(*cfg.t2w_range)
    s = rng.uniform(cfg.mass_range[0] ** (1 / 3), cfg.mass_range[1] ** (1 / 3))
    u = rng.normal(cfg.ms_deviation_mean, cfg.ms_deviation_std)
    while u <= -1.0:  # keep the reciprocal deviation positive (p ~ 1e-19)
        u = rng.normal(cfg.ms_deviation_mean, cfg.ms_deviation_std)
    r_t2i = rng.uniform(*cfg.t2i_range)
    c_m = rng.uniform(*cfg.c_m_range)
    tau_up = rng.uniform(*cfg.tau_up_range)
    tau_down = rng.uniform(*cfg.tau_down_range)
    return derive_params(cfg, r_t2w, s, u, r_t2i, c_m, tau_up, tau_down, seed=seed)


def replay_trace(trace: SampleTrace, c_m: float, tau_up: float, tau_down: float,
                 cfg: SamplerConfig | None = None) -> QuadParams:
    """Recompute QuadParams from a trace's root draws (bit-exact).

    c_m and the motor time constants are roots sampled directly into the
    parameter tuple, so they are supplied from the paired QuadParams.
    """
    cfg = cfg or SamplerConfig()
    params, _ = derive_params(cfg, trace.r_t2w, trace.s, trace.u, trace.r_t2i,
                              c_m=c_m, tau_up=tau_up, tau_down=tau_down,
                              seed=trace.seed)
    return params


def sample_fleet(n: int, master_seed: int,
                 cfg: SamplerConfig | None = None) -> list[tuple[QuadParams, SampleTrace]]:
    """n independent quadrotors with per-index derived seeds."""
    if n < 1:
        raise ValueError("fleet size must be >= 1")
    cfg = cfg or SamplerConfig()
    out = []
    for i in range(n):
        rng = _rng_for(master_seed, i)
        out.append(sample_quadrotor(master_seed, cfg, _rng=rng))
    return out


# ---------------------------------------------------------------------------
# fleet file format: JSON array of {"params": {...}, "trace": {...}}

def save_fleet(fleet: list[tuple[QuadParams, SampleTrace]], path: str | Path) -> None:
    data = [{"params": p.to_dict(), "trace": t.to_dict()} for p, t in fleet]
    Path(path).write_text(json.dumps(data, indent=1))


def load_fleet(path: str | Path) -> list[tuple[QuadParams, SampleTrace]]:
    data = json.loads(Path(path).read_text())
    return [(QuadParams.from_dict(e["params"]), SampleTrace.from_dict(e["trace"]))
            for e in data]
