"""Rigid-body quadrotor dynamics with quadratic rotor thrust and asymmetric motor lag.

Model: world-frame translation, body-frame rotation with diagonal inertia,
no aerodynamic drag, no ground plane. Four rotors in a symmetric X layout:

    motor  azimuth  spin (top view)  yaw torque sign
      0      45 deg      CW               -
      1     135 deg      CCW              +
      2     225 deg      CW               -
      3     315 deg      CCW              +

Azimuths are measured in the body frame (x forward, y left, z up), so each
rotor sits at ``l_arm * (cos az, sin az, 0)`` and the per-axis moment arm is
``l_arm / sqrt(2)``. With thrusts f0..f3 the body torque is

    tau_x = l_arm/sqrt(2) * ( f0 + f1 - f2 - f3)
    tau_y = l_arm/sqrt(2) * (-f0 + f1 + f2 - f3)
    tau_z = c_m          * (-f0 + f1 - f2 + f3)

Quaternions are scalar-first (w, x, y, z) and rotate body vectors into the
world frame; they are renormalized after every integration step.

All functions are pure and operate on value types, so any number of workers
may call them concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

GRAVITY = 9.81

# per-axis moment arm factor for the 45-degree rotor azimuths
_SQ2H = math.sqrt(0.5)


class SimulationFault(RuntimeError):
    """Raised when integration produces non-finite state components."""


@dataclass
class QuadParams:
    """Dynamics parameters of one quadrotor (SI units).

    ``c_f0 + c_f1*u + c_f2*u**2`` gives a single rotor's thrust in newtons
    for a normalized command ``u`` in [0, 1]; the same curve applies to all
    four rotors. ``c_m`` is the yaw torque per newton of rotor thrust.
    """

    mass: float
    arm_length: float
    c_f0: float
    c_f1: float
    c_f2: float
    c_m: float
    J_xx: float
    J_yy: float
    J_zz: float
    motor_tau_up: float
    motor_tau_down: float

    def validate(self) -> None:
        if not (self.mass > 0 and self.arm_length > 0):
            raise ValueError("mass and arm_length must be positive")
        if not (self.J_xx > 0 and self.J_yy > 0 and self.J_zz > 0):
            raise ValueError("inertia entries must be positive")
        if self.J_xx != self.J_yy:
            raise ValueError("roll/pitch inertia must be symmetric (J_xx == J_yy)")
        if not self.c_f2 > 0:
            raise ValueError("quadratic thrust coefficient must be positive")
        if self.c_f1 < 0 and self.c_f1 + 2 * self.c_f2 <= 0:
            raise ValueError("thrust curve must be strictly increasing on [0, 1]")
        if not (self.motor_tau_up > 0 and self.motor_tau_down > 0):
            raise ValueError("motor time constants must be positive")

    def to_dict(self) -> dict:
        return {
            "mass": self.mass,
            "arm_length": self.arm_length,
            "c_f0": self.c_f0,
            "c_f1": self.c_f1,
            "c_f2": self.c_f2,
            "c_m": self.c_m,
            "J_xx": self.J_xx,
            "J_yy": self.J_yy,
            "J_zz": self.J_zz,
            "motor_tau_up": self.motor_tau_up,
            "motor_tau_down": self.motor_tau_down,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "QuadParams":
        return cls(**{k: float(d[k]) for k in (
            "mass", "arm_length", "c_f0", "c_f1", "c_f2", "c_m",
            "J_xx", "J_yy", "J_zz", "motor_tau_up", "motor_tau_down")})

    def with_mass(self, mass: float) -> "QuadParams":
        if mass <= 0:
            raise ValueError(f"non-physical mass {mass}")
        return replace(self, mass=mass)


@dataclass
class QuadState:
    """Simulator ground-truth state.

    position/linear_velocity are world-frame, angular_velocity is body-frame,
    orientation is the scalar-first world-from-body unit quaternion.
    prev_action and motor_speeds are normalized to [0, 1].
    """

    position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    orientation: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))
    linear_velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    angular_velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    prev_action: np.ndarray = field(default_factory=lambda: np.zeros(4))
    motor_speeds: np.ndarray = field(default_factory=lambda: np.zeros(4))

    def copy(self) -> "QuadState":
        return QuadState(
            self.position.copy(), self.orientation.copy(),
            self.linear_velocity.copy(), self.angular_velocity.copy(),
            self.prev_action.copy(), self.motor_speeds.copy())

    def to_dict(self) -> dict:
        return {
            "position": self.position.tolist(),
            "orientation": self.orientation.tolist(),
            "linear_velocity": self.linear_velocity.tolist(),
            "angular_velocity": self.angular_velocity.tolist(),
            "prev_action": self.prev_action.tolist(),
            "motor_speeds": self.motor_speeds.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "QuadState":
        return cls(
            np.asarray(d["position"], dtype=float),
            np.asarray(d["orientation"], dtype=float),
            np.asarray(d["linear_velocity"], dtype=float),
            np.asarray(d["angular_velocity"], dtype=float),
            np.asarray(d["prev_action"], dtype=float),
            np.asarray(d["motor_speeds"], dtype=float),
        )


@dataclass
class SimConfig:
    dt: float = 0.01
    integrator: str = "rk4"  # "rk4" | "euler"
    gravity: float = GRAVITY

    def __post_init__(self) -> None:
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.integrator not in ("rk4", "euler"):
            raise ValueError(f"unknown integrator {self.integrator!r}")


def clamp_command(u) -> np.ndarray:
    """Normalize a rotor command to a clipped float 4-vector in [0, 1]."""
    return np.clip(np.asarray(u, dtype=float), 0.0, 1.0)


# ---------------------------------------------------------------------------
# quaternion helpers (broadcast over leading axes; q has shape (..., 4))

def quat_normalize(q: np.ndarray) -> np.ndarray:
    return q / np.linalg.norm(q, axis=-1, keepdims=True)


def quat_to_rotmat(q: np.ndarray) -> np.ndarray:
    """Rotation matrix (..., 3, 3) taking body vectors to world vectors."""
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    m = np.empty(q.shape[:-1] + (3, 3))
    m[..., 0, 0] = 1 - 2 * (y * y + z * z)
    m[..., 0, 1] = 2 * (x * y - w * z)
    m[..., 0, 2] = 2 * (x * z + w * y)
    m[..., 1, 0] = 2 * (x * y + w * z)
    m[..., 1, 1] = 1 - 2 * (x * x + z * z)
    m[..., 1, 2] = 2 * (y * z - w * x)
    m[..., 2, 0] = 2 * (x * z - w * y)
    m[..., 2, 1] = 2 * (y * z + w * x)
    m[..., 2, 2] = 1 - 2 * (x * x + y * y)
    return m


def quat_rotate(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rotate body vectors v (..., 3) into the world frame."""
    qv = q[..., 1:]
    w = q[..., :1]
    t = 2.0 * np.cross(qv, v)
    return v + w * t + np.cross(qv, t)


def quat_derivative(q: np.ndarray, omega: np.ndarray) -> np.ndarray:
    """dq/dt = 0.5 * q (x) (0, omega) for body angular rate omega."""
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    p, r, s = omega[..., 0], omega[..., 1], omega[..., 2]
    dq = np.empty_like(q)
    dq[..., 0] = 0.5 * (-x * p - y * r - z * s)
    dq[..., 1] = 0.5 * (w * p + y * s - z * r)
    dq[..., 2] = 0.5 * (w * r + z * p - x * s)
    dq[..., 3] = 0.5 * (w * s + x * r - y * p)
    return dq


def quat_from_axis_angle(axis: np.ndarray, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    half = 0.5 * angle
    return np.concatenate(([math.cos(half)], math.sin(half) * axis))


# ---------------------------------------------------------------------------
# model

def thrust_curve(params: QuadParams, u):
    """Per-motor thrust in N for a normalized command u in [0, 1]."""
    return params.c_f0 + params.c_f1 * u + params.c_f2 * np.square(u)


def hover_command(params: QuadParams, gravity: float = GRAVITY) -> float:
    """The command u_h in (0, 1) with f(u_h) = m*g/4, from the quadratic formula."""
    target = params.mass * gravity / 4.0
    disc = params.c_f1 ** 2 - 4.0 * params.c_f2 * (params.c_f0 - target)
    if disc < 0:
        raise ValueError("thrust curve cannot reach hover thrust")
    u = (-params.c_f1 + math.sqrt(disc)) / (2.0 * params.c_f2)
    if not 0.0 <= u <= 1.0:
        raise ValueError(f"hover command {u:.4f} outside [0, 1]")
    return u


def motor_lag_step(motor_speeds: np.ndarray, command: np.ndarray,
                   params: QuadParams, dt: float) -> np.ndarray:
    """Exact first-order lag toward the command over one dt.

    The time constant is motor_tau_up while spinning up (command above the
    current speed) and motor_tau_down while spinning down.
    """
    tau = np.where(command > motor_speeds, params.motor_tau_up, params.motor_tau_down)
    new = command + (motor_speeds - command) * np.exp(-dt / tau)
    return np.clip(new, 0.0, 1.0)


def _rigid_body_derivative(position, orientation, velocity, omega,
                           thrusts, params, gravity: float):
    """Time derivative of (p, q, v, omega) for fixed rotor thrusts.

    Broadcasts over leading axes: inputs are either plain 1-D (one vehicle)
    or stacked along axis 0 with `params` a struct-of-arrays. The thrust
    direction is the rotation matrix's third column, written out directly.
    """
    f0, f1, f2, f3 = thrusts[..., 0], thrusts[..., 1], thrusts[..., 2], thrusts[..., 3]
    s = (f0 + f1 + f2 + f3) / params.mass
    qw, qx, qy, qz = (orientation[..., 0], orientation[..., 1],
                      orientation[..., 2], orientation[..., 3])
    accel = np.empty_like(velocity)
    accel[..., 0] = 2.0 * (qx * qz + qw * qy) * s
    accel[..., 1] = 2.0 * (qy * qz - qw * qx) * s
    accel[..., 2] = (1.0 - 2.0 * (qx * qx + qy * qy)) * s - gravity

    arm = params.arm_length * _SQ2H
    tau_x = arm * ((f0 + f1) - (f2 + f3))       # roll signs (+ + - -)
    tau_y = arm * ((f1 + f2) - (f0 + f3))       # pitch signs (- + + -)
    tau_z = params.c_m * ((f1 + f3) - (f0 + f2))  # yaw signs (- + - +)

    jxx, jyy, jzz = params.J_xx, params.J_yy, params.J_zz
    wx, wy, wz = omega[..., 0], omega[..., 1], omega[..., 2]
    domega = np.empty_like(omega)
    domega[..., 0] = (tau_x - (jzz - jyy) * wy * wz) / jxx
    domega[..., 1] = (tau_y - (jxx - jzz) * wz * wx) / jyy
    domega[..., 2] = (tau_z - (jyy - jxx) * wx * wy) / jzz

    return velocity, quat_derivative(orientation, omega), accel, domega


def dynamics_derivative(state: QuadState, params: QuadParams,
                        gravity: float = GRAVITY,
                        motor_scale: np.ndarray | None = None):
    """Time derivative of (position, orientation, velocity, angular velocity).

    motor_scale optionally multiplies each rotor's thrust (used to model a
    swapped propeller); None means all ones.
    """
    thrusts = thrust_curve(params, state.motor_speeds)
    if motor_scale is not None:
        thrusts = thrusts * motor_scale
    return _rigid_body_derivative(
        state.position, state.orientation, state.linear_velocity,
        state.angular_velocity, thrusts, params, gravity)


def integrate_step(state: QuadState, params: QuadParams, action,
                   cfg: SimConfig, motor_scale: np.ndarray | None = None) -> QuadState:
    """Advance the state one control step.

    The motor lag is applied first as an exact exponential update; the rotor
    speeds (and therefore thrusts) are held constant while the rigid body is
    integrated over dt with the configured integrator. The quaternion is
    renormalized and prev_action is replaced by the clamped command.
    """
    u = clamp_command(action)
    motor = motor_lag_step(state.motor_speeds, u, params, cfg.dt)
    thrusts = thrust_curve(params, motor)
    if motor_scale is not None:
        thrusts = thrusts * motor_scale

    def deriv(p, q, v, w):
        return _rigid_body_derivative(p, q, v, w, thrusts, params, cfg.gravity)

    p, q, v, w = state.position, state.orientation, state.linear_velocity, state.angular_velocity
    dt = cfg.dt
    if cfg.integrator == "euler":
        dp, dq, dv, dw = deriv(p, q, v, w)
        p, q, v, w = p + dt * dp, q + dt * dq, v + dt * dv, w + dt * dw
    else:
        k1 = deriv(p, q, v, w)
        k2 = deriv(p + 0.5 * dt * k1[0], q + 0.5 * dt * k1[1],
                   v + 0.5 * dt * k1[2], w + 0.5 * dt * k1[3])
        k3 = deriv(p + 0.5 * dt * k2[0], q + 0.5 * dt * k2[1],
                   v + 0.5 * dt * k2[2], w + 0.5 * dt * k2[3])
        k4 = deriv(p + dt * k3[0], q + dt * k3[1], v + dt * k3[2], w + dt * k3[3])
        sixth = dt / 6.0
        p = p + sixth * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        q = q + sixth * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        v = v + sixth * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
        w = w + sixth * (k1[3] + 2 * k2[3] + 2 * k3[3] + k4[3])

    if not (np.isfinite(p).all() and np.isfinite(q).all()
            and np.isfinite(v).all() and np.isfinite(w).all()):
        raise SimulationFault("non-finite state after integration step")
    q = quat_normalize(q)
    return QuadState(p, q, v, w, u, motor)
