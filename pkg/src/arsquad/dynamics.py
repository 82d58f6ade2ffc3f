"""Minimal 6-DOF quadrotor plant.

Drag-free rigid body with four rotors in "+" configuration (1 front, 2 right,
3 rear, 4 left; rotors 1 and 3 spin clockwise). Euler angles follow the
Z-Y-X (yaw-pitch-roll) convention, body rates are expressed in the body frame
and integration is classical RK4 at a fixed step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

GIMBAL_EPS = 1e-3
PITCH_LIMIT = math.pi / 2 - GIMBAL_EPS

# done reasons emitted by the plant guards
NUMERIC_GUARD = "NumericGuard"
GIMBAL_GUARD = "GimbalGuard"


class GimbalLockError(ValueError):
    """Raised when a rotation is requested too close to pitch = +-90 deg."""


def _vec3(value) -> np.ndarray:
    arr = np.array(value, dtype=np.float64).reshape(3)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class QuadState:
    """Rigid-body state. Arrays are read-only so states behave as values."""

    position: np.ndarray = field(default_factory=lambda: _vec3((0.0, 0.0, 0.0)))
    velocity: np.ndarray = field(default_factory=lambda: _vec3((0.0, 0.0, 0.0)))
    euler: np.ndarray = field(default_factory=lambda: _vec3((0.0, 0.0, 0.0)))
    body_rates: np.ndarray = field(default_factory=lambda: _vec3((0.0, 0.0, 0.0)))
    time: float = 0.0

    def __post_init__(self) -> None:
        for name in ("position", "velocity", "euler", "body_rates"):
            object.__setattr__(self, name, _vec3(getattr(self, name)))
        object.__setattr__(self, "time", float(self.time))

    def as_vector(self) -> list[float]:
        """Flat ``[x y z vx vy vz phi theta psi p q r]`` as Python floats."""
        return [
            *self.position.tolist(),
            *self.velocity.tolist(),
            *self.euler.tolist(),
            *self.body_rates.tolist(),
        ]

    @classmethod
    def from_vector(cls, y, time: float) -> "QuadState":
        return cls(y[0:3], y[3:6], y[6:9], y[9:12], time)

    def is_finite(self) -> bool:
        return bool(math.isfinite(self.time) and all(math.isfinite(v) for v in self.as_vector()))


@dataclass(frozen=True)
class RotorCommand:
    """Rotor speeds s1..s4 in rev/s."""

    speeds: np.ndarray

    def __post_init__(self) -> None:
        arr = np.array(self.speeds, dtype=np.float64).reshape(4)
        arr.flags.writeable = False
        object.__setattr__(self, "speeds", arr)


@dataclass(frozen=True)
class PlantParams:
    mass: float = 0.5
    gravity: float = 9.81
    arm_length: float = 0.175
    inertia_diag: tuple[float, float, float] = (4.86e-3, 4.86e-3, 8.80e-3)
    k_thrust: float = 3.0e-5
    k_torque: float = 7.5e-7
    speed_min: float = 0.0
    speed_max: float = 900.0
    dt: float = 0.02

    def __post_init__(self) -> None:
        object.__setattr__(self, "inertia_diag", tuple(float(v) for v in self.inertia_diag))
        scalars = (self.mass, self.gravity, self.arm_length, self.k_thrust, self.k_torque, self.dt)
        if len(self.inertia_diag) != 3:
            raise ValueError("inertia_diag must have three entries")
        if not all(math.isfinite(v) and v > 0 for v in (*scalars, *self.inertia_diag)):
            raise ValueError("plant parameters must be finite and strictly positive")
        if not self.dt <= 0.1:
            raise ValueError(f"dt must lie in (0, 0.1], got {self.dt}")
        if not (0 <= self.speed_min < self.speed_max and math.isfinite(self.speed_max)):
            raise ValueError("rotor speed bounds must satisfy 0 <= min < max < inf")

    @property
    def hover_speed(self) -> float:
        """Rotor speed at which the four rotors together carry the weight."""
        return math.sqrt(self.mass * self.gravity / (4.0 * self.k_thrust))


def _check_gimbal(theta: float) -> None:
    if not abs(theta) < PITCH_LIMIT:
        raise GimbalLockError(f"pitch {theta!r} rad is within {GIMBAL_EPS} rad of +-pi/2")


def _rotation(phi: float, theta: float, psi: float) -> list[list[float]]:
    cf, sf = math.cos(phi), math.sin(phi)
    ct, st = math.cos(theta), math.sin(theta)
    cp, sp = math.cos(psi), math.sin(psi)
    return [
        [cp * ct, cp * st * sf - sp * cf, cp * st * cf + sp * sf],
        [sp * ct, sp * st * sf + cp * cf, sp * st * cf - cp * sf],
        [-st, ct * sf, ct * cf],
    ]


def body_to_earth(euler) -> np.ndarray:
    """Rotation R = Rz(psi) Ry(theta) Rx(phi) taking body vectors to the earth frame."""
    phi, theta, psi = (float(v) for v in euler)
    _check_gimbal(theta)
    return np.array(_rotation(phi, theta, psi))


def earth_to_body(euler) -> np.ndarray:
    return body_to_earth(euler).T.copy()


def _forces(s1: float, s2: float, s3: float, s4: float, params: PlantParams):
    q1, q2, q3, q4 = s1 * s1, s2 * s2, s3 * s3, s4 * s4
    kf, km, arm = params.k_thrust, params.k_torque, params.arm_length
    thrust = kf * (q1 + q2 + q3 + q4)
    torque = (arm * kf * (q4 - q2), arm * kf * (q1 - q3), km * (-q1 + q2 - q3 + q4))
    return thrust, torque


def rotor_forces(cmd: RotorCommand, params: PlantParams) -> tuple[float, np.ndarray]:
    """Net body-z thrust (N) and body torque (N m) for a rotor command."""
    s = cmd.speeds
    if np.any(s < params.speed_min) or np.any(s > params.speed_max):
        raise ValueError(f"rotor speeds {s.tolist()} outside [{params.speed_min}, {params.speed_max}]")
    thrust, torque = _forces(*s.tolist(), params)
    return thrust, np.array(torque)


def _derivative(y, thrust, torque, params: PlantParams):
    _, _, _, vx, vy, vz, phi, theta, psi, p, q, r = y
    m = params.mass
    ix, iy, iz = params.inertia_diag
    cf, sf = math.cos(phi), math.sin(phi)
    ct, st = math.cos(theta), math.sin(theta)
    cp, sp = math.cos(psi), math.sin(psi)

    # earth-frame acceleration: third column of R scaled by thrust/m
    a = thrust / m
    ax = a * (cp * st * cf + sp * sf)
    ay = a * (sp * st * cf - cp * sf)
    az = a * (ct * cf) - params.gravity

    tt = st / ct
    dphi = p + (sf * q + cf * r) * tt
    dtheta = cf * q - sf * r
    dpsi = (sf * q + cf * r) / ct

    # I w_dot = tau - w x (I w), diagonal inertia
    dp = (torque[0] - (iz - iy) * q * r) / ix
    dq = (torque[1] - (ix - iz) * r * p) / iy
    dr = (torque[2] - (iy - ix) * p * q) / iz
    return (vx, vy, vz, ax, ay, az, dphi, dtheta, dpsi, dp, dq, dr)


def integrate(y: list[float], speeds, params: PlantParams) -> list[float]:
    """One RK4 step on the flat 12-vector; rotor speeds are held constant."""
    thrust, torque = _forces(*speeds, params)
    h = params.dt
    half = 0.5 * h
    k1 = _derivative(y, thrust, torque, params)
    k2 = _derivative([a + half * b for a, b in zip(y, k1)], thrust, torque, params)
    k3 = _derivative([a + half * b for a, b in zip(y, k2)], thrust, torque, params)
    k4 = _derivative([a + h * b for a, b in zip(y, k3)], thrust, torque, params)
    sixth = h / 6.0
    return [
        a + sixth * (b1 + 2.0 * b2 + 2.0 * b3 + b4)
        for a, b1, b2, b3, b4 in zip(y, k1, k2, k3, k4)
    ]


def guard_reason(y, time: float) -> str | None:
    if not (math.isfinite(time) and all(math.isfinite(v) for v in y)):
        return NUMERIC_GUARD
    if not abs(y[7]) < PITCH_LIMIT:
        return GIMBAL_GUARD
    return None


def step_dynamics(
    state: QuadState, cmd: RotorCommand, params: PlantParams
) -> tuple[QuadState, str | None]:
    """Advance the plant by one ``params.dt``.

    Returns the next state and ``None``, or a guard reason when the step left
    the valid region. On a numeric failure the input state is returned
    unchanged so callers never see non-finite values.
    """
    y = state.as_vector()
    if guard_reason(y, state.time) is not None:
        raise ValueError("cannot integrate from a state outside the plant guards")
    s = cmd.speeds
    if np.any(s < params.speed_min) or np.any(s > params.speed_max):
        raise ValueError(f"rotor speeds {s.tolist()} outside [{params.speed_min}, {params.speed_max}]")
    try:
        y_next = integrate(y, s.tolist(), params)
    except (OverflowError, ZeroDivisionError, ValueError):
        return state, NUMERIC_GUARD
    t_next = state.time + params.dt
    reason = guard_reason(y_next, t_next)
    if reason == NUMERIC_GUARD:
        return state, reason
    return QuadState.from_vector(y_next, t_next), reason
