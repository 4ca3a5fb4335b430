"""Point-mass-with-attitude quadrotor model driven by collective thrust and body rates.

State is ``x = [p, q, v]`` with ``q`` a Hamilton unit quaternion (w, x, y, z)
rotating body to world. Body rates are inputs, so attitude evolves purely
kinematically:

    p_dot = v
    v_dot = g + R(q) [0, 0, f_T]      (f_T mass-normalized)
    q_dot = 0.5 * q (x) [0, omega]
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, NumericError

GRAVITY = 9.81


# -- quaternion helpers -------------------------------------------------------
def quat_mul(a, b) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ]
    )


def quat_conj(q) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_to_matrix(q) -> np.ndarray:
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def quat_rotate(q, v) -> np.ndarray:
    return quat_to_matrix(q) @ np.asarray(v, dtype=float)


def quat_from_axis_angle(axis, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    s = math.sin(angle / 2.0)
    return np.array([math.cos(angle / 2.0), axis[0] * s, axis[1] * s, axis[2] * s])


def quat_from_euler(roll: float = 0.0, pitch: float = 0.0, yaw: float = 0.0) -> np.ndarray:
    """Z-Y-X (yaw, then pitch, then roll) composition."""
    qz = quat_from_axis_angle([0, 0, 1], yaw)
    qy = quat_from_axis_angle([0, 1, 0], pitch)
    qx = quat_from_axis_angle([1, 0, 0], roll)
    return quat_mul(quat_mul(qz, qy), qx)


def yaw_quat(yaw_rad: float) -> np.ndarray:
    return np.array([math.cos(yaw_rad / 2.0), 0.0, 0.0, math.sin(yaw_rad / 2.0)])


# -- value types --------------------------------------------------------------
@dataclass
class QuadState:
    p: np.ndarray
    q: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=float).reshape(3)
        self.q = np.asarray(self.q, dtype=float).reshape(4)
        self.v = np.asarray(self.v, dtype=float).reshape(3)

    @classmethod
    def hover_at(cls, p, yaw: float = 0.0) -> QuadState:
        return cls(np.asarray(p, dtype=float), yaw_quat(yaw), np.zeros(3))

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.p, self.q, self.v])

    @classmethod
    def from_vector(cls, x) -> QuadState:
        x = np.asarray(x, dtype=float)
        return cls(x[0:3], x[3:7], x[7:10])

    def copy(self) -> QuadState:
        return QuadState(self.p.copy(), self.q.copy(), self.v.copy())


@dataclass
class CtbrCommand:
    f_T: float
    omega: np.ndarray

    def __post_init__(self):
        self.f_T = float(self.f_T)
        self.omega = np.asarray(self.omega, dtype=float).reshape(3)


@dataclass
class QuadParams:
    """Platform constants. Only ``g``, ``f_T_max`` and ``omega_max`` enter the dynamics."""

    mass: float = 0.6
    inertia: tuple[float, float, float] = (0.002410, 0.001800, 0.003759)
    kappa: float = 0.022
    arm_length: float = 0.14
    max_rotor_thrust: float = 4.0
    gravity: tuple[float, float, float] = (0.0, 0.0, -GRAVITY)
    f_T_max: float = 2.7 * GRAVITY
    omega_max: float = 6.0
    actuator_time_constant: float = 0.0

    def __post_init__(self):
        if self.mass <= 0:
            raise ConfigurationError(f"mass must be positive, got {self.mass}")
        if self.f_T_max * self.mass > 4.0 * self.max_rotor_thrust + 1e-9:
            raise ConfigurationError(
                f"f_T_max*m = {self.f_T_max * self.mass:.3f} N exceeds four rotors "
                f"of {self.max_rotor_thrust} N"
            )
        if self.omega_max <= 0:
            raise ConfigurationError("omega_max must be positive")
        self.inertia = tuple(float(x) for x in self.inertia)
        self.gravity = tuple(float(x) for x in self.gravity)

    @property
    def thrust_to_weight(self) -> float:
        return self.f_T_max / float(np.linalg.norm(self.gravity))


# -- dynamics -------------------------------------------------------------------
def _deriv(x: list, f_T: float, wx: float, wy: float, wz: float, g: tuple) -> list:
    _, _, _, qw, qx, qy, qz, vx, vy, vz = x
    return [
        vx,
        vy,
        vz,
        0.5 * (-qx * wx - qy * wy - qz * wz),
        0.5 * (qw * wx + qy * wz - qz * wy),
        0.5 * (qw * wy - qx * wz + qz * wx),
        0.5 * (qw * wz + qx * wy - qy * wx),
        g[0] + 2.0 * (qx * qz + qw * qy) * f_T,
        g[1] + 2.0 * (qy * qz - qw * qx) * f_T,
        g[2] + (1.0 - 2.0 * (qx * qx + qy * qy)) * f_T,
    ]


def derivative(s: QuadState, u: CtbrCommand, params: QuadParams) -> np.ndarray:
    """Time derivative ``[p_dot, q_dot, v_dot]`` as a 10-vector."""
    w = u.omega
    return np.array(_deriv(s.as_vector().tolist(), u.f_T, w[0], w[1], w[2], params.gravity))


def step_rk4(s: QuadState, u: CtbrCommand, dt: float, params: QuadParams) -> QuadState:
    """Classical RK4 with the command held over the step; renormalizes ``q``."""
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    x = s.as_vector().tolist()
    f, (wx, wy, wz), g = u.f_T, u.omega.tolist(), params.gravity
    k1 = _deriv(x, f, wx, wy, wz, g)
    k2 = _deriv([a + 0.5 * dt * b for a, b in zip(x, k1)], f, wx, wy, wz, g)
    k3 = _deriv([a + 0.5 * dt * b for a, b in zip(x, k2)], f, wx, wy, wz, g)
    k4 = _deriv([a + dt * b for a, b in zip(x, k3)], f, wx, wy, wz, g)
    out = [a + dt / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4) for a, b1, b2, b3, b4 in zip(x, k1, k2, k3, k4)]
    if not all(math.isfinite(v) for v in out):
        raise NumericError("non-finite quadrotor state after integration step")
    n = math.sqrt(out[3] ** 2 + out[4] ** 2 + out[5] ** 2 + out[6] ** 2)
    return QuadState(out[0:3], [c / n for c in out[3:7]], out[7:10])


def map_action(a, params: QuadParams, diagnostics: dict | None = None) -> CtbrCommand:
    """Map a raw action in [-1, 1]^4 to thrust in [0, f_T_max] and rates in [-omega_max, omega_max].

    Out-of-range components are clamped; ``diagnostics["clamped"]`` counts such calls.
    """
    a = np.asarray(a, dtype=float).reshape(4)
    clipped = np.clip(a, -1.0, 1.0)
    if diagnostics is not None and not np.array_equal(clipped, a):
        diagnostics["clamped"] = diagnostics.get("clamped", 0) + 1
    f_T = (clipped[0] + 1.0) * 0.5 * params.f_T_max
    return CtbrCommand(f_T, clipped[1:] * params.omega_max)


def hover_action(params: QuadParams) -> np.ndarray:
    g = float(np.linalg.norm(params.gravity))
    return np.array([2.0 * g / params.f_T_max - 1.0, 0.0, 0.0, 0.0])


@dataclass
class ActuatorLag:
    """First-order lag on thrust and rates; disabled when the time constant is 0."""

    time_constant: float = 0.0
    f_T: float | None = None
    omega: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def reset(self) -> None:
        self.f_T = None
        self.omega = np.zeros(3)

    def __call__(self, cmd: CtbrCommand, dt: float) -> CtbrCommand:
        if self.time_constant <= 0.0:
            return cmd
        if self.f_T is None:
            self.f_T, self.omega = cmd.f_T, cmd.omega.copy()
            return CtbrCommand(self.f_T, self.omega.copy())
        alpha = 1.0 - math.exp(-dt / self.time_constant)
        self.f_T += alpha * (cmd.f_T - self.f_T)
        self.omega = self.omega + alpha * (cmd.omega - self.omega)
        return CtbrCommand(self.f_T, self.omega.copy())
