"""Three-branch racing reward: collision penalty, gate bonus, or progress minus rate penalty."""
from __future__ import annotations

import math
from dataclasses import dataclass

from ..errors import ConfigurationError


@dataclass(frozen=True)
class RewardConfig:
    b1: float = 1.0
    b2: float = 0.01
    collision_penalty: float = -4.0
    gate_bonus: float = 10.0
    finish_bonus: float = 10.0
    gamma: float = 0.99

    def __post_init__(self):
        if not self.b1 > 0:
            raise ConfigurationError(f"b1 must be positive, got {self.b1}")
        if not self.b2 >= 0:
            raise ConfigurationError(f"b2 must be non-negative, got {self.b2}")
        if not 0.0 < self.gamma <= 1.0:
            raise ConfigurationError(f"gamma must lie in (0, 1], got {self.gamma}")


@dataclass(frozen=True)
class StepEvents:
    collision: bool = False
    gate_passed: bool = False
    finished: bool = False


def compute_reward(p_prev, p_curr, g_k, omega, events: StepEvents, cfg: RewardConfig = RewardConfig()) -> float:
    """Per-step reward.

    Collision dominates; a gate pass yields the bonus; otherwise the change in
    distance to the target gate center minus a body-rate penalty. Finishing
    adds the finish bonus on top of whichever branch applied.
    """
    if events.collision:
        r = cfg.collision_penalty
    elif events.gate_passed:
        r = cfg.gate_bonus
    else:
        r = cfg.b1 * (_dist(g_k, p_prev) - _dist(g_k, p_curr)) - cfg.b2 * _norm(omega)
    if events.finished:
        r += cfg.finish_bonus
    return float(r)


def _dist(a, b) -> float:
    dx = float(a[0]) - float(b[0])
    dy = float(a[1]) - float(b[1])
    dz = float(a[2]) - float(b[2])
    return math.sqrt(dx * dx + dy * dy + dz * dz)


def _norm(w) -> float:
    x, y, z = float(w[0]), float(w[1]), float(w[2])
    return math.sqrt(x * x + y * y + z * z)
