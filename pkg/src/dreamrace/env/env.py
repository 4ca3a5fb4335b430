"""The racing MDP: one track, one quadrotor, pixel observations."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from ..errors import ConfigurationError, UsageError
from ..quad import ActuatorLag, QuadParams, QuadState, map_action, step_rk4, yaw_quat
from ..render import CameraModel, render
from .reward import RewardConfig, StepEvents, compute_reward
from .track import Gate, Track, load_track

CAUSES = ("running", "collision", "out_of_bounds", "timeout", "finished")


@dataclass(frozen=True)
class EnvConfig:
    track: str = "single_gate"
    dt: float = 0.02
    max_steps: int = 3000
    drone_radius: float = 0.15
    reset_position_noise: float = 0.2
    reset_yaw_noise_degrees: float = 10.0
    laps: int | None = None  # overrides the track file when set

    def __post_init__(self):
        if self.dt <= 0:
            raise ConfigurationError("dt must be positive")
        if self.max_steps < 1:
            raise ConfigurationError("max_steps must be >= 1")
        if self.drone_radius < 0 or self.reset_position_noise < 0 or self.reset_yaw_noise_degrees < 0:
            raise ConfigurationError("radius and reset noise must be non-negative")


@dataclass
class EnvState:
    quad: QuadState
    target_index: int = 0
    step_count: int = 0
    lap_count: int = 0
    gates_passed: int = 0
    terminated: bool = False
    termination_cause: str = "running"

    def copy(self) -> EnvState:
        return replace(self, quad=self.quad.copy())


# -- geometry queries ------------------------------------------------------------------
def gate_pass_check(p_prev, p_curr, gate: Gate) -> bool:
    """Forward crossing of the gate plane inside the aperture.

    The crossing parameter t must lie in (0, 1]: a segment that ends on the
    plane counts, one that starts on it does not, so a pass is never credited twice.
    """
    a = gate.to_local(p_prev)
    b = gate.to_local(p_curr)
    if not (a[0] < 0.0 <= b[0]):
        return False
    t = a[0] / (a[0] - b[0])
    y = a[1] + t * (b[1] - a[1])
    z = a[2] + t * (b[2] - a[2])
    e = gate.inner_half_extent
    return abs(y) <= e and abs(z) <= e


def box_distance(p_local, center, half) -> float:
    d = np.maximum(np.abs(np.asarray(p_local, dtype=float) - center) - half, 0.0)
    return float(np.linalg.norm(d))


def hits_gate_frame(p, gate: Gate, radius: float) -> bool:
    local = gate.to_local(p)
    reach = gate.outer_half_extent * 1.5 + radius
    if abs(local[0]) > gate.frame_thickness + radius or abs(local[1]) > reach or abs(local[2]) > reach:
        return False
    return any(box_distance(local, c, h) <= radius for c, h in gate.frame_boxes())


def contact_cause(p, track: Track, radius: float = 0.15) -> str | None:
    """'collision' for gate frames or the ground, 'out_of_bounds' for the other walls, else None."""
    p = np.asarray(p, dtype=float)
    if p[2] - radius < track.bounds_min[2]:
        return "collision"
    if any(hits_gate_frame(p, g, radius) for g in track.gates):
        return "collision"
    if not track.inside_bounds(p, margin=radius):
        return "out_of_bounds"
    return None


def collision_check(p_curr, track: Track, radius: float = 0.15) -> bool:
    return contact_cause(p_curr, track, radius) is not None


# -- environment ---------------------------------------------------------------------
class RaceEnv:
    """Single-owner environment instance.

    ``step`` returns ``(state, obs, reward, terminated, info)``. Timeouts set
    ``terminated`` with cause ``timeout`` and ``info["truncated"] = True`` so
    learners can bootstrap through them.
    """

    def __init__(
        self,
        config: EnvConfig = EnvConfig(),
        track: Track | None = None,
        camera: CameraModel = CameraModel(),
        reward: RewardConfig = RewardConfig(),
        params: QuadParams = QuadParams(),
        render_observations: bool = True,
    ):
        self.config = config
        self.track = track if track is not None else load_track(config.track)
        if config.laps is not None:
            self.track = replace_laps(self.track, config.laps)
        self.camera = camera
        self.reward_config = reward
        self.params = params
        self.render_observations = render_observations
        self.diagnostics: dict = {"clamped": 0}
        self._lag = ActuatorLag(params.actuator_time_constant)
        self._rng = np.random.default_rng(0)
        self.state: EnvState | None = None
        if contact_cause(self.track.start_position, self.track, config.drone_radius):
            raise ConfigurationError(f"start pose of track {self.track.name!r} is in collision")

    @property
    def targets(self) -> list[Gate]:
        return self.track.targets

    def observe(self, state: EnvState | None = None):
        state = state or self.state
        if not self.render_observations:
            return None
        return render(state.quad, self.track, self.camera)

    def reset(self, seed: int | None = None) -> tuple[EnvState, np.ndarray]:
        if seed is not None:
            self._rng = np.random.default_rng(seed)
        cfg = self.config
        dp = self._rng.uniform(-cfg.reset_position_noise, cfg.reset_position_noise, 3)
        dyaw = self._rng.uniform(-cfg.reset_yaw_noise_degrees, cfg.reset_yaw_noise_degrees)
        p = self.track.start_position + dp
        if contact_cause(p, self.track, cfg.drone_radius):
            raise ConfigurationError(f"perturbed start {p.tolist()} is in collision")
        q = yaw_quat(math.radians(self.track.start_yaw_degrees + dyaw))
        self.state = EnvState(quad=QuadState(p, q, np.zeros(3)))
        self._lag.reset()
        return self.state, self.observe()

    def current_target(self, state: EnvState | None = None) -> Gate:
        state = state or self.state
        return self.targets[min(state.target_index, len(self.targets) - 1)]

    def step(self, action) -> tuple[EnvState, np.ndarray, float, bool, dict]:
        if self.state is None:
            raise UsageError("reset() must be called before step()")
        if self.state.terminated:
            raise UsageError(f"episode already terminated ({self.state.termination_cause}); call reset()")
        cmd = self._lag(map_action(action, self.params, self.diagnostics), self.config.dt)
        new_quad = step_rk4(self.state.quad, cmd, self.config.dt, self.params)
        self.state, reward, info = self.transition(self.state, new_quad, cmd.omega)
        info["command"] = cmd
        return self.state, self.observe(), reward, self.state.terminated, info

    def transition(self, state: EnvState, new_quad: QuadState, omega) -> tuple[EnvState, float, dict]:
        """Event evaluation and reward for a move from ``state.quad`` to ``new_quad``.

        Order: gate pass, then contact, then bounds, then timeout.
        """
        p_prev, p_curr = state.quad.p, new_quad.p
        gate = self.current_target(state)
        nxt = state.copy()
        nxt.quad = new_quad
        nxt.step_count += 1
        passed = gate_pass_check(p_prev, p_curr, gate)
        finished = False
        if passed:
            nxt.gates_passed += 1
            nxt.target_index += 1
            if nxt.target_index == len(self.targets):
                nxt.lap_count += 1
                if nxt.lap_count >= self.track.laps:
                    finished = True
                else:
                    nxt.target_index = 0
        cause = contact_cause(p_curr, self.track, self.config.drone_radius)
        truncated = False
        if cause is not None:
            finished = False
        elif finished:
            cause = "finished"
        elif nxt.step_count >= self.config.max_steps:
            cause, truncated = "timeout", True
        events = StepEvents(collision=cause in ("collision", "out_of_bounds"), gate_passed=passed, finished=finished)
        reward = compute_reward(p_prev, p_curr, gate.center, omega, events, self.reward_config)
        if cause is not None:
            nxt.terminated = True
            nxt.termination_cause = cause
        info = {
            "gate_passed": passed,
            "cause": nxt.termination_cause,
            "truncated": truncated,
            "events": events,
            "target_center": gate.center.copy(),
            "omega": np.asarray(omega, dtype=float).copy(),
        }
        return nxt, reward, info


def replace_laps(track: Track, laps: int) -> Track:
    return Track(
        name=track.name,
        gates=track.gates,
        bounds_min=track.bounds_min,
        bounds_max=track.bounds_max,
        start_position=track.start_position,
        start_yaw_degrees=track.start_yaw_degrees,
        laps=laps,
    )

