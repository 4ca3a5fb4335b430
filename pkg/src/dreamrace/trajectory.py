"""Trajectory files and the replay reward oracle.

A trajectory is CSV text. The first line is ``# `` followed by a JSON object
(track YAML, timestep, camera, outcome); the second is the column header.
Row ``k`` is the state after ``k`` steps. Its ``action`` and ``omega`` columns
are the raw action and commanded body rates of the step that produced it, and
``reward`` is that step's reward (row 0 carries zeros). ``target_index`` is
the target after the step. Floats are written with ``repr`` so they round-trip
exactly.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .env.env import contact_cause, gate_pass_check
from .env.reward import RewardConfig, StepEvents, compute_reward
from .env.track import Track, dump_track, parse_track
from .errors import TrackParseError, TrajectoryParseError
from .quad import QuadState

COLUMNS = (
    "step", "t", "px", "py", "pz", "qw", "qx", "qy", "qz", "vx", "vy", "vz",
    "a0", "a1", "a2", "a3", "wx", "wy", "wz", "reward", "target_index",
)


@dataclass
class Trajectory:
    meta: dict
    t: np.ndarray  # (L,)
    p: np.ndarray  # (L, 3)
    q: np.ndarray  # (L, 4)
    v: np.ndarray  # (L, 3)
    action: np.ndarray  # (L, 4)
    omega: np.ndarray  # (L, 3)
    reward: np.ndarray  # (L,)
    target_index: np.ndarray  # (L,)
    _track: Track | None = field(default=None, repr=False)

    def __len__(self) -> int:
        return len(self.t)

    @property
    def track(self) -> Track:
        if self._track is None:
            self._track = parse_track(self.meta["track_yaml"])
        return self._track

    def state(self, k: int) -> QuadState:
        return QuadState(self.p[k], self.q[k], self.v[k])

    @property
    def logged_return(self) -> float:
        total = 0.0
        for r in self.reward[1:]:
            total += float(r)
        return total

    def speed(self) -> np.ndarray:
        return np.linalg.norm(self.v, axis=1)


class TrajectoryRecorder:
    def __init__(self, track: Track, dt: float, meta: dict | None = None):
        self.track = track
        self.dt = dt
        self.meta = dict(meta or {})
        self.rows: list[list] = []

    def start(self, state) -> None:
        self.rows = []
        self._row(state, np.zeros(4), np.zeros(3), 0.0)

    def add(self, state, action, omega, reward: float) -> None:
        self._row(state, action, omega, reward)

    def _row(self, state, action, omega, reward) -> None:
        q = state.quad
        self.rows.append(
            [state.step_count, state.step_count * self.dt, *q.p, *q.q, *q.v, *np.asarray(action, float),
             *np.asarray(omega, float), float(reward), state.target_index]
        )

    def to_text(self, **extra_meta) -> str:
        meta = {"track_yaml": dump_track(self.track), "dt": self.dt, **self.meta, **extra_meta}
        buf = io.StringIO()
        buf.write("# " + json.dumps(meta, sort_keys=True) + "\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COLUMNS)
        for row in self.rows:
            w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else int(x) for x in row])
        return buf.getvalue()

    def save(self, path, **extra_meta) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_text(**extra_meta))
        return path


def parse_trajectory(text: str) -> Trajectory:
    lines = text.splitlines()
    if not lines or not lines[0].startswith("# "):
        raise TrajectoryParseError("line 1: missing '# {json}' metadata header")
    try:
        meta = json.loads(lines[0][2:])
    except json.JSONDecodeError as exc:
        raise TrajectoryParseError(f"line 1: bad metadata JSON: {exc}") from exc
    if not isinstance(meta, dict) or "track_yaml" not in meta or "dt" not in meta:
        raise TrajectoryParseError("line 1: metadata must contain 'track_yaml' and 'dt'")
    if len(lines) < 2 or tuple(lines[1].split(",")) != COLUMNS:
        raise TrajectoryParseError(f"line 2: expected header {','.join(COLUMNS)}")
    data = []
    for lineno, row in enumerate(csv.reader(lines[2:]), start=3):
        if len(row) != len(COLUMNS):
            raise TrajectoryParseError(f"line {lineno}: expected {len(COLUMNS)} fields, got {len(row)}")
        try:
            data.append([float(x) for x in row])
        except ValueError as exc:
            raise TrajectoryParseError(f"line {lineno}: {exc}") from exc
    if not data:
        raise TrajectoryParseError("trajectory has no rows")
    a = np.array(data)
    traj = Trajectory(meta, a[:, 1], a[:, 2:5], a[:, 5:9], a[:, 9:12], a[:, 12:16], a[:, 16:19], a[:, 19],
                      a[:, 20].astype(np.int64))
    try:
        _ = traj.track  # parse the embedded track now so errors carry a line number
    except TrackParseError as exc:
        raise TrajectoryParseError(f"line 1: embedded track: {exc}") from exc
    return traj


def load_trajectory(path) -> Trajectory:
    return parse_trajectory(Path(path).read_text())


def replay_rewards(traj: Trajectory, reward: RewardConfig = RewardConfig(), drone_radius: float = 0.15) -> np.ndarray:
    """Recompute every step's reward from logged positions, rates and the track geometry alone."""
    track = traj.track
    targets = track.targets
    target, laps = 0, 0
    out = np.zeros(len(traj))
    for k in range(1, len(traj)):
        p_prev, p_curr = traj.p[k - 1], traj.p[k]
        gate = targets[target]
        passed = gate_pass_check(p_prev, p_curr, gate)
        finished = False
        if passed:
            target += 1
            if target == len(targets):
                laps += 1
                finished = laps >= track.laps
                target = target if finished else 0
        hit = contact_cause(p_curr, track, drone_radius) is not None
        events = StepEvents(collision=hit, gate_passed=passed, finished=finished and not hit)
        out[k] = compute_reward(p_prev, p_curr, gate.center, traj.omega[k], events, reward)
    return out
