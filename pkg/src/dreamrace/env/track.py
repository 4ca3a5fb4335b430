"""Gate and track geometry, track files, and the bundled presets."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from ..errors import TrackParseError, ValidationError
from ..quad import quat_to_matrix, yaw_quat

PRESETS = ("single_gate", "circle", "kidney", "figure8", "figure8_decoy")


@dataclass
class Gate:
    """Square gate. Passing means crossing the gate plane along its local +x axis."""

    center: np.ndarray
    yaw_degrees: float = 0.0
    inner_half_extent: float = 0.6
    frame_thickness: float = 0.15
    decorative: bool = False

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=float).reshape(3)
        self.yaw_degrees = float(self.yaw_degrees)
        self.inner_half_extent = float(self.inner_half_extent)
        self.frame_thickness = float(self.frame_thickness)
        self.decorative = bool(self.decorative)
        if self.inner_half_extent <= 0:
            raise ValidationError(f"inner_half_extent must be positive, got {self.inner_half_extent}")
        if self.frame_thickness <= 0:
            raise ValidationError(f"frame_thickness must be positive, got {self.frame_thickness}")
        self._R = quat_to_matrix(self.orientation)

    @property
    def orientation(self) -> np.ndarray:
        return yaw_quat(math.radians(self.yaw_degrees))

    @property
    def rotation(self) -> np.ndarray:
        return self._R

    @property
    def normal(self) -> np.ndarray:
        return self._R[:, 0]

    @property
    def outer_half_extent(self) -> float:
        return self.inner_half_extent + self.frame_thickness

    def to_local(self, p) -> np.ndarray:
        return (np.asarray(p, dtype=float) - self.center) @ self._R

    def to_world(self, local) -> np.ndarray:
        return np.asarray(local, dtype=float) @ self._R.T + self.center

    def frame_boxes(self) -> list[tuple[np.ndarray, np.ndarray]]:
        """The four frame bars as (local center, half size) axis-aligned boxes."""
        e, t = self.inner_half_extent, self.frame_thickness
        hd = 0.5 * t
        o = e + t
        mid = e + 0.5 * t
        return [
            (np.array([0.0, 0.0, mid]), np.array([hd, o, 0.5 * t])),
            (np.array([0.0, 0.0, -mid]), np.array([hd, o, 0.5 * t])),
            (np.array([0.0, mid, 0.0]), np.array([hd, 0.5 * t, e])),
            (np.array([0.0, -mid, 0.0]), np.array([hd, 0.5 * t, e])),
        ]

    def frame_quads_local(self) -> list[np.ndarray]:
        """Front faces of the four bars in the gate plane, each a (4, 3) polygon."""
        e, o = self.inner_half_extent, self.outer_half_extent

        def rect(y0, y1, z0, z1):
            return np.array([[0.0, y0, z0], [0.0, y1, z0], [0.0, y1, z1], [0.0, y0, z1]])

        return [rect(-o, o, e, o), rect(-o, o, -o, -e), rect(e, o, -e, e), rect(-o, -e, -e, e)]

    def to_dict(self) -> dict:
        return {
            "center": [float(c) for c in self.center],
            "yaw_degrees": self.yaw_degrees,
            "inner_half_extent": self.inner_half_extent,
            "frame_thickness": self.frame_thickness,
            "decorative": self.decorative,
        }

    def __eq__(self, other) -> bool:
        return isinstance(other, Gate) and self.to_dict() == other.to_dict()


@dataclass
class Track:
    name: str
    gates: list[Gate]
    bounds_min: np.ndarray
    bounds_max: np.ndarray
    start_position: np.ndarray
    start_yaw_degrees: float = 0.0
    laps: int = 1
    targets: list[Gate] = field(init=False, repr=False)

    def __post_init__(self):
        self.bounds_min = np.asarray(self.bounds_min, dtype=float).reshape(3)
        self.bounds_max = np.asarray(self.bounds_max, dtype=float).reshape(3)
        self.start_position = np.asarray(self.start_position, dtype=float).reshape(3)
        self.start_yaw_degrees = float(self.start_yaw_degrees)
        self.laps = int(self.laps)
        self.targets = [g for g in self.gates if not g.decorative]
        self.validate()

    def validate(self) -> None:
        if not self.targets:
            raise ValidationError(f"track {self.name!r} needs at least one non-decorative gate")
        if self.laps < 1:
            raise ValidationError(f"laps must be >= 1, got {self.laps}")
        if np.any(self.bounds_max <= self.bounds_min):
            raise ValidationError("world bounds max must exceed min on every axis")
        if not self.inside_bounds(self.start_position):
            raise ValidationError(f"start position {self.start_position.tolist()} lies outside the world bounds")

    def inside_bounds(self, p, margin: float = 0.0) -> bool:
        p = np.asarray(p, dtype=float)
        return bool(np.all(p - margin >= self.bounds_min) and np.all(p + margin <= self.bounds_max))

    @property
    def decoys(self) -> list[Gate]:
        return [g for g in self.gates if g.decorative]

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "laps": self.laps,
            "bounds": {"min": [float(v) for v in self.bounds_min], "max": [float(v) for v in self.bounds_max]},
            "start_pose": {
                "position": [float(v) for v in self.start_position],
                "yaw_degrees": self.start_yaw_degrees,
            },
            "gates": [g.to_dict() for g in self.gates],
        }

    def __eq__(self, other) -> bool:
        return isinstance(other, Track) and self.to_dict() == other.to_dict()


# -- file format --------------------------------------------------------------------
def _node_lines(node, path=(), out=None) -> dict:
    out = {} if out is None else out
    out[path] = node.start_mark.line + 1
    if isinstance(node, yaml.MappingNode):
        for key, value in node.value:
            _node_lines(value, path + (key.value,), out)
    elif isinstance(node, yaml.SequenceNode):
        for i, item in enumerate(node.value):
            _node_lines(item, path + (i,), out)
    return out


class _Reader:
    def __init__(self, data, lines: dict):
        self.data = data
        self.lines = lines

    def fail(self, path: tuple, message: str):
        line = None
        for cut in range(len(path), -1, -1):
            if path[:cut] in self.lines:
                line = self.lines[path[:cut]]
                break
        where = ".".join(str(p) for p in path) or "<root>"
        raise TrackParseError(f"{where}: {message}", line=line)

    def get(self, path: tuple, default=KeyError):
        node = self.data
        for i, key in enumerate(path):
            container_ok = isinstance(node, dict) if isinstance(key, str) else isinstance(node, list)
            if not container_ok:
                self.fail(path[:i], "expected a mapping" if isinstance(key, str) else "expected a list")
            try:
                node = node[key]
            except (KeyError, IndexError):
                if default is KeyError:
                    self.fail(path, "missing required key")
                return default
        return node

    def vector(self, path: tuple, n: int = 3) -> list[float]:
        value = self.get(path)
        if not isinstance(value, list) or len(value) != n:
            self.fail(path, f"expected a list of {n} numbers")
        out = []
        for v in value:
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                self.fail(path, f"expected numbers, got {v!r}")
            out.append(float(v))
        return out

    def number(self, path: tuple, default=KeyError) -> float:
        value = self.get(path, default)
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            self.fail(path, f"expected a number, got {value!r}")
        return float(value)


def parse_track(text: str) -> Track:
    """Parse a track document. Syntax and schema problems carry line numbers."""
    try:
        root = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark or exc.context_mark
        raise TrackParseError(str(exc.problem or exc), line=mark.line + 1 if mark else None) from None
    if root is None or not isinstance(data, dict):
        raise TrackParseError("track document must be a mapping", line=1)
    r = _Reader(data, _node_lines(root))
    name = r.get(("name",))
    if not isinstance(name, str):
        r.fail(("name",), "expected a string")
    gates_raw = r.get(("gates",))
    if not isinstance(gates_raw, list):
        r.fail(("gates",), "expected a list")
    gates = []
    for i, item in enumerate(gates_raw):
        if not isinstance(item, dict):
            r.fail(("gates", i), "expected a mapping")
        decorative = r.get(("gates", i, "decorative"), False)
        if not isinstance(decorative, bool):
            r.fail(("gates", i, "decorative"), "expected true or false")
        try:
            gates.append(
                Gate(
                    center=r.vector(("gates", i, "center")),
                    yaw_degrees=r.number(("gates", i, "yaw_degrees"), 0.0),
                    inner_half_extent=r.number(("gates", i, "inner_half_extent"), 0.6),
                    frame_thickness=r.number(("gates", i, "frame_thickness"), 0.15),
                    decorative=decorative,
                )
            )
        except ValidationError as exc:
            raise ValidationError(f"gates.{i} (line {r.lines.get(('gates', i))}): {exc}") from None
    laps = r.get(("laps",), 1)
    if isinstance(laps, bool) or not isinstance(laps, int):
        r.fail(("laps",), "expected an integer")
    return Track(
        name=name,
        gates=gates,
        bounds_min=r.vector(("bounds", "min")),
        bounds_max=r.vector(("bounds", "max")),
        start_position=r.vector(("start_pose", "position")),
        start_yaw_degrees=r.number(("start_pose", "yaw_degrees"), 0.0),
        laps=laps,
    )


def dump_track(track: Track) -> str:
    return yaml.safe_dump(track.to_dict(), sort_keys=False, default_flow_style=None)


def save_track(track: Track, path) -> None:
    Path(path).write_text(dump_track(track))


def load_track(source) -> Track:
    """Load a bundled preset by name, or a track file by path."""
    if isinstance(source, Track):
        return source
    text = None
    if isinstance(source, str) and source in PRESETS:
        text = resources.files("dreamrace.env").joinpath(f"tracks/{source}.yaml").read_text()
    else:
        path = Path(source)
        if not path.exists():
            raise FileNotFoundError(f"no track preset or file named {source!r}; presets: {', '.join(PRESETS)}")
        text = path.read_text()
    return parse_track(text)
