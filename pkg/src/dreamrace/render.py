"""Flat-shaded software rasterizer for the onboard pinhole camera.

Camera frame matches the body frame: x forward (optical axis), y left, z up.
Every output value is a multiple of 1/255, so 8-bit storage round-trips exactly.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, NumericError
from .quad import QuadState, quat_to_matrix


def _rgb(r: int, g: int, b: int) -> np.ndarray:
    return np.array([r, g, b], dtype=np.float64) / 255.0


TARGET_COLOR = _rgb(255, 128, 0)
DECOY_COLOR = _rgb(220, 20, 20)
GROUND_COLOR = _rgb(115, 115, 115)
GRID_COLOR = _rgb(230, 205, 25)
SKY_HORIZON = np.array([190.0, 215.0, 240.0])
SKY_ZENITH = np.array([70.0, 130.0, 215.0])


@dataclass(frozen=True)
class CameraModel:
    height: int = 16
    width: int = 16
    horizontal_fov: float = 120.0
    mount_rotation: tuple = (1.0, 0.0, 0.0, 0.0)
    near_clip: float = 0.05
    grid_spacing: float = 1.0

    def __post_init__(self):
        if self.height < 8 or self.width < 8:
            raise ConfigurationError(f"camera resolution must be at least 8x8, got {self.height}x{self.width}")
        if not 30.0 <= self.horizontal_fov <= 170.0:
            raise ConfigurationError(f"horizontal_fov must lie in [30, 170] degrees, got {self.horizontal_fov}")
        if self.near_clip <= 0:
            raise ConfigurationError("near_clip must be positive")
        object.__setattr__(self, "mount_rotation", tuple(float(v) for v in self.mount_rotation))

    @property
    def focal(self) -> float:
        return 0.5 * self.width / math.tan(math.radians(self.horizontal_fov) / 2.0)

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.height, self.width, 3)


@lru_cache(maxsize=16)
def _pixel_grid(cam: CameraModel):
    """Centered pixel coordinates (x right, y down) and camera-frame ray directions."""
    cols = np.arange(cam.width) + 0.5 - cam.width / 2.0
    rows = np.arange(cam.height) + 0.5 - cam.height / 2.0
    px, py = np.meshgrid(cols, rows)
    f = cam.focal
    dirs = np.stack([np.full_like(px, f), -px, -py], axis=-1)
    dirs /= np.linalg.norm(dirs, axis=-1, keepdims=True)
    return px.ravel(), py.ravel(), dirs.reshape(-1, 3)


def camera_rotation(s: QuadState, cam: CameraModel) -> np.ndarray:
    """Camera-to-world rotation: body attitude composed with the mount."""
    return quat_to_matrix(s.q) @ quat_to_matrix(cam.mount_rotation)


def camera_axis_world(s: QuadState, cam: CameraModel = CameraModel()) -> np.ndarray:
    axis = camera_rotation(s, cam)[:, 0]
    return axis / np.linalg.norm(axis)


def gaze_angle(s: QuadState, gate, cam: CameraModel = CameraModel()) -> float:
    """Angle in [0, pi] between the optical axis and the direction to the gate center."""
    d = np.asarray(gate.center, dtype=float) - s.p
    if not np.linalg.norm(d) > 0:
        raise NumericError("gaze direction undefined: drone at the gate center")
    a = camera_axis_world(s, cam)
    return float(math.atan2(np.linalg.norm(np.cross(a, d)), float(a @ d)))


def _quantize(colors: np.ndarray) -> np.ndarray:
    return np.round(colors) / 255.0


def _background(s: QuadState, R: np.ndarray, cam: CameraModel, ground_z: float) -> np.ndarray:
    _, _, dirs = _pixel_grid(cam)
    world = dirs @ R.T
    dz = world[:, 2]
    out = np.empty((dirs.shape[0], 3))
    elev = np.clip(dz, 0.0, 1.0)[:, None]
    out[:] = _quantize(SKY_HORIZON + (SKY_ZENITH - SKY_HORIZON) * elev)
    h = s.p[2] - ground_z
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(dz != 0.0, -h / dz, np.inf)
    hit = np.isfinite(t) & (t > 0.0)
    if np.any(hit):
        th = t[hit]
        x = s.p[0] + th * world[hit, 0]
        y = s.p[1] + th * world[hit, 1]
        g = cam.grid_spacing
        # lines thicken with range so they survive coarse sampling
        pix_angle = math.radians(cam.horizontal_fov) / cam.width
        half = np.clip(0.35 * th * pix_angle, 0.04 * g, 0.2 * g)
        dx = np.abs(x / g - np.round(x / g)) * g
        dy = np.abs(y / g - np.round(y / g)) * g
        line = (dx < half) | (dy < half)
        out[hit] = np.where(line[:, None], GRID_COLOR, GROUND_COLOR)
    return out


def _clip_near(poly: np.ndarray, near: float) -> np.ndarray:
    """Sutherland-Hodgman clip of a camera-frame polygon against x >= near."""
    out = []
    n = len(poly)
    for i in range(n):
        a, b = poly[i], poly[(i + 1) % n]
        ina, inb = a[0] >= near, b[0] >= near
        if ina:
            out.append(a)
        if ina != inb:
            t = (near - a[0]) / (b[0] - a[0])
            out.append(a + t * (b - a))
    return np.array(out) if out else np.zeros((0, 3))


def _coverage(pts: np.ndarray, px: np.ndarray, py: np.ndarray) -> np.ndarray:
    """Conservative pixel coverage of a convex 2D polygon by separating-axis tests."""
    cover = (px + 0.5 > pts[:, 0].min()) & (px - 0.5 < pts[:, 0].max())
    cover &= (py + 0.5 > pts[:, 1].min()) & (py - 0.5 < pts[:, 1].max())
    if not np.any(cover):
        return cover
    n = len(pts)
    for i in range(n):
        e = pts[(i + 1) % n] - pts[i]
        nx, ny = -e[1], e[0]
        if nx == 0.0 and ny == 0.0:
            continue
        proj = pts[:, 0] * nx + pts[:, 1] * ny
        c = px * nx + py * ny
        r = 0.5 * (abs(nx) + abs(ny))
        cover &= (c + r > proj.min()) & (c - r < proj.max())
    return cover


# (axis, side, corner cycle); corner index = 4*ix + 2*iy + iz
_BOX_FACES = (
    (0, -1.0, [0, 2, 3, 1]),
    (0, 1.0, [4, 5, 7, 6]),
    (1, -1.0, [0, 1, 5, 4]),
    (1, 1.0, [2, 6, 7, 3]),
    (2, -1.0, [0, 4, 6, 2]),
    (2, 1.0, [1, 3, 7, 5]),
)
_CORNER_SIGNS = np.array([[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)], dtype=float)


def _visible_faces(gate, eye: np.ndarray) -> list[np.ndarray]:
    """World-frame faces of the frame bars that face the eye point."""
    eye_local = gate.to_local(eye)
    faces = []
    for c, h in gate.frame_boxes():
        rel = eye_local - c
        corners = None
        for axis, side, idx in _BOX_FACES:
            if side * rel[axis] > h[axis]:
                if corners is None:
                    corners = gate.to_world(c + _CORNER_SIGNS * h)
                faces.append(corners[idx])
    return faces


def render(s: QuadState, track, cam: CameraModel = CameraModel()) -> np.ndarray:
    """RGB observation of shape (H, W, 3) with values in [0, 1]."""
    R = camera_rotation(s, cam)
    px, py, _ = _pixel_grid(cam)
    img = _background(s, R, cam, float(track.bounds_min[2]))
    f = cam.focal
    order = sorted(track.gates, key=lambda g: -float(np.linalg.norm(g.center - s.p)))
    for gate in order:
        color = DECOY_COLOR if gate.decorative else TARGET_COLOR
        local = (gate.center - s.p) @ R
        reach = gate.outer_half_extent * 1.8 + gate.frame_thickness
        if local[0] < cam.near_clip - reach:
            continue  # everything behind the camera
        mask = np.zeros(px.shape, dtype=bool)
        for face in _visible_faces(gate, s.p):
            cf = (face - s.p) @ R
            cf = _clip_near(cf, cam.near_clip)
            if len(cf) < 3:
                continue
            pts = np.stack([-f * cf[:, 1] / cf[:, 0], -f * cf[:, 2] / cf[:, 0]], axis=1)
            mask |= _coverage(pts, px, py)
        img[mask] = color
    out = img.reshape(cam.height, cam.width, 3)
    return out


def is_gate_pixel(img: np.ndarray, decoy: bool = False) -> np.ndarray:
    """Boolean (H, W) mask of pixels painted exactly in the target or decoy color."""
    color = DECOY_COLOR if decoy else TARGET_COLOR
    return np.all(img == color, axis=-1)


# -- image dumps ---------------------------------------------------------------------
def to_uint8(img: np.ndarray) -> np.ndarray:
    return np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)


def write_ppm(path, img: np.ndarray) -> None:
    """Binary 8-bit RGB portable pixmap."""
    data = to_uint8(img)
    h, w, _ = data.shape
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(data.tobytes())


def read_ppm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    parts = raw.split(maxsplit=4)
    if parts[0] != b"P6":
        raise ValueError(f"{path}: not a binary PPM file")
    w, h = int(parts[1]), int(parts[2])
    pixels = parts[4] if len(parts) > 4 else b""
    return np.frombuffer(pixels[: w * h * 3], dtype=np.uint8).reshape(h, w, 3)


def write_raw(path, img: np.ndarray) -> None:
    """Little-endian uint32 H, uint32 W, then H*W*3 float32 values, row-major channels-last."""
    img = np.asarray(img)
    h, w, c = img.shape
    if c != 3:
        raise ValueError(f"expected (H, W, 3), got {img.shape}")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<II", h, w))
        fh.write(np.ascontiguousarray(img, dtype="<f4").tobytes())


def read_raw(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    h, w = struct.unpack_from("<II", raw, 0)
    data = np.frombuffer(raw, dtype="<f4", offset=8)
    if data.size != h * w * 3:
        raise ValueError(f"{path}: expected {h * w * 3} floats, found {data.size}")
    return data.reshape(h, w, 3).astype(np.float64)
