"""Offline artifacts for plotting: onboard frames, overhead path with camera arrows, and metric series."""
from __future__ import annotations

import csv
import math
from pathlib import Path

from .metrics import read_metrics
from .render import CameraModel, camera_axis_world, render, write_ppm
from .trajectory import Trajectory, load_trajectory


def _write_csv(path: Path, header, rows) -> Path:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    return path


def trajectory_camera(traj: Trajectory) -> CameraModel:
    return CameraModel(**traj.meta["camera"]) if "camera" in traj.meta else CameraModel()


def render_trajectory(source, out_dir, arrow_every: int = 10, frames: bool = True) -> dict:
    """Write ``frames/frame_XXXXX.ppm`` for every row, plus ``path.csv``,
    ``arrows.csv`` (camera optical axis every ``arrow_every`` rows), ``gates.csv``
    and ``speed.csv``. Returns the written paths keyed by artifact.
    """
    traj = source if isinstance(source, Trajectory) else load_trajectory(source)
    if arrow_every < 1:
        raise ValueError("arrow_every must be >= 1")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cam = trajectory_camera(traj)
    track = traj.track
    written: dict = {}
    if frames:
        (out / "frames").mkdir(exist_ok=True)
        for k in range(len(traj)):
            write_ppm(out / "frames" / f"frame_{k:05d}.ppm", render(traj.state(k), track, cam))
        written["frames"] = len(traj)
    steps = range(len(traj))
    written["path"] = _write_csv(out / "path.csv", ("step", "t", "x", "y", "z"),
                                 ([k, traj.t[k], *traj.p[k]] for k in steps))
    arrows = []
    for k in range(0, len(traj), arrow_every):
        axis = camera_axis_world(traj.state(k), cam)
        arrows.append([k, traj.t[k], *traj.p[k], *axis, math.atan2(axis[1], axis[0])])
    written["arrows"] = _write_csv(out / "arrows.csv", ("step", "t", "x", "y", "z", "ax", "ay", "az", "heading"), arrows)
    written["gates"] = _write_csv(
        out / "gates.csv", ("index", "x", "y", "z", "yaw_degrees", "inner_half_extent", "decorative"),
        ([i, *g.center, g.yaw_degrees, g.inner_half_extent, int(g.decorative)] for i, g in enumerate(track.gates)),
    )
    speed = traj.speed()
    written["speed"] = _write_csv(out / "speed.csv", ("t", "speed"), ([traj.t[k], speed[k]] for k in steps))
    return written


def export_metric_series(run_dir, out_dir=None) -> dict[str, Path]:
    """One CSV per row kind (``train.csv``, ``eval.csv``) with env_steps first and every numeric key."""
    run_dir = Path(run_dir)
    rows = read_metrics(run_dir)
    out = Path(out_dir) if out_dir is not None else run_dir / "series"
    out.mkdir(parents=True, exist_ok=True)
    written = {}
    for kind in sorted({r["kind"] for r in rows}):
        group = [r for r in rows if r["kind"] == kind]
        keys = sorted({k for r in group for k, v in r.items()
                       if k != "env_steps" and (v is None or isinstance(v, (int, float)))})
        written[kind] = _write_csv(
            out / f"{kind}.csv", ("env_steps", *keys),
            ([r["env_steps"], *("" if r.get(k) is None else r.get(k, "") for k in keys)] for r in group),
        )
    return written

