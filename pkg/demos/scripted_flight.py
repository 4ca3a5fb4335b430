"""Fly a hand-scripted pass through the single gate and look at what the camera saw.

The script pitches forward briefly, brakes, then coasts level through the gate.
It writes the trajectory file, the onboard frames, an overhead path with camera
heading arrows, and prints the gaze angle toward the gate along the way.

    python3 demos/scripted_flight.py --out /tmp/scripted_flight
"""
import argparse
from pathlib import Path

import numpy as np

from dreamrace.env import EnvConfig, RaceEnv, load_track
from dreamrace.evaluate import trajectory_gaze
from dreamrace.quad import hover_action
from dreamrace.trajectory import TrajectoryRecorder, parse_trajectory
from dreamrace.visualize import render_trajectory


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="scripted_flight")
    args = ap.parse_args()
    out = Path(args.out)

    env = RaceEnv(EnvConfig(reset_position_noise=0.0, reset_yaw_noise_degrees=0.0), track=load_track("single_gate"))
    state, _ = env.reset(0)
    rec = TrajectoryRecorder(env.track, env.config.dt)
    rec.start(state)
    hover = hover_action(env.params)
    for k in range(400):
        a = hover.copy()
        a[2] = 0.2 if k < 10 else (-0.2 if k < 20 else 0.0)  # pitch rate: tilt forward, then level out
        state, _, reward, done, info = env.step(a)
        rec.add(state, a, info["omega"], reward)
        if done:
            break
    path = rec.save(out / "flight.csv")
    traj = parse_trajectory(path.read_text())
    print(f"ended by {state.termination_cause} after {state.step_count} steps, "
          f"gates passed {state.gates_passed}, return {traj.logged_return:.3f}")

    gaze = np.degrees(trajectory_gaze(traj))
    for k in range(0, len(gaze), max(1, len(gaze) // 8)):
        print(f"  t={traj.t[k]:5.2f} s  speed {traj.speed()[k]:4.2f} m/s  gaze {gaze[k]:6.2f} deg")

    written = render_trajectory(path, out / "render", arrow_every=5)
    print("wrote", ", ".join(f"{k}={v}" for k, v in written.items()))


if __name__ == "__main__":
    main()
