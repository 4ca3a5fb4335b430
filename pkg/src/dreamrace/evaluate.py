"""Episode rollouts for evaluation, report summaries, and checkpoint-to-agent loading."""
from __future__ import annotations

import dataclasses
import json
import math
from pathlib import Path

import numpy as np

from .agents import DreamerAgent, PpoActingAgent, RandomAgent
from .checkpoint import load_checkpoint
from .config import RunConfig, config_from_dict
from .env.env import RaceEnv
from .env.track import load_track
from .errors import CheckpointVersionError, NumericError
from .policy import ActorCritic
from .ppo import PpoPolicy
from .render import gaze_angle
from .trajectory import TrajectoryRecorder
from .visualize import trajectory_camera
from .world_model import WorldModel


def make_env(cfg: RunConfig, track=None) -> RaceEnv:
    track = load_track(track if track is not None else cfg.run.track)
    return RaceEnv(cfg.env, track=track, camera=cfg.camera, reward=cfg.reward, params=cfg.quad)


def eval_seeds(seed: int, episodes: int) -> list[int]:
    return [int(s) for s in np.random.default_rng([seed, 99]).integers(0, 2**31, episodes)]


def run_episode(agent, env: RaceEnv, seed: int, rng: np.random.Generator, mode: str = "mean",
                record: bool = False) -> dict:
    """One episode on a single env; never touches any replay buffer."""
    state, obs = env.reset(seed)
    agent.reset(1)
    recorder = TrajectoryRecorder(env.track, env.config.dt, {"camera": dataclasses.asdict(env.camera)}) if record else None
    if recorder:
        recorder.start(state)
    total, first = 0.0, True
    speeds, gazes = [], []
    info = {"cause": "running"}
    while True:
        action = agent.act(np.asarray(obs, dtype=np.float64).reshape(1, -1), np.array([first]), rng, mode)[0]
        first = False
        target = env.current_target()
        state, obs, reward, done, info = env.step(action)
        total += reward
        speeds.append(float(np.linalg.norm(state.quad.v)))
        try:
            gazes.append(gaze_angle(state.quad, target))
        except NumericError:
            pass
        if recorder:
            recorder.add(state, action, info["omega"], reward)
        if done:
            break
    report = {
        "seed": seed,
        "return": total,
        "length": state.step_count,
        "gates_passed": state.gates_passed,
        "cause": state.termination_cause,
        "finished": state.termination_cause == "finished",
        "completion_time": state.step_count * env.config.dt if state.termination_cause == "finished" else None,
        "speed": speeds,
        "gaze": gazes,
    }
    if recorder:
        report["trajectory"] = recorder
    return report


def trajectory_gaze(traj, camera=None) -> np.ndarray:
    """Gaze angle of every row toward the gate it is flying at; NaN exactly at a gate center."""
    cam = camera if camera is not None else trajectory_camera(traj)
    targets = traj.track.targets
    out = np.empty(len(traj))
    for k in range(len(traj)):
        gate = targets[min(int(traj.target_index[k]), len(targets) - 1)]
        try:
            out[k] = gaze_angle(traj.state(k), gate, cam)
        except NumericError:
            out[k] = math.nan
    return out


def summarize(reports: list[dict]) -> dict:
    returns = np.array([r["return"] for r in reports], dtype=np.float64)
    speeds = [s for r in reports for s in r["speed"]]
    gazes = [g for r in reports for g in r["gaze"]]
    return {
        "episodes": len(reports),
        "return_mean": float(returns.mean()),
        "return_std": float(returns.std()),
        "gates_mean": float(np.mean([r["gates_passed"] for r in reports])),
        "success_rate": float(np.mean([r["finished"] for r in reports])),
        "speed_mean": float(np.mean(speeds)) if speeds else 0.0,
        "gaze_mean": float(np.mean(gazes)) if gazes else math.nan,
    }


def evaluate_agent(agent, cfg: RunConfig, episodes: int, seed: int, mode: str = "mean", track=None,
                   record: bool = False) -> tuple[dict, list[dict]]:
    env = make_env(cfg, track)
    rng = np.random.default_rng([seed, 98])
    reports = [run_episode(agent, env, s, rng, mode, record) for s in eval_seeds(seed, episodes)]
    return summarize(reports), reports


# -- checkpoints ---------------------------------------------------------------------
def agent_from_sections(cfg: RunConfig, sections: dict, algorithm: str):
    if algorithm == "dreamer":
        wm = WorldModel(cfg.world_model, np.random.default_rng(0))
        wm.load_state_dict(sections["world_model"])
        ac = ActorCritic(cfg.world_model.feat_dim, cfg.actor_critic, np.random.default_rng(0))
        ac.actor.load_state_dict(sections["actor"])
        ac.critic.load_state_dict(sections["critic"])
        return DreamerAgent(wm, ac)
    if algorithm == "ppo":
        policy = PpoPolicy(cfg.obs_dim * cfg.ppo.frame_stack, cfg.ppo, np.random.default_rng(0))
        policy.load_state_dict(sections["policy"])
        return PpoActingAgent(policy, cfg.ppo.frame_stack)
    raise CheckpointVersionError(f"checkpoint holds unknown algorithm {algorithm!r}")


def load_agent(checkpoint) -> tuple[object, RunConfig, dict]:
    sections, meta = load_checkpoint(checkpoint)
    cfg = config_from_dict(meta["config"])
    return agent_from_sections(cfg, sections, meta["algorithm"]), cfg, meta


def evaluate(checkpoint=None, track=None, episodes: int = 10, mode: str = "mean", out_dir=None, seed: int = 0,
             config: RunConfig | None = None) -> dict:
    """Evaluate a checkpoint (or, with ``checkpoint=None``, a uniform random policy).

    With ``out_dir`` set, writes ``report.json`` and one trajectory file per episode.
    """
    if checkpoint is None:
        cfg = config or RunConfig()
        agent, label = RandomAgent(), "random"
    else:
        agent, cfg, meta = load_agent(checkpoint)
        label = f"{meta['algorithm']}@{meta['env_steps']}"
    summary, reports = evaluate_agent(agent, cfg, episodes, seed, mode, track, record=out_dir is not None)
    report = {"policy": label, "mode": mode, "track": str(track or cfg.run.track), **summary, "episodes_detail": []}
    for i, r in enumerate(reports):
        detail = {k: v for k, v in r.items() if k != "trajectory"}
        if out_dir is not None:
            path = Path(out_dir) / f"episode_{i:03d}.csv"
            r["trajectory"].save(path, policy=label, episode=i, seed=r["seed"], cause=r["cause"], logged_return=r["return"])
            detail["trajectory_file"] = path.name
        report["episodes_detail"].append(detail)
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        (Path(out_dir) / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True))
    return report
