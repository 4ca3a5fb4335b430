"""Training loops for the Dreamer agent and the PPO baseline.

Every random stream is derived from the run seed, the metrics files carry no
wall-clock values, and all work is ordered deterministically, so two
single-threaded runs with the same config and seed write identical metrics.
"""
from __future__ import annotations

import json
import logging
from pathlib import Path

import numpy as np

from .agents import DreamerAgent, PpoActingAgent
from .checkpoint import load_checkpoint, restore_rng, rng_state, save_checkpoint
from .config import RunConfig, dump_config
from .errors import ConfigurationError, NumericError
from .evaluate import evaluate_agent, make_env
from .metrics import MetricsWriter
from .policy import ActorCritic
from .ppo import PpoAgent, RolloutCollector
from .replay import EpisodeBuilder, ReplayBuffer
from .world_model import WorldModel

log = logging.getLogger(__name__)
CHECKPOINT_NAME = "checkpoint.npz"


def _prepare_dir(run_dir: Path) -> None:
    try:
        run_dir.mkdir(parents=True, exist_ok=True)
        probe = run_dir / ".write_probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise ConfigurationError(f"output directory {run_dir} is not writable: {exc}") from exc


def _mean_rows(rows: list[dict]) -> dict:
    if not rows:
        return {}
    return {k: float(np.mean([r[k] for r in rows])) for k in rows[0]}


def _episode_stats(episodes: list[dict]) -> dict:
    if not episodes:
        return {"episodes": 0}
    returns = np.array([e["return"] for e in episodes])
    return {
        "episodes": len(episodes),
        "return_mean": float(returns.mean()),
        "return_std": float(returns.std()),
        "gates_mean": float(np.mean([e["gates"] for e in episodes])),
        "success_rate": float(np.mean([e["cause"] == "finished" for e in episodes])),
    }


class _Cadence:
    """Fires once each time a counter crosses a multiple of ``every``."""

    def __init__(self, every: int, start: int = 0):
        self.every = every
        self.next = (start // every + 1) * every

    def due(self, steps: int) -> bool:
        if steps >= self.next:
            self.next = (steps // self.every + 1) * self.every
            return True
        return False


class BaseTrainer:
    algorithm = ""

    def __init__(self, cfg: RunConfig, seed: int, run_dir=None, resume: bool = False):
        self.cfg = cfg
        self.seed = seed
        self.run_dir = Path(run_dir) if run_dir is not None else cfg.run_dir(seed)
        _prepare_dir(self.run_dir)
        self.env_steps = 0
        self.episodes: list[dict] = []
        self.loss_rows: list[dict] = []
        self.rng = np.random.default_rng([seed, 2])
        self.env_seed_rng = np.random.default_rng([seed, 1])
        self.build(np.random.default_rng([seed, 0]))
        ckpt = self.run_dir / CHECKPOINT_NAME
        if resume and ckpt.exists():
            self.restore(ckpt)
            self.metrics = MetricsWriter(self.run_dir, resume_from_step=self.env_steps)
            log.info("resumed %s at %d env steps", self.run_dir, self.env_steps)
        else:
            (self.run_dir / "config.yaml").write_text(dump_config(cfg))
            # the output location is not part of the experiment, so copies of a run compare equal
            config = cfg.to_dict()
            config["run"].pop("output_dir")
            header = {"algorithm": self.algorithm, "seed": seed, "config": config}
            self.metrics = MetricsWriter(self.run_dir, header=header)
        self.start_envs()

    # hooks
    def build(self, rng: np.random.Generator) -> None: ...
    def start_envs(self) -> None: ...
    def acting_agent(self): ...
    def sections(self) -> dict: ...
    def load_sections(self, sections: dict) -> None: ...
    def advance(self) -> None: ...

    def next_env_seed(self) -> int:
        return int(self.env_seed_rng.integers(2**31))

    # shared loop
    def run(self) -> Path:
        cfg = self.cfg.run
        budget = cfg.env_steps
        if self.env_steps == 0 and budget == 0:
            self.log_eval()
            return self.run_dir
        log_c, eval_c, ckpt_c = (_Cadence(n, self.env_steps) for n in (cfg.log_every, cfg.eval_every, cfg.checkpoint_every))
        while self.env_steps < budget:
            self.advance()
            if log_c.due(self.env_steps):
                self.log_train()
            if eval_c.due(self.env_steps) and self.env_steps < budget:
                self.log_eval()
            if ckpt_c.due(self.env_steps) and self.env_steps < budget:
                self.save()
        self.log_eval()
        self.save()
        return self.run_dir

    def log_train(self) -> None:
        row = {"kind": "train", "env_steps": self.env_steps, **_episode_stats(self.episodes), **_mean_rows(self.loss_rows)}
        self.metrics.log(row)
        self.episodes, self.loss_rows = [], []

    def log_eval(self) -> dict:
        summary, _ = evaluate_agent(self.acting_agent(), self.cfg, self.cfg.run.eval_episodes, self.seed, "mean")
        row = {"kind": "eval", "env_steps": self.env_steps, **summary}
        self.metrics.log(row)
        log.info("eval @%d: return %.3f +- %.3f, gates %.2f", self.env_steps, summary["return_mean"],
                 summary["return_std"], summary["gates_mean"])
        return row

    def save(self) -> Path:
        meta = {
            "algorithm": self.algorithm,
            "seed": self.seed,
            "env_steps": self.env_steps,
            "config": self.cfg.to_dict(),
            "rng": rng_state(self.rng),
            "env_seed_rng": rng_state(self.env_seed_rng),
        }
        return save_checkpoint(self.run_dir / CHECKPOINT_NAME, self.sections(), meta)

    def restore(self, path) -> None:
        sections, meta = load_checkpoint(path)
        if meta["algorithm"] != self.algorithm:
            raise ConfigurationError(f"checkpoint is for {meta['algorithm']}, not {self.algorithm}")
        self.env_steps = int(meta["env_steps"])
        self.rng = restore_rng(meta["rng"])
        self.env_seed_rng = restore_rng(meta["env_seed_rng"])
        self.load_sections(sections)

    def abort(self, what: str, arrays: dict, params) -> None:
        """Dump the offending batch and parameter norms, then raise."""
        norms = {name: float(np.linalg.norm(p.data)) for name, p in params}
        np.savez(self.run_dir / "diagnostics.npz", **{k: np.asarray(v) for k, v in arrays.items()})
        (self.run_dir / "diagnostics.json").write_text(
            json.dumps({"what": what, "env_steps": self.env_steps, "parameter_norms": norms}, indent=2)
        )
        raise NumericError(f"non-finite {what} at {self.env_steps} env steps; diagnostics in {self.run_dir}")


class DreamerTrainer(BaseTrainer):
    algorithm = "dreamer"

    def build(self, rng):
        cfg = self.cfg
        self.wm = WorldModel(cfg.world_model, rng)
        self.wm_opt = self.wm.make_optimizer()
        self.ac = ActorCritic(cfg.world_model.feat_dim, cfg.actor_critic, rng)
        self.agent = DreamerAgent(self.wm, self.ac)
        self.replay = ReplayBuffer(cfg.dreamer.replay_capacity)
        self.updates = 0

    def acting_agent(self):
        return DreamerAgent(self.wm, self.ac)

    def start_envs(self):
        n = self.cfg.dreamer.num_envs
        self.envs = [make_env(self.cfg) for _ in range(n)]
        self.builders = [EpisodeBuilder(4) for _ in range(n)]
        self.obs, self.first = [], np.ones(n, dtype=bool)
        self.ep_return = np.zeros(n)
        for env, b in zip(self.envs, self.builders):
            _, o = env.reset(self.next_env_seed())
            b.start(o)
            self.obs.append(np.asarray(o, dtype=np.float64).ravel())
        self.agent.reset(n)

    def advance(self):
        d = self.cfg.dreamer
        obs = np.stack(self.obs)
        actions = self.agent.act(obs, self.first, self.rng, "sample")
        if self.env_steps < d.prefill:
            actions = self.rng.uniform(-1.0, 1.0, actions.shape)
            self.agent.override_action(actions)
        self.first[:] = False
        before = self.env_steps
        for i, env in enumerate(self.envs):
            state, o, r, done, info = env.step(actions[i])
            self.builders[i].add(actions[i], r, o, terminated=done, truncated=info["truncated"])
            self.ep_return[i] += r
            self.obs[i] = np.asarray(o, dtype=np.float64).ravel()
            self.env_steps += 1
            if done:
                self.replay.add_episode(self.builders[i].finish())
                self.episodes.append({"return": float(self.ep_return[i]), "gates": state.gates_passed,
                                      "cause": state.termination_cause, "length": state.step_count})
                self.ep_return[i] = 0.0
                _, o = env.reset(self.next_env_seed())
                self.builders[i].start(o)
                self.obs[i] = np.asarray(o, dtype=np.float64).ravel()
                self.first[i] = True
        if self.env_steps >= d.prefill and self.replay.num_episodes > 0:
            for _ in range(self.env_steps // d.train_every - before // d.train_every):
                self.train_step()

    def train_step(self) -> dict:
        d = self.cfg.dreamer
        batch = self.replay.sample(d.batch_size, d.batch_length, self.rng)
        self.wm_opt.zero_grad()
        out = self.wm.observe(batch.flat_observations(), batch.actions, batch.is_first, self.rng)
        loss, comps = self.wm.loss(out, batch.flat_observations(), batch.rewards, batch.continues, batch.valid)
        if not np.isfinite(comps["total"]):
            self.abort("world-model loss", {"observations": batch.observations, "actions": batch.actions,
                                            "rewards": batch.rewards}, self.wm.named_parameters())
        loss.backward()
        self.wm_opt.step()

        h = out.h.data.reshape(-1, self.wm.config.hidden)
        z = out.z.data.reshape(-1, self.wm.config.stoch)
        w = (batch.valid * batch.continues).reshape(-1)
        n = min(d.imag_starts, len(w))
        idx = np.sort(self.rng.choice(len(w), size=n, replace=False))
        ac = self.ac.train_step(self.wm, h[idx], z[idx], w[idx], self.rng)
        if not (np.isfinite(ac["actor_loss"]) and np.isfinite(ac["critic_loss"])):
            self.abort("actor-critic loss", {"h": h[idx], "z": z[idx]},
                       list(self.ac.actor.named_parameters()) + list(self.ac.critic.named_parameters()))
        self.updates += 1
        row = {f"wm_{k}": v for k, v in comps.items()}
        row.update({k: ac[k] for k in ("actor_loss", "critic_loss", "imag_return", "entropy", "return_scale")})
        self.loss_rows.append(row)
        return row

    def sections(self):
        ac = self.ac
        self.replay.spill(self.run_dir / "replay", skip_existing=True)
        counters = {"updates": np.int64(self.updates), "next_episode_id": np.int64(self.replay.next_id)}
        return {
            "world_model": self.wm.state_dict(),
            "wm_opt": self.wm_opt.state_dict(),
            "actor": ac.actor.state_dict(),
            "critic": ac.critic.state_dict(),
            "slow_critic": ac.slow_critic.state_dict(),
            "actor_opt": ac.actor_opt.state_dict(),
            "critic_opt": ac.critic_opt.state_dict(),
            "normalizer": ac.normalizer.state_dict(),
            "counters": counters,
            "replay": {"episode_ids": np.array(self.replay.episode_ids(), dtype=np.int64)},
        }

    def load_sections(self, s):
        ac = self.ac
        self.wm.load_state_dict(s["world_model"])
        self.wm_opt.load_state_dict(s["wm_opt"])
        ac.actor.load_state_dict(s["actor"])
        ac.critic.load_state_dict(s["critic"])
        ac.slow_critic.load_state_dict(s["slow_critic"])
        ac.actor_opt.load_state_dict(s["actor_opt"])
        ac.critic_opt.load_state_dict(s["critic_opt"])
        ac.normalizer.load_state_dict(s["normalizer"])
        self.updates = int(s["counters"]["updates"])
        self.replay.load_directory(self.run_dir / "replay", ids=s["replay"]["episode_ids"])
        self.replay.next_id = int(s["counters"]["next_episode_id"])


class PpoTrainer(BaseTrainer):
    algorithm = "ppo"

    def build(self, rng):
        self.agent = PpoAgent(self.cfg.obs_dim, self.cfg.ppo, rng)

    def acting_agent(self):
        return PpoActingAgent(self.agent.policy, self.cfg.ppo.frame_stack)

    def start_envs(self):
        envs = [make_env(self.cfg) for _ in range(self.cfg.ppo.num_envs)]
        self.collector = RolloutCollector(envs, self.cfg.ppo, seed=self.next_env_seed())

    def advance(self):
        p = self.cfg.ppo
        remaining = self.cfg.run.env_steps - self.env_steps
        steps = max(1, min(p.rollout_length, -(-remaining // p.num_envs)))
        seen = len(self.collector.episodes)
        batch = self.collector.collect(self.agent.policy, steps, self.rng)
        self.env_steps += steps * p.num_envs
        self.episodes.extend(self.collector.episodes[seen:])
        stats = self.agent.update(batch, self.rng)
        if not np.isfinite(stats["total"]):
            self.abort("ppo loss", {"observations": batch.observations, "rewards": batch.rewards},
                       self.agent.policy.named_parameters())
        self.loss_rows.append({"ppo_policy": stats["policy"], "ppo_value": stats["value"], "ppo_entropy": stats["entropy"],
                               "ppo_clip_fraction": stats["clip_fraction"]})

    def sections(self):
        return {"policy": self.agent.policy.state_dict(), "optimizer": self.agent.optimizer.state_dict()}

    def load_sections(self, s):
        self.agent.policy.load_state_dict(s["policy"])
        self.agent.optimizer.load_state_dict(s["optimizer"])


TRAINERS = {"dreamer": DreamerTrainer, "ppo": PpoTrainer}


def train(cfg: RunConfig, seed: int | None = None, run_dir=None, resume: bool = False) -> Path:
    """Train one seed (default: the first in the config) and return its run directory."""
    seed = cfg.run.seeds[0] if seed is None else seed
    trainer = TRAINERS[cfg.run.algorithm](cfg, seed, run_dir=run_dir, resume=resume)
    return trainer.run()
