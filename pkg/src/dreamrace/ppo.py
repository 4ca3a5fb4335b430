"""Model-free PPO baseline on flattened pixels."""
from __future__ import annotations

from collections import deque
from dataclasses import asdict, dataclass

import numpy as np

from .autodiff import distributions as D
from .autodiff import nn
from .autodiff import tensor as T
from .autodiff.optim import Adam
from .autodiff.tensor import Parameter, Tensor
from .errors import ConfigurationError, ShapeError

ACTION_LIMIT = 1.0 - 1e-6


@dataclass(frozen=True)
class PpoConfig:
    clip: float = 0.2
    lam: float = 0.95
    gamma: float = 0.99
    num_envs: int = 4
    rollout_length: int = 256
    minibatch_size: int = 256
    epochs: int = 4
    layers: int = 3
    units: int = 256
    lr: float = 3e-4
    entropy: float = 1e-3
    value_coef: float = 0.5
    clip_norm: float = 0.5
    init_log_std: float = -0.5
    frame_stack: int = 1
    action_dim: int = 4

    def __post_init__(self):
        if not 0.0 < self.clip < 1.0:
            raise ConfigurationError(f"clip must lie in (0, 1), got {self.clip}")
        if self.frame_stack not in (1, 3):
            raise ConfigurationError("frame_stack must be 1 or 3")
        if min(self.num_envs, self.rollout_length, self.minibatch_size, self.epochs) < 1:
            raise ConfigurationError("sizes must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


def gae(rewards, values, continues, gamma: float, lam: float) -> np.ndarray:
    """``A_t = delta_t + gamma lam c_t A_{t+1}`` with ``delta_t = r_t + gamma c_t v_{t+1} - v_t``."""
    r = np.asarray(rewards, dtype=np.float64)
    v = np.asarray(values, dtype=np.float64)
    c = np.asarray(continues, dtype=np.float64)
    if r.shape != c.shape or v.shape[0] != r.shape[0] + 1 or v.shape[1:] != r.shape[1:]:
        raise ShapeError(f"gae needs r, c of shape (T, ...) and v of (T+1, ...); got {r.shape}, {c.shape}, {v.shape}")
    adv = np.empty_like(r)
    nxt = np.zeros(r.shape[1:])
    for t in range(r.shape[0] - 1, -1, -1):
        delta = r[t] + gamma * c[t] * v[t + 1] - v[t]
        nxt = delta + gamma * lam * c[t] * nxt
        adv[t] = nxt
    return adv


class PpoPolicy(nn.Module):
    """Separate tanh MLPs for the actor mean and the value; state-independent log-std.

    The env receives ``tanh(u)``. Ratios use the Gaussian density of ``u``: the
    squash Jacobian is identical under old and new policy and cancels.
    """

    def __init__(self, obs_dim: int, config: PpoConfig, rng: np.random.Generator):
        hidden = [config.units] * config.layers
        self.actor = nn.MLP(obs_dim, hidden, config.action_dim, rng, act="tanh", norm=False)
        self.actor.out.W.data *= 0.01
        self.log_std = Parameter(np.full(config.action_dim, config.init_log_std))
        self.critic = nn.MLP(obs_dim, hidden, 1, rng, act="tanh", norm=False)
        self.obs_dim = obs_dim

    def _t(self, x) -> Tensor:
        return x if isinstance(x, Tensor) else Tensor(np.asarray(x), dtype=self.log_std.data.dtype)

    def distribution(self, obs) -> tuple[Tensor, Tensor]:
        mean = self.actor(self._t(obs))
        return mean, self.log_std + mean * 0.0

    def value(self, obs) -> Tensor:
        v = self.critic(self._t(obs))
        return v.reshape(*v.shape[:-1])

    def act(self, obs, rng: np.random.Generator | None = None, mode: str = "sample"):
        """Returns ``(action, u, log_prob, value)`` as arrays."""
        with T.no_grad():
            mean, log_std = self.distribution(obs)
            value = self.value(obs).data.astype(np.float64)
            if mode == "mean":
                u = mean.data.astype(np.float64)
            elif mode == "sample":
                if rng is None:
                    raise ValueError("sample mode needs an rng")
                u = (mean.data + np.exp(log_std.data) * rng.standard_normal(mean.shape)).astype(np.float64)
            else:
                raise ValueError(f"mode must be 'sample' or 'mean', got {mode!r}")
            logp = D.gaussian_log_prob(mean, log_std, u).data.astype(np.float64)
        return np.clip(np.tanh(u), -ACTION_LIMIT, ACTION_LIMIT), u, logp, value


def ppo_loss(policy: PpoPolicy, obs, u, old_log_prob, advantages, returns, config: PpoConfig) -> tuple[Tensor, dict]:
    mean, log_std = policy.distribution(obs)
    logp = D.gaussian_log_prob(mean, log_std, np.asarray(u))
    ratio = T.exp(logp - np.asarray(old_log_prob, dtype=logp.dtype))
    adv = np.asarray(advantages, dtype=logp.dtype)
    eps = config.clip
    surrogate = T.minimum(ratio * adv, T.clip(ratio, 1.0 - eps, 1.0 + eps) * adv)
    policy_loss = -T.tmean(surrogate)
    value_loss = T.tmean(T.square(policy.value(obs) - np.asarray(returns, dtype=logp.dtype)))
    entropy = T.tmean(D.gaussian_entropy(log_std))
    total = policy_loss + value_loss * config.value_coef - entropy * config.entropy
    r = ratio.data
    comps = {
        "total": total.item(),
        "policy": policy_loss.item(),
        "value": value_loss.item(),
        "entropy": entropy.item(),
        "clip_fraction": float(np.mean((r < 1.0 - eps) | (r > 1.0 + eps))),
        "approx_kl": float(np.mean((r - 1.0) - np.log(r))),
    }
    return total, comps


@dataclass
class RolloutBatch:
    observations: np.ndarray  # (T, N, D)
    actions: np.ndarray  # (T, N, A), squashed
    u: np.ndarray  # (T, N, A), pre-squash
    log_probs: np.ndarray  # (T, N)
    rewards: np.ndarray  # (T, N) as returned by the env
    values: np.ndarray  # (T+1, N)
    continues: np.ndarray  # (T, N), 0 at every episode end
    bootstrap: np.ndarray  # (T, N), v(s_T) at truncations, else 0
    advantages: np.ndarray  # (T, N)
    returns: np.ndarray  # (T, N)

    def validate(self) -> None:
        T_, N = self.rewards.shape
        for name in ("log_probs", "continues", "bootstrap", "advantages", "returns"):
            if getattr(self, name).shape != (T_, N):
                raise ShapeError(f"{name} has shape {getattr(self, name).shape}, expected {(T_, N)}")
        if self.values.shape != (T_ + 1, N):
            raise ShapeError(f"values has shape {self.values.shape}, expected {(T_ + 1, N)}")
        if not np.all(np.isfinite(self.advantages)):
            raise ValueError("non-finite advantages")


class RolloutCollector:
    """Steps ``N`` environments in lockstep and resets finished ones with fresh seeds."""

    def __init__(self, envs: list, config: PpoConfig, seed: int = 0):
        self.envs = envs
        self.config = config
        self._seeds = np.random.default_rng(seed)
        self._frames: list[deque] = []
        self._returns = np.zeros(len(envs))
        self._lengths = np.zeros(len(envs), dtype=np.int64)
        self.episodes: list[dict] = []
        self.total_steps = 0
        for env in envs:
            _, obs = env.reset(int(self._seeds.integers(2**31)))
            self._frames.append(self._fresh_stack(obs))

    def _fresh_stack(self, obs) -> deque:
        flat = np.asarray(obs, dtype=np.float64).ravel()
        return deque([flat] * self.config.frame_stack, maxlen=self.config.frame_stack)

    def observation(self, i: int) -> np.ndarray:
        return np.concatenate(list(self._frames[i]))

    def observations(self) -> np.ndarray:
        return np.stack([self.observation(i) for i in range(len(self.envs))])

    def collect(self, policy: PpoPolicy, steps: int, rng: np.random.Generator) -> RolloutBatch:
        cfg = self.config
        N = len(self.envs)
        obs_buf, act_buf, u_buf, logp_buf = [], [], [], []
        rew = np.zeros((steps, N))
        cont = np.ones((steps, N))
        boot = np.zeros((steps, N))
        vals = np.zeros((steps + 1, N))
        for t in range(steps):
            obs = self.observations()
            a, u, logp, v = policy.act(obs, rng)
            obs_buf.append(obs)
            act_buf.append(a)
            u_buf.append(u)
            logp_buf.append(logp)
            vals[t] = v
            for i, env in enumerate(self.envs):
                _, nobs, r, done, info = env.step(a[i])
                rew[t, i] = r
                self._returns[i] += r
                self._lengths[i] += 1
                self._frames[i].append(np.asarray(nobs, dtype=np.float64).ravel())
                if done:
                    cont[t, i] = 0.0
                    if info["truncated"]:
                        with T.no_grad():
                            boot[t, i] = float(policy.value(self.observation(i)[None]).data[0])
                    self.episodes.append(
                        {"return": float(self._returns[i]), "length": int(self._lengths[i]), "cause": info["cause"],
                         "gates": int(env.state.gates_passed)}
                    )
                    self._returns[i], self._lengths[i] = 0.0, 0
                    _, first = env.reset(int(self._seeds.integers(2**31)))
                    self._frames[i] = self._fresh_stack(first)
            self.total_steps += N
        _, _, _, vals[steps] = policy.act(self.observations(), mode="mean")
        adv = gae(rew + cfg.gamma * boot, vals, cont, cfg.gamma, cfg.lam)
        batch = RolloutBatch(
            np.stack(obs_buf), np.stack(act_buf), np.stack(u_buf), np.stack(logp_buf),
            rew, vals, cont, boot, adv, adv + vals[:-1],
        )
        batch.validate()
        return batch


class PpoAgent:
    def __init__(self, obs_dim: int, config: PpoConfig, rng: np.random.Generator):
        self.config = config
        self.policy = PpoPolicy(obs_dim * config.frame_stack, config, rng)
        self.optimizer = Adam(self.policy.parameters(), lr=config.lr, clip_norm=config.clip_norm)

    def update(self, batch: RolloutBatch, rng: np.random.Generator) -> dict:
        cfg = self.config
        T_, N = batch.rewards.shape
        flat = lambda x: x.reshape(T_ * N, *x.shape[2:])
        obs, u, logp, ret = flat(batch.observations), flat(batch.u), flat(batch.log_probs), flat(batch.returns)
        adv = flat(batch.advantages)
        adv = (adv - adv.mean()) / (adv.std() + 1e-8)
        n = T_ * N
        history = []
        for _ in range(cfg.epochs):
            order = rng.permutation(n)
            for start in range(0, n, cfg.minibatch_size):
                idx = order[start : start + cfg.minibatch_size]
                self.optimizer.zero_grad()
                loss, comps = ppo_loss(self.policy, obs[idx], u[idx], logp[idx], adv[idx], ret[idx], cfg)
                loss.backward()
                comps["grad_norm"] = self.optimizer.step()
                history.append(comps)
        return {k: float(np.mean([h[k] for h in history])) for k in history[0]}
