"""Actor-critic trained on imagined latent trajectories."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .autodiff import distributions as D
from .autodiff import nn
from .autodiff import tensor as T
from .autodiff.optim import Adam
from .autodiff.tensor import Tensor
from .errors import ConfigurationError, ShapeError

ACTION_LIMIT = 1.0 - 1e-6


@dataclass(frozen=True)
class ActorCriticConfig:
    action_dim: int = 4
    units: int = 256
    layers: int = 2
    horizon: int = 16
    gamma: float = 0.99
    lam: float = 0.95
    entropy: float = 3e-4
    min_std: float = 0.1
    max_std: float = 1.0
    actor_lr: float = 3e-5
    critic_lr: float = 3e-5
    clip_norm: float = 100.0
    return_decay: float = 0.99
    return_low: float = 5.0
    return_high: float = 95.0
    slow_critic_fraction: float = 0.02
    slow_reg: float = 1.0
    bins: int = 255

    def __post_init__(self):
        if not (0.0 <= self.gamma <= 1.0 and 0.0 <= self.lam <= 1.0):
            raise ConfigurationError("gamma and lambda must lie in [0, 1]")
        if not 0.0 < self.min_std <= self.max_std:
            raise ConfigurationError("need 0 < min_std <= max_std")
        if not 0.0 <= self.slow_critic_fraction <= 1.0:
            raise ConfigurationError("slow_critic_fraction must lie in [0, 1]")
        if self.horizon < 1:
            raise ConfigurationError("horizon must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)


# -- returns ----------------------------------------------------------------------
def lambda_returns(rewards, continues, values, gamma: float, lam: float) -> np.ndarray:
    """Backward recursion ``R_t = r_t + gamma c_t ((1 - lam) v_{t+1} + lam R_{t+1})``, ``R_T = v_T``.

    ``rewards`` and ``continues`` have leading length T, ``values`` T + 1.
    """
    r = np.asarray(rewards, dtype=np.float64)
    c = np.asarray(continues, dtype=np.float64)
    v = np.asarray(values, dtype=np.float64)
    if r.shape != c.shape or v.shape[0] != r.shape[0] + 1 or v.shape[1:] != r.shape[1:]:
        raise ShapeError(f"lambda_returns needs r, c of shape (T, ...) and v of (T+1, ...); got {r.shape}, {c.shape}, {v.shape}")
    out = np.empty_like(r)
    nxt = v[-1]
    for t in range(r.shape[0] - 1, -1, -1):
        nxt = r[t] + gamma * c[t] * ((1.0 - lam) * v[t + 1] + lam * nxt)
        out[t] = nxt
    return out


class ReturnNormalizer:
    """Exponential moving estimates of the 5th and 95th return percentiles."""

    def __init__(self, decay: float = 0.99, low: float = 5.0, high: float = 95.0):
        self.decay = decay
        self.low_q, self.high_q = low, high
        self.low = 0.0
        self.high = 0.0

    @property
    def scale(self) -> float:
        return max(1.0, self.high - self.low)

    def update(self, returns) -> ReturnNormalizer:
        x = np.asarray(returns, dtype=np.float64).ravel()
        if x.size == 0:
            raise ValueError("cannot update the normalizer on an empty batch")
        lo, hi = np.percentile(x, [self.low_q, self.high_q])
        d = self.decay
        self.low = d * self.low + (1.0 - d) * float(lo)
        self.high = d * self.high + (1.0 - d) * float(hi)
        return self

    def state_dict(self) -> dict:
        return {"low": np.float64(self.low), "high": np.float64(self.high)}

    def load_state_dict(self, state: dict) -> None:
        self.low, self.high = float(state["low"]), float(state["high"])


# -- networks ---------------------------------------------------------------------
class Actor(nn.Module):
    """Squashed Gaussian: ``a = tanh(u)``, ``u ~ N(mean, std)`` with std in [min_std, max_std]."""

    def __init__(self, feat_dim: int, config: ActorCriticConfig, rng: np.random.Generator):
        self.config = config
        self.net = nn.MLP(feat_dim, [config.units] * config.layers, 2 * config.action_dim, rng)

    def __call__(self, feat) -> tuple[Tensor, Tensor]:
        feat = feat if isinstance(feat, Tensor) else Tensor(feat, dtype=self.net.out.W.data.dtype)
        out = self.net(feat)
        a = self.config.action_dim
        mean = out[..., :a]
        lo, hi = math.log(self.config.min_std), math.log(self.config.max_std)
        log_std = T.sigmoid(out[..., a:] + 2.0) * (hi - lo) + lo
        return mean, log_std

    def act(self, feat, rng: np.random.Generator | None = None, mode: str = "sample") -> tuple[np.ndarray, np.ndarray]:
        """Returns ``(action, u)``: the squashed action in (-1, 1) and its pre-squash value."""
        with T.no_grad():
            mean, log_std = self(feat)
        if mode == "mean":
            u = mean.data.astype(np.float64)
        elif mode == "sample":
            if rng is None:
                raise ValueError("sample mode needs an rng")
            u = mean.data + np.exp(log_std.data) * rng.standard_normal(mean.shape)
            u = u.astype(np.float64)
        else:
            raise ValueError(f"mode must be 'sample' or 'mean', got {mode!r}")
        return np.clip(np.tanh(u), -ACTION_LIMIT, ACTION_LIMIT), u

    def entropy(self, feat) -> np.ndarray:
        with T.no_grad():
            _, log_std = self(feat)
        return D.gaussian_entropy(log_std).data


class Critic(nn.Module):
    """Distributional value over symlog two-hot bins."""

    def __init__(self, feat_dim: int, config: ActorCriticConfig, rng: np.random.Generator):
        self.net = nn.MLP(feat_dim, [config.units] * config.layers, config.bins, rng, zero_out=True)
        self.bins = D.symlog_bins(config.bins)

    def __call__(self, feat) -> Tensor:
        feat = feat if isinstance(feat, Tensor) else Tensor(feat, dtype=self.net.out.W.data.dtype)
        return self.net(feat)

    def value(self, feat) -> np.ndarray:
        with T.no_grad():
            return D.twohot_mean(self(feat).data, self.bins)

    def probs(self, feat) -> np.ndarray:
        with T.no_grad():
            return T.softmax_np(self(feat).data.astype(np.float64))


# -- losses -------------------------------------------------------------------------
def actor_loss(actor: Actor, feat, u, advantages, weights, entropy_coef: float) -> Tensor:
    """REINFORCE on the stored pre-squash samples plus an entropy bonus.

    ``advantages`` are treated as constants; gradients reach only the actor.
    """
    mean, log_std = actor(feat)
    logp = D.squashed_gaussian_log_prob(mean, log_std, np.asarray(u))
    ent = D.gaussian_entropy(log_std)
    adv = np.asarray(advantages, dtype=mean.dtype)
    w = np.asarray(weights, dtype=mean.dtype)
    per_step = (logp * adv + ent * entropy_coef) * w
    return -T.tmean(per_step)


def critic_loss(critic: Critic, feat, returns, weights, slow_logits=None, slow_reg: float = 1.0) -> Tensor:
    """Two-hot NLL of the returns, plus ``KL(sg(slow) || critic)`` toward the slow critic."""
    logits = critic(feat)
    nll = D.twohot_nll(logits, np.asarray(returns), critic.bins)
    if slow_logits is not None and slow_reg > 0:
        slow = Tensor(np.asarray(slow_logits), dtype=logits.dtype)
        lead = logits.shape[:-1]
        kl = T.categorical_kl(slow.reshape(*lead, 1, -1), logits.reshape(*lead, 1, logits.shape[-1]))
        nll = nll + kl * slow_reg
    w = np.asarray(weights, dtype=logits.dtype)
    return T.tmean(nll * w)


class ActorCritic:
    """Owns the actor, critic, slow critic, return normalizer and both optimizers."""

    def __init__(self, feat_dim: int, config: ActorCriticConfig, rng: np.random.Generator):
        self.config = config
        self.actor = Actor(feat_dim, config, rng)
        self.critic = Critic(feat_dim, config, rng)
        self.slow_critic = Critic(feat_dim, config, rng)
        self.slow_critic.load_state_dict(self.critic.state_dict())
        self.normalizer = ReturnNormalizer(config.return_decay, config.return_low, config.return_high)
        self.actor_opt = Adam(self.actor.parameters(), lr=config.actor_lr, clip_norm=config.clip_norm)
        self.critic_opt = Adam(self.critic.parameters(), lr=config.critic_lr, clip_norm=config.clip_norm)

    def policy(self, feat: np.ndarray, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        return self.actor.act(feat, rng, "sample")

    def update_slow_critic(self) -> None:
        f = self.config.slow_critic_fraction
        for slow, fast in zip(self.slow_critic.parameters(), self.critic.parameters()):
            slow.data = ((1.0 - f) * slow.data + f * fast.data).astype(slow.data.dtype)

    def train_step(self, world_model, h0: np.ndarray, z0: np.ndarray, start_weights: np.ndarray, rng) -> dict:
        cfg = self.config
        traj = world_model.imagine(h0, z0, self.policy, cfg.horizon, rng)
        feat = traj["feat"]
        values = self.critic.value(feat)
        returns = lambda_returns(traj["reward"], traj["cont"], values, cfg.gamma, cfg.lam)
        disc = np.concatenate([np.ones((1,) + traj["cont"].shape[1:]), np.cumprod(traj["cont"][:-1], axis=0)], axis=0)
        weights = disc * np.asarray(start_weights, dtype=np.float64)[None]
        self.normalizer.update(returns)
        adv = (returns - values[:-1]) / self.normalizer.scale

        self.actor_opt.zero_grad()
        a_loss = actor_loss(self.actor, feat[:-1], traj["u"], adv, weights, cfg.entropy)
        a_loss.backward()
        a_norm = self.actor_opt.step()

        slow_logits = self.slow_critic(feat[:-1]).data if cfg.slow_reg > 0 else None
        self.critic_opt.zero_grad()
        c_loss = critic_loss(self.critic, feat[:-1], returns, weights, slow_logits, cfg.slow_reg)
        c_loss.backward()
        c_norm = self.critic_opt.step()
        self.update_slow_critic()
        return {
            "actor_loss": a_loss.item(),
            "critic_loss": c_loss.item(),
            "actor_grad_norm": a_norm,
            "critic_grad_norm": c_norm,
            "imag_return": float(np.mean(returns[0])),
            "imag_reward": float(np.mean(traj["reward"])),
            "return_scale": self.normalizer.scale,
            "value": float(np.mean(values)),
            "entropy": float(np.mean(self.actor.entropy(feat[:-1]))),
        }
