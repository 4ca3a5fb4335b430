"""Recurrent state-space world model with categorical latents.

Latent state ``s_k = (h_k, z_k)``: ``h`` is the GRU state, ``z`` is ``G`` one-hot
groups of ``C`` classes. The posterior sees ``(h_k, x_k)``, the prior only ``h_k``.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .autodiff import distributions as D
from .autodiff import nn
from .autodiff import tensor as T
from .autodiff.optim import Adam
from .autodiff.tensor import Tensor
from .errors import ConfigurationError, ShapeError


@dataclass(frozen=True)
class WorldModelConfig:
    obs_dim: int = 16 * 16 * 3
    action_dim: int = 4
    hidden: int = 256  # D_h
    groups: int = 8  # G
    classes: int = 8  # C
    units: int = 256
    encoder_layers: int = 2
    decoder_layers: int = 2
    head_layers: int = 1
    beta_pred: float = 1.0
    beta_dyn: float = 1.0
    beta_rep: float = 0.1
    free_bits: float = 1.0
    unimix: float = 0.01
    reward_bins: int = 255
    lr: float = 3e-4
    clip_norm: float = 100.0
    latent_mode: str = "sample"  # "probs" feeds softmax probabilities instead of samples

    def __post_init__(self):
        if min(self.beta_pred, self.beta_dyn, self.beta_rep) < 0:
            raise ConfigurationError("loss weights must be non-negative")
        if self.free_bits < 0:
            raise ConfigurationError("free_bits must be non-negative")
        if self.classes < 2 or self.groups < 1:
            raise ConfigurationError("need at least one group of two or more classes")
        if self.latent_mode not in ("sample", "probs"):
            raise ConfigurationError(f"latent_mode must be 'sample' or 'probs', got {self.latent_mode!r}")

    @property
    def stoch(self) -> int:
        return self.groups * self.classes

    @property
    def feat_dim(self) -> int:
        return self.hidden + self.stoch

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class WmOutputs:
    post_logits: Tensor  # (B, T, G, C), unimixed
    prior_logits: Tensor  # (B, T, G, C), unimixed
    z: Tensor  # (B, T, G*C)
    h: Tensor  # (B, T, D_h)
    recon: Tensor  # (B, T, obs_dim) mean of the unit-variance Gaussian
    reward_logits: Tensor  # (B, T, bins)
    cont_logit: Tensor  # (B, T)

    @property
    def feat(self) -> Tensor:
        return T.concat([self.h, self.z], axis=-1)

    def reward_mean(self, bins: np.ndarray) -> np.ndarray:
        return D.twohot_mean(self.reward_logits.data, bins)

    def cont_prob(self) -> np.ndarray:
        return T._sigmoid_np(self.cont_logit.data)


class WorldModel(nn.Module):
    def __init__(self, config: WorldModelConfig, rng: np.random.Generator):
        c = config
        self.config = c
        self.encoder = nn.MLP(c.obs_dim, [c.units] * c.encoder_layers, None, rng)
        self.post_net = nn.MLP(c.hidden + c.units, [c.units], c.stoch, rng)
        self.img_in = nn.Linear(c.stoch + c.action_dim, c.units, rng)
        self.img_norm = nn.LayerNorm(c.units)
        self.gru = nn.GRUCell(c.units, c.hidden, rng)
        self.prior_net = nn.MLP(c.hidden, [c.units], c.stoch, rng)
        self.decoder = nn.MLP(c.feat_dim, [c.units] * c.decoder_layers, c.obs_dim, rng)
        self.reward_head = nn.MLP(c.feat_dim, [c.units] * c.head_layers, c.reward_bins, rng, zero_out=True)
        self.cont_head = nn.MLP(c.feat_dim, [c.units] * c.head_layers, 1, rng)
        self.bins = D.symlog_bins(c.reward_bins)

    @property
    def dtype(self):
        return self.encoder.layers[0].W.data.dtype if self.encoder.layers else self.post_net.out.W.data.dtype

    def _t(self, x) -> Tensor:
        return x if isinstance(x, Tensor) else Tensor(np.asarray(x), dtype=self.dtype)

    def _groups(self, logits: Tensor) -> Tensor:
        lead = logits.shape[:-1]
        return logits.reshape(*lead, self.config.groups, self.config.classes)

    # -- single-step pieces ------------------------------------------------------
    def embed(self, x) -> Tensor:
        x = self._t(x)
        if x.shape[-1] != self.config.obs_dim:
            raise ShapeError(f"observation has {x.shape[-1]} features, model expects {self.config.obs_dim}")
        return self.encoder(x)

    def encode(self, h, x) -> Tensor:
        """Posterior logits ``(..., G, C)`` conditioned on ``h`` and the observation."""
        h = self._t(h)
        if h.shape[-1] != self.config.hidden:
            raise ShapeError(f"h has {h.shape[-1]} features, model expects {self.config.hidden}")
        return self._post_from_embed(h, self.embed(x))

    def _post_from_embed(self, h: Tensor, e: Tensor) -> Tensor:
        return T.unimix_logits(self._groups(self.post_net(T.concat([h, e], axis=-1))), self.config.unimix)

    def predict_prior(self, h) -> Tensor:
        return T.unimix_logits(self._groups(self.prior_net(self._t(h))), self.config.unimix)

    def recurrent_step(self, h, z, a) -> Tensor:
        x = T.concat([self._t(z), self._t(a)], axis=-1)
        x = T.silu(self.img_norm(self.img_in(x)))
        return self.gru(x, self._t(h))

    def latent(self, logits: Tensor, rng: np.random.Generator) -> Tensor:
        """Flattened one-hot latent (straight-through) or, in probs mode, the probabilities."""
        if self.config.latent_mode == "probs":
            z = T.softmax(logits)
        else:
            z = T.categorical_sample_straight_through(logits, rng)
        lead = logits.shape[:-2]
        return z.reshape(*lead, self.config.stoch)

    def heads(self, feat: Tensor) -> tuple[Tensor, Tensor, Tensor]:
        recon = self.decoder(feat)
        reward = self.reward_head(feat)
        cont = self.cont_head(feat)
        return recon, reward, cont.reshape(*cont.shape[:-1])

    def initial(self, batch: int) -> tuple[np.ndarray, np.ndarray]:
        return np.zeros((batch, self.config.hidden), self.dtype), np.zeros((batch, self.config.stoch), self.dtype)

    # -- sequences ---------------------------------------------------------------
    def observe(self, obs, actions, is_first, rng: np.random.Generator, h0=None) -> WmOutputs:
        """Roll the posterior through a (B, T) batch.

        At ``t = 0`` and wherever ``is_first`` is set the deterministic state is
        the initial value (zeros unless ``h0`` is given at t = 0); elsewhere it is
        ``f(h_{t-1}, z_{t-1}, a_{t-1})``.
        """
        obs = np.asarray(obs)
        B, L = obs.shape[:2]
        obs = obs.reshape(B, L, -1)
        actions = np.asarray(actions)
        first = np.asarray(is_first, dtype=self.dtype)
        embed = self.embed(obs)
        h = self._t(h0 if h0 is not None else self.initial(B)[0])
        hs, zs, posts = [], [], []
        z = None
        for t in range(L):
            if t > 0:
                keep = (1.0 - first[:, t])[:, None]
                h = self.recurrent_step(h, z * keep, actions[:, t - 1] * keep) * keep
            post = self._post_from_embed(h, embed[:, t])
            z = self.latent(post, rng)
            hs.append(h)
            zs.append(z)
            posts.append(post)
        h_all = T.stack(hs, axis=1)
        z_all = T.stack(zs, axis=1)
        post_all = T.stack(posts, axis=1)
        prior_all = self.predict_prior(h_all)
        feat = T.concat([h_all, z_all], axis=-1)
        recon, reward, cont = self.heads(feat)
        return WmOutputs(post_all, prior_all, z_all, h_all, recon, reward, cont)

    def loss(self, out: WmOutputs, obs, rewards, continues, valid, stop_gradients: bool = True) -> tuple[Tensor, dict]:
        B, L = np.shape(rewards)
        target = np.asarray(obs).reshape(B, L, -1)
        return world_model_loss(
            recon_nll=D.gaussian_nll_unit(out.recon, target),
            reward_nll=D.twohot_nll(out.reward_logits, np.asarray(rewards), self.bins),
            cont_nll=D.bernoulli_nll(out.cont_logit, np.asarray(continues)),
            post_logits=out.post_logits,
            prior_logits=out.prior_logits,
            valid=np.asarray(valid),
            config=self.config,
            recon_mse=np.mean((out.recon.data - target) ** 2, axis=-1),
            stop_gradients=stop_gradients,
        )

    # -- imagination ---------------------------------------------------------------
    def imagine(self, h0: np.ndarray, z0: np.ndarray, policy, horizon: int, rng: np.random.Generator) -> dict:
        """Roll the prior forward with actions from ``policy(feat, rng) -> (action, u)``.

        Runs without recording a graph, so nothing flows back into the model.
        Returns arrays: ``feat`` (H+1, N, F), ``u`` and ``action`` (H, N, A),
        ``reward`` and ``cont`` (H, N) predicted for states 1..H.
        """
        if horizon < 1:
            raise ValueError("horizon must be >= 1")
        with T.no_grad():
            h = self._t(h0)
            z = self._t(z0)
            feats, us, acts = [T.concat([h, z], axis=-1).data], [], []
            for _ in range(horizon):
                a, u = policy(feats[-1], rng)
                h = self.recurrent_step(h, z, a)
                z = self.latent(self.predict_prior(h), rng)
                feats.append(T.concat([h, z], axis=-1).data)
                us.append(u)
                acts.append(a)
            feat = np.stack(feats)
            _, reward_logits, cont_logit = self.heads(self._t(feat[1:]))
        return {
            "feat": feat,
            "u": np.stack(us),
            "action": np.stack(acts),
            "reward": D.twohot_mean(reward_logits.data, self.bins),
            "cont": T._sigmoid_np(cont_logit.data),
        }

    def make_optimizer(self) -> Adam:
        return Adam(self.parameters(), lr=self.config.lr, clip_norm=self.config.clip_norm)


def masked_mean(x: Tensor, mask: np.ndarray) -> Tensor:
    m = np.asarray(mask, dtype=x.dtype)
    return T.tsum(x * m) * (1.0 / max(float(m.sum()), 1.0))


def world_model_loss(
    recon_nll: Tensor,
    reward_nll: Tensor,
    cont_nll: Tensor,
    post_logits: Tensor,
    prior_logits: Tensor,
    valid: np.ndarray,
    config: WorldModelConfig,
    recon_mse: np.ndarray | None = None,
    stop_gradients: bool = True,
) -> tuple[Tensor, dict]:
    """Prediction, dynamics and representation terms, each a masked mean over valid steps.

    ``L_dyn = max(fb, KL(sg(post) || prior))`` trains the prior toward the posterior;
    ``L_rep = max(fb, KL(post || sg(prior)))`` regularizes the posterior.
    ``stop_gradients=False`` drops both ``sg`` so the gradient is the true derivative
    of the value, which is what finite-difference checks need.
    """
    fb = config.free_bits
    sg = (lambda t: t.detach()) if stop_gradients else (lambda t: t)
    kl_dyn = T.categorical_kl(sg(post_logits), prior_logits)
    kl_rep = T.categorical_kl(post_logits, sg(prior_logits))
    l_dyn = masked_mean(T.maximum(kl_dyn, fb), valid)
    l_rep = masked_mean(T.maximum(kl_rep, fb), valid)
    l_recon = masked_mean(recon_nll, valid)
    l_reward = masked_mean(reward_nll, valid)
    l_cont = masked_mean(cont_nll, valid)
    l_pred = l_recon + l_reward + l_cont
    # KL terms are grouped first so the weights combine exactly (1 + 0.1 == 1.1)
    total = l_pred * config.beta_pred + (l_dyn * config.beta_dyn + l_rep * config.beta_rep)
    m = np.asarray(valid, dtype=np.float64)
    denom = max(m.sum(), 1.0)
    comps = {
        "total": total.item(),
        "pred": l_pred.item(),
        "recon": l_recon.item(),
        "reward": l_reward.item(),
        "cont": l_cont.item(),
        "dyn": l_dyn.item(),
        "rep": l_rep.item(),
        "kl": float((kl_dyn.data * m).sum() / denom),
    }
    if recon_mse is not None:
        comps["recon_mse"] = float((recon_mse * m).sum() / denom)
    return total, comps
