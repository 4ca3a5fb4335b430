"""Acting wrappers shared by collection and evaluation.

All agents expose ``reset(n)`` and ``act(obs, is_first, rng, mode) -> actions``
for a batch of ``n`` environments; ``obs`` is flattened pixels in [0, 1].
"""
from __future__ import annotations

from collections import deque

import numpy as np

from .autodiff import tensor as T
from .policy import ActorCritic
from .ppo import PpoPolicy
from .replay import quantize
from .world_model import WorldModel


class DreamerAgent:
    """Posterior filter ``h_k = f(h_{k-1}, z_{k-1}, a_{k-1})``, ``z_k ~ q(.|h_k, x_k)`` feeding the actor.

    ``mode="mean"`` uses the actor mean and the most likely latent class, so
    evaluation is deterministic without any rng.
    """

    def __init__(self, world_model: WorldModel, actor_critic: ActorCritic):
        self.wm = world_model
        self.ac = actor_critic
        self.reset(1)

    def reset(self, n: int) -> None:
        self.h, self.z = self.wm.initial(n)
        self.prev_action = np.zeros((n, self.wm.config.action_dim))

    def observe(self, obs, is_first, rng: np.random.Generator | None, mode: str = "sample") -> np.ndarray:
        """Advance the latent filter by one observation; returns the feature vector."""
        first = np.asarray(is_first, dtype=bool)
        with T.no_grad():
            h = self.wm.recurrent_step(self.h, self.z, self.prev_action).data
            h[first] = 0.0
            # same 8-bit quantization the replay applies, so acting and training see identical pixels
            logits = self.wm.encode(h, quantize(obs) / 255.0)
            if mode == "mean":
                if self.wm.config.latent_mode == "probs":
                    z = T.softmax_np(logits.data)
                else:
                    z = np.eye(self.wm.config.classes, dtype=h.dtype)[logits.data.argmax(-1)]
                z = z.reshape(len(h), -1).astype(h.dtype)
            else:
                z = self.wm.latent(logits, rng).data
        self.h, self.z = h, z
        return np.concatenate([h, z], axis=-1)

    def act(self, obs, is_first, rng: np.random.Generator | None = None, mode: str = "sample") -> np.ndarray:
        feat = self.observe(obs, is_first, rng, mode)
        action, _ = self.ac.actor.act(feat, rng, mode)
        self.prev_action = action
        return action

    def override_action(self, action) -> None:
        """Record an externally chosen action (e.g. random prefill) as the one taken."""
        self.prev_action = np.asarray(action, dtype=np.float64)


class PpoActingAgent:
    def __init__(self, policy: PpoPolicy, frame_stack: int = 1):
        self.policy = policy
        self.frame_stack = frame_stack
        self.reset(1)

    def reset(self, n: int) -> None:
        self._frames = [deque(maxlen=self.frame_stack) for _ in range(n)]

    def act(self, obs, is_first, rng=None, mode: str = "mean") -> np.ndarray:
        obs = np.asarray(obs, dtype=np.float64)
        stacked = []
        for i, frames in enumerate(self._frames):
            if is_first[i] or not frames:
                frames.clear()
                frames.extend([obs[i]] * self.frame_stack)
            else:
                frames.append(obs[i])
            stacked.append(np.concatenate(list(frames)))
        action, _, _, _ = self.policy.act(np.stack(stacked), rng, mode)
        return action


class RandomAgent:
    def __init__(self, action_dim: int = 4):
        self.action_dim = action_dim

    def reset(self, n: int) -> None:
        self.n = n

    def act(self, obs, is_first, rng: np.random.Generator, mode: str = "sample") -> np.ndarray:
        return rng.uniform(-1.0, 1.0, (len(obs), self.action_dim))
