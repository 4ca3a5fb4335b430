import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dreamrace.autodiff import distributions as D
from dreamrace.autodiff import tensor as T
from dreamrace.autodiff.gradcheck import grad_check
from dreamrace.env import EnvConfig, RaceEnv
from dreamrace.env.reward import compute_reward
from dreamrace.errors import ConfigurationError, ShapeError
from dreamrace.ppo import (
    PpoAgent,
    PpoConfig,
    PpoPolicy,
    RolloutCollector,
    gae,
    ppo_loss,
)

SMALL = PpoConfig(layers=1, units=16, num_envs=2, rollout_length=8, minibatch_size=8, epochs=2)


def double_loop_gae(r, v, c, gamma, lam):
    T_ = len(r)
    delta = [r[t] + gamma * c[t] * v[t + 1] - v[t] for t in range(T_)]
    out = np.zeros(T_)
    for t in range(T_):
        acc, disc = 0.0, 1.0
        for k in range(t, T_):
            acc += disc * delta[k]
            disc *= gamma * lam * c[k]
        out[t] = acc
    return out


class TestGae:
    def test_lambda_zero_is_delta(self):
        rng = np.random.default_rng(0)
        r, v, c = rng.normal(size=7), rng.normal(size=8), (rng.random(7) < 0.7).astype(float)
        np.testing.assert_allclose(gae(r, v, c, 0.9, 0.0), r + 0.9 * c * v[1:] - v[:-1], atol=1e-15)

    def test_fixed_point(self):
        gamma = 0.99
        A = gae(np.ones(64), np.full(65, 1 / (1 - gamma)), np.ones(64), gamma, 0.95)
        np.testing.assert_allclose(A, 0.0, atol=1e-12)

    @settings(max_examples=200, deadline=None)
    @given(st.integers(1, 64), st.floats(0, 1), st.floats(0, 1), st.integers(0, 2**31))
    def test_matches_double_loop(self, T_, gamma, lam, seed):
        rng = np.random.default_rng(seed)
        r, v = rng.normal(size=T_), rng.normal(size=T_ + 1)
        c = (rng.random(T_) < 0.8).astype(float)
        np.testing.assert_allclose(gae(r, v, c, gamma, lam), double_loop_gae(r, v, c, gamma, lam), rtol=0, atol=1e-12)

    def test_length_mismatch(self):
        with pytest.raises(ShapeError):
            gae(np.ones(3), np.ones(3), np.ones(3), 0.9, 0.9)


def tiny_policy(obs_dim=6, **kw):
    cfg = PpoConfig(**{**SMALL.to_dict(), "action_dim": 2, **kw})
    return PpoPolicy(obs_dim, cfg, np.random.default_rng(0)), cfg


class TestLoss:
    def setup_batch(self, policy, shift=0.0):
        rng = np.random.default_rng(1)
        obs = rng.normal(size=(4, 6))
        u = rng.normal(size=(4, 2))
        with T.no_grad():
            mean, log_std = policy.distribution(obs)
            logp = D.gaussian_log_prob(mean, log_std, u).data.astype(np.float64)
        return obs, u, logp - shift, rng.normal(size=4), rng.normal(size=4)

    def test_same_policy_ratio_one(self):
        policy, cfg = tiny_policy()
        obs, u, logp, adv, ret = self.setup_batch(policy)
        _, comps = ppo_loss(policy, obs, u, logp, adv, ret, cfg)
        assert comps["clip_fraction"] == 0.0
        assert abs(comps["policy"] + adv.mean()) < 1e-6

    def test_clip_caps_positive_advantage(self):
        with T.precision(64):
            policy, cfg = tiny_policy(value_coef=0.0, entropy=0.0)
            obs, u, logp, _, ret = self.setup_batch(policy, shift=math.log(1.5))
            adv = np.array([1.0, 2.0, 0.5, 3.0])
            loss, comps = ppo_loss(policy, obs, u, logp, adv, ret, cfg)
            assert abs(comps["policy"] + 1.2 * adv.mean()) < 1e-12
            loss.backward()
        # clipped on every sample: no gradient pushes the ratio further
        assert all(np.all(p.grad == 0.0) for p in policy.actor.parameters())
        assert np.all(policy.log_std.grad == 0.0)

    def test_gradient(self):
        with T.precision(64):
            policy, cfg = tiny_policy()
            obs, u, logp, adv, ret = self.setup_batch(policy, shift=0.05)
            err = grad_check(lambda: ppo_loss(policy, obs, u, logp, adv, ret, cfg)[0], policy.parameters())
        assert err < 1e-6

    def test_config_rejects_clip(self):
        with pytest.raises(ConfigurationError):
            PpoConfig(clip=1.0)


def make_envs(n, **env_kw):
    return [RaceEnv(EnvConfig(**env_kw)) for _ in range(n)]


class TestRollout:
    def test_deterministic(self):
        outs = []
        for _ in range(2):
            policy = PpoPolicy(768, SMALL, np.random.default_rng(0))
            col = RolloutCollector(make_envs(2), SMALL, seed=3)
            outs.append(col.collect(policy, 12, np.random.default_rng(4)))
        for name in ("observations", "actions", "rewards", "values", "advantages"):
            assert getattr(outs[0], name).tobytes() == getattr(outs[1], name).tobytes()

    def test_rewards_match_replay(self):
        policy = PpoPolicy(768, SMALL, np.random.default_rng(0))
        col = RolloutCollector(make_envs(1), SMALL, seed=5)
        batch = col.collect(policy, 20, np.random.default_rng(6))
        env = RaceEnv(EnvConfig())
        state, _ = env.reset(int(np.random.default_rng(5).integers(2**31)))
        for t in range(20):
            prev = state.quad.p.copy()
            target = env.current_target().center.copy()
            state, _, r, done, info = env.step(batch.actions[t, 0])
            oracle = compute_reward(prev, state.quad.p, target, info["omega"], info["events"], env.reward_config)
            assert r == batch.rewards[t, 0] == oracle
            if done:
                break

    def test_truncation_bootstraps_and_termination_does_not(self):
        policy = PpoPolicy(768, SMALL, np.random.default_rng(0))
        batch = RolloutCollector(make_envs(1, max_steps=5), SMALL, seed=0).collect(policy, 10, np.random.default_rng(0))
        ends = np.flatnonzero(batch.continues[:, 0] == 0)
        np.testing.assert_array_equal(ends, [4, 9])
        assert np.all(batch.bootstrap[ends, 0] != 0.0)

        falling = PpoPolicy(768, SMALL, np.random.default_rng(0))
        falling.actor.out.b.data[0] = -30.0  # zero thrust: drop to the ground
        col = RolloutCollector(make_envs(1, max_steps=500), SMALL, seed=0)
        batch = col.collect(falling, 80, np.random.default_rng(0))
        assert col.episodes and col.episodes[0]["cause"] == "collision"
        ends = np.flatnonzero(batch.continues[:, 0] == 0)
        np.testing.assert_array_equal(batch.bootstrap[ends, 0], 0.0)

    def test_frame_stack(self):
        cfg = PpoConfig(**{**SMALL.to_dict(), "frame_stack": 3})
        agent = PpoAgent(768, cfg, np.random.default_rng(0))
        col = RolloutCollector(make_envs(2), cfg, seed=0)
        obs = col.observations()
        assert obs.shape == (2, 3 * 768)
        np.testing.assert_array_equal(obs[:, :768], obs[:, 768 * 2 :])  # reset fills the stack
        batch = col.collect(agent.policy, 4, np.random.default_rng(0))
        assert batch.observations.shape == (4, 2, 3 * 768)


def test_update_runs_and_moves_parameters():
    agent = PpoAgent(768, SMALL, np.random.default_rng(0))
    col = RolloutCollector(make_envs(2), SMALL, seed=0)
    before = agent.policy.state_dict()
    stats = agent.update(col.collect(agent.policy, 8, np.random.default_rng(0)), np.random.default_rng(1))
    assert all(np.isfinite(v) for v in stats.values())
    after = agent.policy.state_dict()
    assert any(not np.array_equal(before[k], after[k]) for k in before)
