"""Registry of finite-difference gradient checks run at 64-bit precision on tiny shapes.

Every check returns the max relative error of the analytic gradient. Checks
look operations up on the tensor module at call time, so a patched operation
is what gets tested.
"""
from __future__ import annotations

import time
from collections.abc import Callable

import numpy as np

from .autodiff import distributions as D
from .autodiff import nn
from .autodiff import tensor as T
from .autodiff.gradcheck import grad_check
from .autodiff.tensor import Parameter
from .errors import ConfigurationError

TOLERANCE = 1e-4
CHECKS: dict[str, Callable[[], float]] = {}


def register(name: str):
    def wrap(fn):
        CHECKS[name] = fn
        return fn

    return wrap


def _param(rng, *shape, away_from=None, scale=1.0) -> Parameter:
    """Random parameter; ``away_from`` keeps entries at least 0.1 from a kink."""
    x = rng.normal(size=shape) * scale
    if away_from is not None:
        x = np.where(np.abs(x - away_from) < 0.1, x + 0.3, x)
    return Parameter(x)


def _unary(fn_name: str, positive: bool = False, kink=None):
    def check():
        rng = np.random.default_rng(len(fn_name))
        x = _param(rng, 3, 4, away_from=kink)
        if positive:
            x.data[...] = np.abs(x.data) + 0.5
        w = rng.normal(size=x.shape)
        return grad_check(lambda: T.tsum(getattr(T, fn_name)(x) * w), [x])

    return check


for _name, _pos, _kink in [("exp", False, None), ("log", True, None), ("tanh", False, None), ("sigmoid", False, None),
                           ("silu", False, None), ("relu", False, 0.0), ("softplus", False, None),
                           ("sqrt", True, None), ("square", False, None), ("neg", False, None)]:
    register(_name)(_unary(_name, _pos, _kink))


def _binary(fn_name: str, b_positive: bool = False):
    def check():
        rng = np.random.default_rng(7 + len(fn_name))
        a, b = _param(rng, 3, 4), _param(rng, 4)
        if b_positive:
            b.data[...] = np.abs(b.data) + 0.5
        else:
            b.data[...] += np.where(np.abs(a.data - b.data).min(0) < 0.1, 0.3, 0.0)
        w = rng.normal(size=(3, 4))
        return grad_check(lambda: T.tsum(getattr(T, fn_name)(a, b) * w), [a, b])

    return check


for _name, _pos in [("add", False), ("sub", False), ("mul", False), ("div", True), ("minimum", False)]:
    register(_name)(_binary(_name, _pos))


@register("power")
def _check_power():
    rng = np.random.default_rng(1)
    x = Parameter(np.abs(rng.normal(size=(3, 4))) + 0.5)
    w = rng.normal(size=x.shape)
    return grad_check(lambda: T.tsum(T.power(x, 2.5) * w), [x])


@register("matmul")
def _check_matmul():
    rng = np.random.default_rng(2)
    a, b = _param(rng, 2, 3, 4), _param(rng, 4, 5)
    w = rng.normal(size=(2, 3, 5))
    return grad_check(lambda: T.tsum(T.matmul(a, b) * w), [a, b])


@register("affine")
def _check_affine():
    rng = np.random.default_rng(3)
    x, W, b = _param(rng, 3, 4), _param(rng, 4, 2), _param(rng, 2)
    w = rng.normal(size=(3, 2))
    return grad_check(lambda: T.tsum(T.affine(x, W, b) * w), [x, W, b])


@register("maximum")
def _check_maximum():
    rng = np.random.default_rng(4)
    x = _param(rng, 3, 4, away_from=0.2)
    w = rng.normal(size=x.shape)
    return grad_check(lambda: T.tsum(T.maximum(x, 0.2) * w), [x])


@register("clip")
def _check_clip():
    rng = np.random.default_rng(5)
    x = _param(rng, 4, 4, away_from=0.5)
    x.data[...] = np.where(np.abs(x.data + 0.5) < 0.1, x.data - 0.3, x.data)
    w = rng.normal(size=x.shape)
    return grad_check(lambda: T.tsum(T.clip(x, -0.5, 0.5) * w), [x])


@register("where")
def _check_where():
    rng = np.random.default_rng(6)
    a, b = _param(rng, 3, 4), _param(rng, 3, 4)
    cond = rng.random((3, 4)) > 0.5
    w = rng.normal(size=(3, 4))
    return grad_check(lambda: T.tsum(T.where(cond, a, b) * w), [a, b])


@register("sum")
def _check_sum():
    rng = np.random.default_rng(8)
    x = _param(rng, 2, 3, 4)
    w = rng.normal(size=(2, 4))
    return grad_check(lambda: T.tsum(T.tsum(x, axis=1) * w), [x])


@register("mean")
def _check_mean():
    rng = np.random.default_rng(9)
    x = _param(rng, 2, 3, 4)
    w = rng.normal(size=(2, 3, 1))
    return grad_check(lambda: T.tsum(T.tmean(x, axis=-1, keepdims=True) * w), [x])


@register("reshape")
def _check_reshape():
    rng = np.random.default_rng(10)
    x = _param(rng, 2, 6)
    w = rng.normal(size=(3, 4))
    return grad_check(lambda: T.tsum(T.reshape(x, (3, 4)) * w), [x])


@register("transpose")
def _check_transpose():
    rng = np.random.default_rng(11)
    x = _param(rng, 2, 3, 4)
    w = rng.normal(size=(4, 2, 3))
    return grad_check(lambda: T.tsum(T.transpose(x, (2, 0, 1)) * w), [x])


@register("getitem")
def _check_getitem():
    rng = np.random.default_rng(12)
    x = _param(rng, 5, 3)
    idx = np.array([0, 2, 2, 4])
    w = rng.normal(size=(4, 2))
    return grad_check(lambda: T.tsum(T.getitem(x, (idx, slice(1, 3))) * w), [x])


@register("concat")
def _check_concat():
    rng = np.random.default_rng(13)
    a, b = _param(rng, 3, 2), _param(rng, 3, 4)
    w = rng.normal(size=(3, 6))
    return grad_check(lambda: T.tsum(T.concat([a, b], axis=-1) * w), [a, b])


@register("stack")
def _check_stack():
    rng = np.random.default_rng(14)
    a, b = _param(rng, 3, 2), _param(rng, 3, 2)
    w = rng.normal(size=(3, 2, 2))
    return grad_check(lambda: T.tsum(T.stack([a, b], axis=1) * w), [a, b])


@register("softmax")
def _check_softmax():
    rng = np.random.default_rng(15)
    x = _param(rng, 3, 5)
    w = rng.normal(size=x.shape)
    return grad_check(lambda: T.tsum(T.softmax(x) * w), [x])


@register("log_softmax")
def _check_log_softmax():
    rng = np.random.default_rng(16)
    x = _param(rng, 3, 5)
    w = rng.normal(size=x.shape)
    return grad_check(lambda: T.tsum(T.log_softmax(x) * w), [x])


@register("layer_norm")
def _check_layer_norm():
    rng = np.random.default_rng(17)
    x, g, b = _param(rng, 3, 5), _param(rng, 5), _param(rng, 5)
    w = rng.normal(size=(3, 5))
    return grad_check(lambda: T.tsum(T.layer_norm(x, g, b) * w), [x, g, b])


@register("straight_through")
def _check_straight_through():
    # with the sample equal to the probabilities the surrogate is the identity
    rng = np.random.default_rng(18)
    x = _param(rng, 3, 4)
    w = rng.normal(size=x.shape)

    def f():
        p = T.softmax(x)
        return T.tsum(T.straight_through(p.data, p) * w)

    return grad_check(f, [x])


@register("categorical_kl")
def _check_kl():
    rng = np.random.default_rng(19)
    p, q = _param(rng, 2, 3, 4), _param(rng, 2, 3, 4)
    w = rng.normal(size=2)
    return grad_check(lambda: T.tsum(T.categorical_kl(p, q) * w), [p, q])


@register("unimix")
def _check_unimix():
    rng = np.random.default_rng(20)
    x = _param(rng, 3, 4)
    w = rng.normal(size=x.shape)
    return grad_check(lambda: T.tsum(T.unimix_logits(x, 0.01) * w), [x])


# -- distributions -------------------------------------------------------------------
@register("twohot_nll")
def _check_twohot():
    rng = np.random.default_rng(21)
    bins = D.symlog_bins(11, -5.0, 5.0)
    logits = _param(rng, 4, 11)
    targets = rng.normal(size=4) * 10
    return grad_check(lambda: T.tsum(D.twohot_nll(logits, targets, bins)), [logits])


@register("bernoulli_nll")
def _check_bernoulli():
    rng = np.random.default_rng(22)
    logit = _param(rng, 5, scale=3.0)
    target = (rng.random(5) > 0.5).astype(float)
    return grad_check(lambda: T.tsum(D.bernoulli_nll(logit, target)), [logit])


@register("gaussian_nll_unit")
def _check_gaussian_unit():
    rng = np.random.default_rng(23)
    mean = _param(rng, 3, 4)
    target = rng.random((3, 4))
    return grad_check(lambda: T.tsum(D.gaussian_nll_unit(mean, target)), [mean])


@register("squashed_gaussian_log_prob")
def _check_squashed():
    rng = np.random.default_rng(24)
    mean, log_std = _param(rng, 3, 2), _param(rng, 3, 2, scale=0.3)
    u = rng.normal(size=(3, 2))
    w = rng.normal(size=3)
    return grad_check(lambda: T.tsum(D.squashed_gaussian_log_prob(mean, log_std, u) * w), [mean, log_std])


@register("gaussian_entropy")
def _check_entropy():
    rng = np.random.default_rng(25)
    log_std = _param(rng, 3, 2)
    w = rng.normal(size=3)
    return grad_check(lambda: T.tsum(D.gaussian_entropy(log_std) * w), [log_std])


# -- networks ------------------------------------------------------------------------
@register("network:mlp")
def _check_mlp():
    rng = np.random.default_rng(26)
    net = nn.MLP(4, [6, 5], 3, rng)
    x = rng.normal(size=(3, 4))
    w = rng.normal(size=(3, 3))
    return grad_check(lambda: T.tsum(net(T.Tensor(x)) * w), net.parameters())


@register("network:gru")
def _check_gru():
    rng = np.random.default_rng(27)
    cell = nn.GRUCell(3, 4, rng)
    x, h = rng.normal(size=(2, 3)), rng.normal(size=(2, 4))
    w = rng.normal(size=(2, 4))

    def f():
        # two steps so the recurrent path is exercised
        h1 = cell(T.Tensor(x), T.Tensor(h))
        return T.tsum(cell(T.Tensor(x) * 0.5, h1) * w)

    return grad_check(f, cell.parameters())


# -- composite losses ----------------------------------------------------------------
@register("loss:world_model_total")
def _check_world_model():
    from .world_model import WorldModel, WorldModelConfig

    cfg = WorldModelConfig(obs_dim=12, action_dim=2, hidden=6, groups=2, classes=3, units=8, reward_bins=15,
                           latent_mode="probs", free_bits=0.0)
    m = WorldModel(cfg, np.random.default_rng(0))
    rng = np.random.default_rng(1)
    for p in m.reward_head.out.parameters():
        p.data[...] = rng.normal(size=p.shape) * 0.1
    B, L = 2, 3
    obs = rng.random((B, L, cfg.obs_dim))
    act = rng.uniform(-1, 1, (B, L, cfg.action_dim))
    rew = rng.normal(size=(B, L))
    cont = np.ones((B, L))
    cont[:, -1] = 0.0
    first = np.zeros((B, L))
    first[:, 0] = 1.0
    valid = np.ones((B, L))

    def f():
        out = m.observe(obs, act, first, np.random.default_rng(0))
        return m.loss(out, obs, rew, cont, valid, stop_gradients=False)[0]

    return grad_check(f, m.parameters(), max_entries=6, rng=np.random.default_rng(2))


def _tiny_ac():
    from .policy import ActorCriticConfig

    return ActorCriticConfig(action_dim=2, units=8, layers=1, bins=21, horizon=3)


@register("loss:actor")
def _check_actor():
    from .policy import Actor, actor_loss

    actor = Actor(5, _tiny_ac(), np.random.default_rng(0))
    rng = np.random.default_rng(6)
    feat, u = rng.normal(size=(2, 3, 5)), rng.normal(size=(2, 3, 2))
    adv, w = rng.normal(size=(2, 3)), rng.random((2, 3))
    return grad_check(lambda: actor_loss(actor, feat, u, adv, w, 3e-4), actor.parameters())


@register("loss:critic")
def _check_critic():
    from .policy import Critic, critic_loss

    critic = Critic(5, _tiny_ac(), np.random.default_rng(0))
    slow = Critic(5, _tiny_ac(), np.random.default_rng(9))
    for c in (critic, slow):
        c.net.out.W.data[...] = np.random.default_rng(1).normal(size=c.net.out.W.shape) * 0.3
    rng = np.random.default_rng(7)
    feat, R, w = rng.normal(size=(3, 4, 5)), rng.normal(size=(3, 4)) * 5, rng.random((3, 4))
    slow_logits = slow(feat).data
    return grad_check(lambda: critic_loss(critic, feat, R, w, slow_logits, 1.0), critic.parameters())


@register("loss:ppo")
def _check_ppo():
    from .ppo import PpoConfig, PpoPolicy, ppo_loss

    cfg = PpoConfig(action_dim=2, layers=2, units=8, num_envs=1, rollout_length=4, minibatch_size=4)
    policy = PpoPolicy(6, cfg, np.random.default_rng(0))
    rng = np.random.default_rng(1)
    obs, u = rng.normal(size=(4, 6)), rng.normal(size=(4, 2))
    with T.no_grad():
        mean, log_std = policy.distribution(obs)
        logp = D.gaussian_log_prob(mean, log_std, u).data - 0.05
    adv, ret = rng.normal(size=4), rng.normal(size=4)
    return grad_check(lambda: ppo_loss(policy, obs, u, logp, adv, ret, cfg)[0], policy.parameters())


def run_suite(names=None, tolerance: float = TOLERANCE) -> dict:
    """Run the selected checks (default all) and return ``{"results": [...], "passed": bool}``."""
    selected = list(CHECKS) if names is None else list(names)
    unknown = [n for n in selected if n not in CHECKS]
    if unknown:
        raise ConfigurationError(f"unknown gradient checks: {unknown}; available: {sorted(CHECKS)}")
    results = []
    start = time.perf_counter()
    with T.precision(64):
        for name in selected:
            t0 = time.perf_counter()
            try:
                err, note = float(CHECKS[name]()), ""
            except Exception as exc:  # a crashing check is a failed check
                err, note = float("inf"), f"{type(exc).__name__}: {exc}"
            results.append({"name": name, "max_rel_error": err, "passed": err < tolerance,
                            "seconds": time.perf_counter() - t0, "error": note})
    return {"results": results, "passed": all(r["passed"] for r in results), "tolerance": tolerance,
            "seconds": time.perf_counter() - start}


def format_report(report: dict) -> str:
    width = max(len(r["name"]) for r in report["results"])
    lines = [f"{'check':<{width}}  max rel error  status"]
    for r in report["results"]:
        status = "ok" if r["passed"] else "FAIL"
        extra = f"  ({r['error']})" if r["error"] else ""
        lines.append(f"{r['name']:<{width}}  {r['max_rel_error']:13.3e}  {status}{extra}")
    failed = sum(not r["passed"] for r in report["results"])
    lines.append(f"{len(report['results'])} checks, {failed} failed, tolerance {report['tolerance']:.0e}, "
                 f"{report['seconds']:.1f} s")
    return "\n".join(lines)
