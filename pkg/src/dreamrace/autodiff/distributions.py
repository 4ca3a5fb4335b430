"""Likelihoods and encodings used by the world model, actor, and critics."""
from __future__ import annotations

import numpy as np

from . import tensor as T
from .tensor import Tensor

LOG_2PI = float(np.log(2.0 * np.pi))
LOG_2 = float(np.log(2.0))


def symlog(x):
    return np.sign(x) * np.log1p(np.abs(x))


def symexp(x):
    return np.sign(x) * np.expm1(np.abs(x))


def symlog_bins(n: int = 255, low: float = -20.0, high: float = 20.0) -> np.ndarray:
    """Bin centers, evenly spaced in symlog space."""
    return np.linspace(low, high, n)


def two_hot(values, bins: np.ndarray) -> np.ndarray:
    """Split each value linearly between its two neighbouring bins.

    Values outside the bin range put all mass on the nearest end bin.
    """
    values = np.asarray(values, dtype=np.float64)
    bins = np.asarray(bins, dtype=np.float64)
    k = len(bins)
    v = np.clip(values, bins[0], bins[-1])
    hi = np.clip(np.searchsorted(bins, v, side="right"), 1, k - 1)
    lo = hi - 1
    span = bins[hi] - bins[lo]
    w_hi = (v - bins[lo]) / span
    out = np.zeros(values.shape + (k,))
    np.put_along_axis(out, lo[..., None], (1.0 - w_hi)[..., None], axis=-1)
    # adding on top handles w_hi landing on the same slot at the right edge
    hi_slot = np.take_along_axis(out, hi[..., None], axis=-1) + w_hi[..., None]
    np.put_along_axis(out, hi[..., None], hi_slot, axis=-1)
    return out


def twohot_mean(logits: np.ndarray, bins: np.ndarray) -> np.ndarray:
    """Scalar expectation of a symlog two-hot head, mapped back through symexp."""
    probs = T.softmax_np(np.asarray(logits, dtype=np.float64))
    return symexp(probs @ bins)


def twohot_nll(logits: Tensor, targets: np.ndarray, bins: np.ndarray) -> Tensor:
    """Negative log-likelihood of raw-scale ``targets`` under a symlog two-hot head."""
    weights = two_hot(symlog(targets), bins).astype(logits.dtype)
    return -T.tsum(T.log_softmax(logits) * weights, axis=-1)


def bernoulli_nll(logit: Tensor, target: np.ndarray) -> Tensor:
    """Binary cross-entropy from logits, numerically stable for large |logit|."""
    return T.softplus(logit) - logit * np.asarray(target, dtype=logit.dtype)


def gaussian_nll_unit(mean: Tensor, target: np.ndarray) -> Tensor:
    """Unit-variance Gaussian NLL summed over the last axis (includes the constant)."""
    diff = mean - np.asarray(target, dtype=mean.dtype)
    d = mean.shape[-1]
    return T.tsum(T.square(diff), axis=-1) * 0.5 + 0.5 * d * LOG_2PI


def gaussian_log_prob(mean: Tensor, log_std: Tensor, u) -> Tensor:
    """Diagonal Gaussian log density summed over the last axis."""
    u = T.as_tensor(u, like=mean)
    z = (u - mean) * T.exp(-log_std)
    return T.tsum(T.square(z) * -0.5 - log_std - 0.5 * LOG_2PI, axis=-1)


def tanh_log_det(u) -> Tensor:
    """Sum over the last axis of ``log(1 - tanh(u)^2)``, written to stay finite."""
    u = T.as_tensor(u)
    return T.tsum((LOG_2 - u - T.softplus(u * -2.0)) * 2.0, axis=-1)


def squashed_gaussian_log_prob(mean: Tensor, log_std: Tensor, u) -> Tensor:
    """Log density of ``tanh(u)`` where ``u ~ N(mean, exp(log_std))``."""
    u = T.as_tensor(u, like=mean)
    return gaussian_log_prob(mean, log_std, u) - tanh_log_det(u)


def gaussian_entropy(log_std: Tensor) -> Tensor:
    return T.tsum(log_std + 0.5 * (1.0 + LOG_2PI), axis=-1)
