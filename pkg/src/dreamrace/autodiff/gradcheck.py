"""Central finite-difference checking of analytic gradients."""
from __future__ import annotations

from collections.abc import Callable, Sequence

import numpy as np

from .tensor import Tensor


def numeric_grad(f: Callable[[], Tensor], param: Tensor, eps: float = 1e-6) -> np.ndarray:
    flat = param.data.reshape(-1)
    out = np.zeros(flat.shape, dtype=np.float64)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        up = float(f().data)
        flat[i] = orig - eps
        down = float(f().data)
        flat[i] = orig
        out[i] = (up - down) / (2.0 * eps)
    return out.reshape(param.shape)


def analytic_grad(f: Callable[[], Tensor], params: Sequence[Tensor]) -> list[np.ndarray]:
    for p in params:
        p.grad = None
    f().backward()
    return [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]


def grad_check(
    f: Callable[[], Tensor],
    params: Sequence[Tensor],
    eps: float = 1e-6,
    max_entries: int | None = None,
    rng: np.random.Generator | None = None,
) -> float:
    """Max over entries of ``|analytic - numeric| / max(1, |numeric|)``.

    ``f`` must be a deterministic, parameter-closing function returning a scalar
    tensor. ``max_entries`` limits the number of probed coordinates per parameter
    (chosen with ``rng``), which keeps checks of large models cheap.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    grads = analytic_grad(f, params)
    worst = 0.0
    for p, g in zip(params, grads):
        flat = p.data.reshape(-1)
        gflat = g.reshape(-1)
        idx = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            idx = (rng or np.random.default_rng(0)).choice(flat.size, size=max_entries, replace=False)
        for i in idx:
            orig = flat[i]
            flat[i] = orig + eps
            up = float(f().data)
            flat[i] = orig - eps
            down = float(f().data)
            flat[i] = orig
            num = (up - down) / (2.0 * eps)
            err = abs(float(gflat[i]) - num) / max(1.0, abs(num))
            worst = max(worst, err)
    return worst
