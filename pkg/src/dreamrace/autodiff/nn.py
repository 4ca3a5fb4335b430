"""Layers built on the tensor core."""
from __future__ import annotations

from collections.abc import Iterator

import numpy as np

from . import tensor as T
from .tensor import Parameter, Tensor


class Module:
    """Parameter container; parameters are discovered in attribute order."""

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Parameter]]:
        for key, value in vars(self).items():
            name = f"{prefix}{key}"
            if isinstance(value, Parameter):
                yield name, value
            elif isinstance(value, Module):
                yield from value.named_parameters(name + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{name}.{i}.")
                    elif isinstance(item, Parameter):
                        yield f"{name}.{i}", item

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        own = dict(self.named_parameters())
        missing = sorted(set(own) - set(state))
        unexpected = sorted(set(state) - set(own))
        if missing or unexpected:
            raise KeyError(f"state mismatch: missing={missing} unexpected={unexpected}")
        for name, p in own.items():
            arr = np.asarray(state[name])
            if arr.shape != p.shape:
                raise ValueError(f"{name}: shape {arr.shape} != {p.shape}")
            p.data = arr.astype(p.data.dtype, copy=True)

    def astype(self, dtype) -> Module:
        for p in self.parameters():
            p.data = p.data.astype(dtype)
        return self

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())


class Linear(Module):
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator, zero_init: bool = False):
        if zero_init:
            w = np.zeros((n_in, n_out))
        else:
            limit = np.sqrt(6.0 / (n_in + n_out))
            w = rng.uniform(-limit, limit, size=(n_in, n_out))
        self.W = Parameter(w)
        self.b = Parameter(np.zeros(n_out))

    def __call__(self, x: Tensor) -> Tensor:
        return T.affine(x, self.W, self.b)


class LayerNorm(Module):
    def __init__(self, n: int, eps: float = 1e-3):
        self.gain = Parameter(np.ones(n))
        self.bias = Parameter(np.zeros(n))
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        return T.layer_norm(x, self.gain, self.bias, self.eps)


class MLP(Module):
    """Hidden blocks of Linear -> [LayerNorm] -> activation, then a linear output.

    ``n_out=None`` drops the output layer and returns the last hidden features.
    """

    def __init__(
        self,
        n_in: int,
        hidden: list[int] | tuple[int, ...],
        n_out: int | None,
        rng: np.random.Generator,
        act: str = "silu",
        norm: bool = True,
        zero_out: bool = False,
    ):
        self.layers: list[Linear] = []
        self.norms: list[LayerNorm] = []
        width = n_in
        for h in hidden:
            self.layers.append(Linear(width, h, rng))
            if norm:
                self.norms.append(LayerNorm(h))
            width = h
        self.out = Linear(width, n_out, rng, zero_init=zero_out) if n_out is not None else None
        self.act = act
        self.n_out = n_out if n_out is not None else width

    def __call__(self, x: Tensor) -> Tensor:
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if self.norms:
                x = self.norms[i](x)
            x = T.pointwise(x, self.act)
        return self.out(x) if self.out is not None else x


class GRUCell(Module):
    """Standard gated recurrent unit.

        r  = sigmoid(x Wr + h Ur + br)
        u  = sigmoid(x Wu + h Uu + bu)
        n  = tanh(x Wn + bn + r * (h Un + bhn))
        h' = (1 - u) * n + u * h
    """

    def __init__(self, n_in: int, n_hidden: int, rng: np.random.Generator):
        self.n_hidden = n_hidden
        self.x_proj = Linear(n_in, 3 * n_hidden, rng)
        self.h_proj = Linear(n_hidden, 3 * n_hidden, rng)

    def __call__(self, x: Tensor, h: Tensor) -> Tensor:
        d = self.n_hidden
        xp = self.x_proj(x)
        hp = self.h_proj(h)
        r = T.sigmoid(xp[..., :d] + hp[..., :d])
        u = T.sigmoid(xp[..., d : 2 * d] + hp[..., d : 2 * d])
        n = T.tanh(xp[..., 2 * d :] + r * hp[..., 2 * d :])
        return (1.0 - u) * n + u * h
