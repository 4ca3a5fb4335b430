"""Minimal reverse-mode autodiff used by every network in the package."""
from . import distributions, nn, tensor
from .gradcheck import grad_check
from .optim import Adam, AdamState, adam_step
from .tensor import (
    Parameter,
    Tensor,
    affine,
    categorical_kl,
    categorical_sample_straight_through,
    concat,
    no_grad,
    pointwise,
    precision,
    stack,
)

__all__ = [
    "Adam",
    "AdamState",
    "Parameter",
    "Tensor",
    "adam_step",
    "affine",
    "categorical_kl",
    "categorical_sample_straight_through",
    "concat",
    "distributions",
    "grad_check",
    "nn",
    "no_grad",
    "pointwise",
    "precision",
    "stack",
    "tensor",
]
