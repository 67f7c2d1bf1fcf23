"""Tensor arithmetic, reverse-mode differentiation, and FLOP accounting."""

from .flops import FlopCounter, tally
from .special import (
    digamma,
    digamma_values,
    lgamma,
    lgamma_values,
    softplus,
    trigamma_values,
)
from .tensor import (
    GradTape,
    Tensor,
    absolute,
    add,
    as_tensor,
    backward,
    clamp_min,
    div,
    exp,
    log,
    matmul,
    moveaxis,
    mul,
    neg,
    no_grad,
    power,
    reduce_mean,
    reduce_sum,
    reshape,
    softmax,
    sqrt,
    square,
    stack,
    sub,
    swap_last_axes,
    take,
    tanh,
)

__all__ = [
    "FlopCounter",
    "GradTape",
    "Tensor",
    "absolute",
    "add",
    "as_tensor",
    "backward",
    "clamp_min",
    "digamma",
    "digamma_values",
    "div",
    "exp",
    "lgamma",
    "lgamma_values",
    "log",
    "matmul",
    "moveaxis",
    "mul",
    "neg",
    "no_grad",
    "power",
    "reduce_mean",
    "reduce_sum",
    "reshape",
    "softmax",
    "softplus",
    "sqrt",
    "square",
    "stack",
    "sub",
    "swap_last_axes",
    "take",
    "tally",
    "tanh",
    "trigamma_values",
]
