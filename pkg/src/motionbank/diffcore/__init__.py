"""Differentiable core: Tensor, primitive ops, Adam, gradient checking."""

from .gradcheck import check_gradients
from .ops import (
    add,
    clip,
    concat,
    cross_entropy,
    div,
    dot,
    exp,
    gather_rows,
    log,
    matmul,
    mse,
    mul,
    neg,
    reshape,
    scale,
    sigmoid,
    slice_cols,
    softmax,
    sub,
    tanh,
    tmean,
    tsum,
)
from .optim import AdamState, ParamStore, adam_step, backward
from .tensor import Tensor, as_tensor, grad_enabled, no_grad, set_checked

__all__ = [
    "Tensor",
    "as_tensor",
    "no_grad",
    "grad_enabled",
    "set_checked",
    "add",
    "sub",
    "mul",
    "div",
    "neg",
    "scale",
    "matmul",
    "dot",
    "concat",
    "tanh",
    "sigmoid",
    "exp",
    "log",
    "softmax",
    "tsum",
    "tmean",
    "reshape",
    "gather_rows",
    "slice_cols",
    "clip",
    "mse",
    "cross_entropy",
    "ParamStore",
    "AdamState",
    "adam_step",
    "backward",
    "check_gradients",
]
