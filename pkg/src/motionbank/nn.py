"""Shared neural building blocks over the diffcore contract.

Parameters live flat in a ParamStore under dotted names; each block is a pair
of functions: add_* registers parameters, the forward applies them. All
weight matrices initialize uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases
zero.
"""

import numpy as np

from .diffcore import add, concat, matmul, mul, sigmoid, slice_cols, sub, tanh
from .errors import ValidationError


def add_linear(store, rng, prefix, fan_in, fan_out, trainable=True, bound=None):
    if bound is None:
        bound = 1.0 / np.sqrt(fan_in)
    store.add(prefix + ".W", rng.uniform(-bound, bound, (fan_in, fan_out)), trainable)
    store.add(prefix + ".b", np.zeros(fan_out), trainable)


def linear(store, prefix, x):
    return add(matmul(x, store[prefix + ".W"]), store[prefix + ".b"])


def add_mlp(store, rng, prefix, sizes, trainable=True, bound=None):
    """Register a dense stack. sizes = [in, hidden..., out]; tanh between layers."""
    if len(sizes) < 2:
        raise ValidationError(f"mlp needs at least [in, out] sizes, got {sizes}")
    for i in range(len(sizes) - 1):
        add_linear(store, rng, f"{prefix}.l{i}", sizes[i], sizes[i + 1], trainable, bound)


def mlp(store, prefix, x, depth):
    """Apply a registered dense stack of `depth` layers (tanh between, linear out)."""
    for i in range(depth):
        x = linear(store, f"{prefix}.l{i}", x)
        if i < depth - 1:
            x = tanh(x)
    return x


def mlp_depth(store, prefix):
    """Number of layers registered under a dense-stack prefix."""
    d = 0
    while f"{prefix}.l{d}.W" in store:
        d += 1
    return d


def add_gru(store, rng, prefix, in_dim, hidden, trainable=True, bound=None):
    """One GRU cell: fused update/reset gate layer plus candidate layer."""
    add_linear(store, rng, prefix + ".gates", in_dim + hidden, 2 * hidden, trainable, bound)
    add_linear(store, rng, prefix + ".cand", in_dim + hidden, hidden, trainable, bound)


def gru_step(store, prefix, x, h):
    """Advance the cell one step. x: (B, in_dim), h: (B, hidden) -> (B, hidden)."""
    width = h.shape[-1]
    zr = sigmoid(linear(store, prefix + ".gates", concat([x, h], axis=-1)))
    z = slice_cols(zr, 0, width)
    r = slice_cols(zr, width, 2 * width)
    n = tanh(linear(store, prefix + ".cand", concat([x, mul(r, h)], axis=-1)))
    # h' = (1-z)*n + z*h, written as n + z*(h-n)
    return add(n, mul(z, sub(h, n)))


def gru_run(store, prefix, frames, h0):
    """Run the cell over a sequence. frames: list of (B, in_dim) tensors."""
    h = h0
    hiddens = []
    for x in frames:
        h = gru_step(store, prefix, x, h)
        hiddens.append(h)
    return hiddens
