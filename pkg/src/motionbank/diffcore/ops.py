"""Differentiable primitives over Tensor.

All ops accept Tensors (or anything np.asarray understands, promoted to a
constant leaf) and return a new Tensor. Backward closures return one gradient
per parent, aligned positionally; None marks a parent that takes no gradient.
"""

import numpy as np

from ..errors import ValidationError
from .tensor import Tensor, as_tensor, make_result


def _unbroadcast(grad, shape):
    """Sum grad down to `shape` (reverses numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out = a.data + b.data

    def backward(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

    return make_result(out, (a, b), backward)


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out = a.data - b.data

    def backward(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape)

    return make_result(out, (a, b), backward)


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out = a.data * b.data

    def backward(g):
        return (
            _unbroadcast(g * b.data, a.data.shape),
            _unbroadcast(g * a.data, b.data.shape),
        )

    return make_result(out, (a, b), backward)


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out = a.data / b.data

    def backward(g):
        return (
            _unbroadcast(g / b.data, a.data.shape),
            _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape),
        )

    return make_result(out, (a, b), backward)


def neg(a):
    a = as_tensor(a)

    def backward(g):
        return (-g,)

    return make_result(-a.data, (a,), backward)


def scale(a, c):
    """Multiply by a python scalar constant (no gradient for c)."""
    a = as_tensor(a)
    c = float(c)

    def backward(g):
        return (g * c,)

    return make_result(a.data * c, (a,), backward)


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ValidationError(
            f"matmul expects 2-d operands, got {a.data.shape} and {b.data.shape}"
        )
    if a.data.shape[1] != b.data.shape[0]:
        raise ValidationError(
            f"matmul inner dimensions differ: {a.data.shape} vs {b.data.shape}"
        )
    out = a.data @ b.data

    def backward(g):
        return g @ b.data.T, a.data.T @ g

    return make_result(out, (a, b), backward)


def dot(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 1 or b.data.ndim != 1 or a.data.shape != b.data.shape:
        raise ValidationError(
            f"dot expects equal-length vectors, got {a.data.shape} and {b.data.shape}"
        )
    out = a.data @ b.data

    def backward(g):
        return g * b.data, g * a.data

    return make_result(out, (a, b), backward)


def concat(parts, axis=-1):
    parts = [as_tensor(p) for p in parts]
    if not parts:
        raise ValidationError("concat of zero tensors")
    out = np.concatenate([p.data for p in parts], axis=axis)
    sizes = [p.data.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        gm = np.moveaxis(g, axis, 0)
        return tuple(
            np.moveaxis(gm[offsets[i] : offsets[i + 1]], 0, axis)
            for i in range(len(parts))
        )

    return make_result(out, tuple(parts), backward)


def tanh(a):
    a = as_tensor(a)
    out = np.tanh(a.data)

    def backward(g):
        return (g * (1.0 - out * out),)

    return make_result(out, (a,), backward)


def sigmoid(a):
    a = as_tensor(a)
    x = a.data
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)

    def backward(g):
        return (g * out * (1.0 - out),)

    return make_result(out, (a,), backward)


def exp(a):
    a = as_tensor(a)
    out = np.exp(a.data)

    def backward(g):
        return (g * out,)

    return make_result(out, (a,), backward)


def log(a):
    a = as_tensor(a)
    out = np.log(a.data)

    def backward(g):
        return (g / a.data,)

    return make_result(out, (a,), backward)


def softmax(a):
    """Softmax over the last axis, computed with max-subtraction."""
    a = as_tensor(a)
    if a.data.ndim == 0 or a.data.shape[-1] == 0:
        raise ValidationError(f"softmax on empty axis, shape {a.data.shape}")
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        inner = (g * out).sum(axis=-1, keepdims=True)
        return (out * (g - inner),)

    return make_result(out, (a,), backward)


def tsum(a, axis=None, keepdims=False):
    a = as_tensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is None:
            return (np.broadcast_to(g, a.data.shape).copy(),)
        if not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.data.shape).copy(),)

    return make_result(out, (a,), backward)


def tmean(a, axis=None, keepdims=False):
    a = as_tensor(a)
    n = a.data.size if axis is None else a.data.shape[axis]
    return scale(tsum(a, axis=axis, keepdims=keepdims), 1.0 / n)


def reshape(a, shape):
    a = as_tensor(a)
    out = a.data.reshape(shape)

    def backward(g):
        return (g.reshape(a.data.shape),)

    return make_result(out, (a,), backward)


def gather_rows(a, idx):
    """Select rows of a 2-d tensor: out[i] = a[idx[i]]. Duplicate indices allowed."""
    a = as_tensor(a)
    if a.data.ndim != 2:
        raise ValidationError(f"gather_rows expects a 2-d tensor, got {a.data.shape}")
    idx = np.asarray(idx, dtype=np.intp)
    out = a.data[idx]

    def backward(g):
        ga = np.zeros_like(a.data)
        np.add.at(ga, idx, g)
        return (ga,)

    return make_result(out, (a,), backward)


def slice_cols(a, start, stop):
    """a[..., start:stop]."""
    a = as_tensor(a)
    out = a.data[..., start:stop]

    def backward(g):
        ga = np.zeros_like(a.data)
        ga[..., start:stop] = g
        return (ga,)

    return make_result(out, (a,), backward)


def clip(a, lo, hi):
    """Clamp values; gradient passes only where lo < value < hi."""
    a = as_tensor(a)
    out = np.clip(a.data, lo, hi)
    mask = (a.data > lo) & (a.data < hi)

    def backward(g):
        return (g * mask,)

    return make_result(out, (a,), backward)


def mse(pred, target):
    """Mean over all entries of squared difference. Scalar result."""
    pred, target = as_tensor(pred), as_tensor(target)
    if pred.data.shape != target.data.shape:
        raise ValidationError(
            f"mse shapes differ: {pred.data.shape} vs {target.data.shape}"
        )
    d = sub(pred, target)
    return tmean(mul(d, d))


def cross_entropy(probs, target_onehot):
    """Mean over rows of −Σ_c target·log(prob), probs clamped to [1e-12, 1].

    probs: (R, C) rows of class probabilities; target_onehot: constant (R, C).
    """
    probs = as_tensor(probs)
    target = as_tensor(target_onehot)
    if probs.data.ndim != 2 or probs.data.shape != target.data.shape:
        raise ValidationError(
            f"cross_entropy expects matching (rows, classes) shapes, "
            f"got {probs.data.shape} vs {target.data.shape}"
        )
    if probs.data.shape[-1] == 0:
        raise ValidationError("cross_entropy on empty class axis")
    rows = probs.data.shape[0]
    picked = mul(log(clip(probs, 1e-12, 1.0)), target)
    return scale(tsum(picked), -1.0 / rows)
