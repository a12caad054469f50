"""Parameter storage, gradient extraction, and the Adam optimizer."""

import numpy as np

from ..errors import ValidationError
from .tensor import Tensor


class ParamStore:
    """Named parameter leaves with per-entry trainable flags.

    Trainable entries carry requires_grad=True so the tape tracks them;
    frozen entries are plain constants and are never touched by adam_step.
    """

    def __init__(self):
        self._params = {}
        self._trainable = {}

    def add(self, name, data, trainable=True):
        if name in self._params:
            raise ValidationError(f"duplicate parameter name {name!r}")
        t = Tensor(np.array(data, dtype=np.float64), requires_grad=trainable)
        self._params[name] = t
        self._trainable[name] = trainable
        return t

    def __getitem__(self, name):
        return self._params[name]

    def __contains__(self, name):
        return name in self._params

    def names(self):
        return list(self._params)

    def trainable_names(self):
        return [n for n, f in self._trainable.items() if f]

    def is_trainable(self, name):
        return self._trainable[name]

    def set_trainable(self, name, flag):
        self._trainable[name] = bool(flag)
        self._params[name].requires_grad = bool(flag)

    def freeze_prefix(self, prefix):
        """Mark every parameter whose name starts with prefix as frozen."""
        for n in self._params:
            if n.startswith(prefix):
                self.set_trainable(n, False)

    def items(self):
        return self._params.items()


def backward(loss, store):
    """Backpropagate a scalar loss; return name → gradient for trainable params.

    Parameters not reached by the graph get zero gradients of the right shape.
    """
    for _, p in store.items():
        p.grad = None
    loss.backward()
    grads = {}
    for name in store.trainable_names():
        p = store[name]
        grads[name] = p.grad if p.grad is not None else np.zeros_like(p.data)
    return grads


class AdamState:
    """Adam accumulators for one ParamStore."""

    def __init__(self, store, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.t = 0
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.m = {n: np.zeros_like(store[n].data) for n in store.trainable_names()}
        self.v = {n: np.zeros_like(store[n].data) for n in store.trainable_names()}


def adam_step(store, grads, state):
    """One bias-corrected Adam update, in place. Frozen parameters untouched."""
    state.t += 1
    bc1 = 1.0 - state.beta1 ** state.t
    bc2 = 1.0 - state.beta2 ** state.t
    for name in store.trainable_names():
        if name not in grads:
            raise ValidationError(f"missing gradient for trainable parameter {name!r}")
        g = grads[name]
        p = store[name]
        if g.shape != p.data.shape:
            raise ValidationError(
                f"gradient shape {g.shape} does not match parameter "
                f"{name!r} shape {p.data.shape}"
            )
        if name not in state.m:
            state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        mhat = m / bc1
        vhat = v / bc2
        p.data -= state.lr * mhat / (np.sqrt(vhat) + state.eps)
    return store, state
