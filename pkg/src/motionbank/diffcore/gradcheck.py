"""Central finite-difference verification of reverse-mode gradients."""

import numpy as np

from .optim import backward
from .tensor import no_grad


def check_gradients(fn, store, h=1e-5):
    """Compare backward() of fn() against central finite differences.

    fn: nullary callable returning a scalar Tensor, closing over the
        parameters in store. It is re-evaluated many times with perturbed
        parameter values, so it must be a pure function of the store.
    Returns the worst relative error across all trainable coordinates,
    where relative error = |analytic − fd| / max(|analytic|, |fd|, 1).
    """
    loss = fn()
    grads = backward(loss, store)
    worst = 0.0
    for name in store.trainable_names():
        p = store[name]
        flat = p.data.reshape(-1)
        gflat = grads[name].reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + h
            with no_grad():
                up = fn().item()
            flat[i] = keep - h
            with no_grad():
                down = fn().item()
            flat[i] = keep
            fd = (up - down) / (2.0 * h)
            a = gflat[i]
            err = abs(a - fd) / max(abs(a), abs(fd), 1.0)
            if err > worst:
                worst = err
    return worst
