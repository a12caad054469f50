"""Reverse-mode automatic differentiation over numpy arrays.

Every Tensor wraps a float64 ndarray. Operations on Tensors record their
inputs and a backward closure on a tape (the graph edges live on the result
node itself). Calling backward() on a scalar result walks the graph once in
reverse topological order and accumulates gradients into every node that
requires them.

Gradient mode is a module-level flag so inference code can run the exact
same forward functions without paying for tape construction.
"""

from contextlib import contextmanager

import numpy as np

from ..errors import NumericsError, ValidationError

_GRAD_ENABLED = True
_CHECKED = False


def grad_enabled():
    return _GRAD_ENABLED


@contextmanager
def no_grad():
    """Disable tape recording inside the block."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def set_checked(flag):
    """Globally enable NaN/Inf rejection at Tensor creation. Returns prior value."""
    global _CHECKED
    prev = _CHECKED
    _CHECKED = bool(flag)
    return prev


class Tensor:
    """A node in the computation graph.

    data: float64 ndarray (scalars are 0-d arrays)
    grad: accumulated gradient, same shape as data, or None before backward
    requires_grad: whether gradients should flow into this node
    _parents: tuple of input Tensors (empty for leaves)
    _backward: closure(grad_out) -> tuple of gradients aligned with _parents,
               or None for leaves
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, parents=(), backward=None):
        arr = np.asarray(data, dtype=np.float64)
        if _CHECKED and not np.all(np.isfinite(arr)):
            raise NumericsError("non-finite value entering the graph")
        self.data = arr
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = parents
        self._backward = backward

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def item(self):
        return float(self.data)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}{flag})"

    def backward(self):
        """Backpropagate from this scalar node through the recorded graph."""
        if self.data.ndim != 0:
            raise ValidationError(
                f"backward() requires a scalar loss, got shape {self.data.shape}"
            )
        order = _toposort(self)
        self.grad = np.ones((), dtype=np.float64)
        for node in order:
            if node._backward is None:
                continue
            gout = node.grad
            if gout is None:
                continue
            gins = node._backward(gout)
            for parent, g in zip(node._parents, gins):
                if g is None or not parent.requires_grad:
                    continue
                if parent.grad is None:
                    parent.grad = np.zeros_like(parent.data)
                parent.grad += g


def make_result(data, parents, backward):
    """Build an op result node. Skips the tape when gradients are disabled."""
    if not _GRAD_ENABLED:
        return Tensor(data)
    needs = any(p.requires_grad for p in parents)
    if not needs:
        return Tensor(data)
    return Tensor(data, requires_grad=True, parents=parents, backward=backward)


def _toposort(root):
    """Reverse topological order, iteratively (graphs exceed recursion limits)."""
    order = []
    visited = set()
    stack = [(root, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in visited:
                stack.append((p, False))
    order.reverse()
    return order


def as_tensor(x):
    if isinstance(x, Tensor):
        return x
    return Tensor(x)
