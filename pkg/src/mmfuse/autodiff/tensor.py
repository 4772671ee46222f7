"""Dense float64 tensors recording a reverse-mode differentiation tape."""

from __future__ import annotations

import numpy as np


class AutodiffError(Exception):
    pass


class ShapeMismatch(AutodiffError):
    """Raised when operands do not conform to a primitive's shape contract."""

    def __init__(self, primitive, detail):
        self.primitive = primitive
        super().__init__(f"{primitive}: {detail}")


class UnknownPrimitive(AutodiffError):
    pass


class Tensor:
    """A dense n-dimensional float64 value, optionally tracked on a tape.

    Results of primitive applications keep references to their parents and a
    backprop closure; calling :func:`backward` on a scalar walks that tape.
    """

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backprop", "_done")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = ()
        self._backprop = None
        self._done = False

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    @property
    def ndim(self):
        return self.data.ndim

    def item(self):
        return float(self.data)

    def detach(self):
        return Tensor(self.data.copy(), requires_grad=False)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}{flag})"


def as_tensor(value):
    return value if isinstance(value, Tensor) else Tensor(value)


def from_op(data, parents, backprop):
    """Build an op result; the tape edge is only kept when a parent needs grads."""
    out = Tensor(data, requires_grad=any(p.requires_grad for p in parents))
    if out.requires_grad:
        out._parents = tuple(parents)
        out._backprop = backprop
    return out


def accumulate_grad(tensor, grad):
    if not tensor.requires_grad:
        return
    if tensor.grad is None:
        tensor.grad = np.array(grad, dtype=np.float64, copy=True)
    else:
        tensor.grad = tensor.grad + grad


def _toposort(root):
    order = []
    seen = set()
    stack = [(root, iter(root._parents))]
    seen.add(id(root))
    while stack:
        node, parents = stack[-1]
        advanced = False
        for p in parents:
            if id(p) not in seen:
                seen.add(id(p))
                stack.append((p, iter(p._parents)))
                advanced = True
                break
        if not advanced:
            order.append(node)
            stack.pop()
    return order  # parents before consumers


def backward(loss):
    """Populate ``grad`` on every requires_grad tensor reachable from ``loss``.

    ``loss`` must be scalar. A tape may only be walked once; running backward
    again without a fresh forward raises.
    """
    if loss.size != 1:
        raise ShapeMismatch("backward", f"loss must be scalar, got shape {loss.shape}")
    if loss._done:
        raise AutodiffError("backward already ran on this graph; rerun the forward first")
    order = _toposort(loss)
    for node in order:
        node.grad = None
        node._done = True
    loss.grad = np.ones_like(loss.data)
    for node in reversed(order):
        if node._backprop is not None and node.grad is not None:
            node._backprop(node.grad)
    for node in order:
        if node.requires_grad and node.grad is None:
            node.grad = np.zeros_like(node.data)
