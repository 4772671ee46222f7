"""Bias-corrected ADAM over named parameter dictionaries."""

from __future__ import annotations

import numpy as np

from .tensor import ShapeMismatch


class AdamState:
    """First/second moment buffers plus the step counter, keyed by parameter name."""

    def __init__(self, lr=1e-4, beta1=0.9, beta2=0.999, epsilon=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.t = 0
        self.m = {}
        self.v = {}


def adam_step(params, grads, state):
    """One ADAM update, in place on ``params`` (name -> Tensor).

    ``grads`` maps names to arrays; parameters without an entry (or with a
    None entry) are treated as having zero gradient and left untouched.
    """
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1 ** state.t
    bc2 = 1.0 - b2 ** state.t
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            continue
        g = np.asarray(g, dtype=np.float64)
        if g.shape != p.data.shape:
            raise ShapeMismatch("adam_step", f"{name}: grad {g.shape} != param {p.data.shape}")
        if name not in state.m:
            state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p.data -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.epsilon)
    return params, state
