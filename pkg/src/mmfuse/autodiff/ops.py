"""Differentiable primitives over :class:`~mmfuse.autodiff.tensor.Tensor`.

The primitive set is exactly what the fusion models need: dense algebra,
pointwise nonlinearities, 2-D convolution, per-example dynamic 1x1
convolution, batch normalization, dropout, embedding lookup, softmax and
weighted cross-entropy. Every op returns a new Tensor carrying a backprop
closure; shapes are validated up front with diagnostics naming the primitive.
"""

from __future__ import annotations

import numpy as np

from .tensor import (
    ShapeMismatch,
    Tensor,
    UnknownPrimitive,
    accumulate_grad,
    as_tensor,
    from_op,
)


def _unbroadcast(grad, shape):
    """Sum ``grad`` down to ``shape`` (inverse of numpy broadcasting)."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# ---------------------------------------------------------------------------
# elementwise algebra


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    try:
        data = a.data + b.data
    except ValueError:
        raise ShapeMismatch("add", f"cannot broadcast {a.shape} with {b.shape}")

    def backprop(grad):
        accumulate_grad(a, _unbroadcast(grad, a.shape))
        accumulate_grad(b, _unbroadcast(grad, b.shape))

    return from_op(data, (a, b), backprop)


def sub(a, b):
    return add(a, mul(b, -1.0))


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    try:
        data = a.data * b.data
    except ValueError:
        raise ShapeMismatch("mul", f"cannot broadcast {a.shape} with {b.shape}")

    def backprop(grad):
        accumulate_grad(a, _unbroadcast(grad * b.data, a.shape))
        accumulate_grad(b, _unbroadcast(grad * a.data, b.shape))

    return from_op(data, (a, b), backprop)


def power(a, exponent):
    a = as_tensor(a)
    exponent = float(exponent)
    data = a.data ** exponent

    def backprop(grad):
        accumulate_grad(a, grad * exponent * a.data ** (exponent - 1.0))

    return from_op(data, (a,), backprop)


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeMismatch("matmul", f"incompatible shapes {a.shape} x {b.shape}")
    data = a.data @ b.data

    def backprop(grad):
        accumulate_grad(a, grad @ b.data.T)
        accumulate_grad(b, a.data.T @ grad)

    return from_op(data, (a, b), backprop)


# ---------------------------------------------------------------------------
# pointwise nonlinearities


def relu(x):
    x = as_tensor(x)
    data = np.maximum(x.data, 0.0)

    def backprop(grad):
        accumulate_grad(x, grad * (x.data > 0.0))

    return from_op(data, (x,), backprop)


def sigmoid(x):
    x = as_tensor(x)
    with np.errstate(over="ignore"):
        data = 1.0 / (1.0 + np.exp(-x.data))

    def backprop(grad):
        accumulate_grad(x, grad * data * (1.0 - data))

    return from_op(data, (x,), backprop)


def tanh(x):
    x = as_tensor(x)
    data = np.tanh(x.data)

    def backprop(grad):
        accumulate_grad(x, grad * (1.0 - data * data))

    return from_op(data, (x,), backprop)


def exp(x):
    x = as_tensor(x)
    data = np.exp(x.data)

    def backprop(grad):
        accumulate_grad(x, grad * data)

    return from_op(data, (x,), backprop)


def log(x):
    x = as_tensor(x)
    data = np.log(x.data)

    def backprop(grad):
        accumulate_grad(x, grad / x.data)

    return from_op(data, (x,), backprop)


# ---------------------------------------------------------------------------
# reductions and reshaping


def sum_(x, axis=None):
    x = as_tensor(x)
    data = x.data.sum(axis=axis)

    def backprop(grad):
        if axis is None:
            accumulate_grad(x, np.broadcast_to(grad, x.shape))
        else:
            accumulate_grad(x, np.broadcast_to(np.expand_dims(grad, axis), x.shape))

    return from_op(data, (x,), backprop)


def mean_(x, axis=None):
    x = as_tensor(x)
    count = x.size if axis is None else x.shape[axis]
    return mul(sum_(x, axis=axis), 1.0 / count)


def reshape(x, shape):
    x = as_tensor(x)
    try:
        data = x.data.reshape(shape)
    except ValueError:
        raise ShapeMismatch("reshape", f"cannot reshape {x.shape} to {shape}")

    def backprop(grad):
        accumulate_grad(x, grad.reshape(x.shape))

    return from_op(data, (x,), backprop)


def concat(tensors, axis):
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ShapeMismatch("concat", "needs at least one input")
    try:
        data = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        raise ShapeMismatch(
            "concat", f"shapes {[t.shape for t in tensors]} do not align on axis {axis}"
        )
    splits = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backprop(grad):
        for t, piece in zip(tensors, np.split(grad, splits, axis=axis)):
            accumulate_grad(t, piece)

    return from_op(data, tuple(tensors), backprop)


def tile_spatial(x, height, width):
    """Broadcast per-example vectors (N, C) to a spatial map (N, H, W, C)."""
    x = as_tensor(x)
    if x.ndim != 2:
        raise ShapeMismatch("tile_spatial", f"expected (N, C) input, got {x.shape}")
    n, c = x.shape
    data = np.broadcast_to(x.data[:, None, None, :], (n, height, width, c)).copy()

    def backprop(grad):
        accumulate_grad(x, grad.sum(axis=(1, 2)))

    return from_op(data, (x,), backprop)


# ---------------------------------------------------------------------------
# convolution


def _same_pad(extent, stride, kernel):
    out = -(-extent // stride)  # ceil
    total = max((out - 1) * stride + kernel - extent, 0)
    return out, total // 2, total - total // 2


def conv2d(x, weight, bias=None, stride=1):
    """Same-padded 2-D convolution; x is (N, H, W, Cin), weight (kh, kw, Cin, Cout)."""
    x, weight = as_tensor(x), as_tensor(weight)
    if x.ndim != 4 or weight.ndim != 4:
        raise ShapeMismatch("conv2d", f"expected 4-d input/weight, got {x.shape}/{weight.shape}")
    n, h, w, cin = x.shape
    kh, kw, wcin, cout = weight.shape
    if wcin != cin:
        raise ShapeMismatch("conv2d", f"input channels {cin} != kernel channels {wcin}")
    if bias is not None:
        bias = as_tensor(bias)
        if bias.shape != (cout,):
            raise ShapeMismatch("conv2d", f"bias shape {bias.shape} != ({cout},)")

    out_h, pad_t, pad_b = _same_pad(h, stride, kh)
    out_w, pad_l, pad_r = _same_pad(w, stride, kw)
    xp = np.pad(x.data, ((0, 0), (pad_t, pad_b), (pad_l, pad_r), (0, 0)))

    data = np.zeros((n, out_h, out_w, cout))
    for u in range(kh):
        for v in range(kw):
            patch = xp[:, u : u + stride * out_h : stride, v : v + stride * out_w : stride, :]
            data += (patch.reshape(-1, cin) @ weight.data[u, v]).reshape(data.shape)
    if bias is not None:
        data += bias.data

    parents = (x, weight) if bias is None else (x, weight, bias)

    def backprop(grad):
        g2 = grad.reshape(-1, cout)
        dxp = np.zeros_like(xp)
        dw = np.zeros_like(weight.data)
        for u in range(kh):
            for v in range(kw):
                sl = np.s_[:, u : u + stride * out_h : stride, v : v + stride * out_w : stride, :]
                patch = xp[sl]
                dw[u, v] = patch.reshape(-1, cin).T @ g2
                dxp[sl] += (g2 @ weight.data[u, v].T).reshape(patch.shape)
        accumulate_grad(x, dxp[:, pad_t : pad_t + h, pad_l : pad_l + w, :])
        accumulate_grad(weight, dw)
        if bias is not None:
            accumulate_grad(bias, grad.sum(axis=(0, 1, 2)))

    return from_op(data, parents, backprop)


def dynamic_conv1x1(feature_map, kernels):
    """Per-example 1x1 convolution with per-example kernel banks.

    ``feature_map`` is (N, H, W, C) and ``kernels`` is (N, K, C); output
    channel k at (h, w) is the dot product of kernel k with the local feature
    vector. Gradients flow to both the map and the kernels.
    """
    feature_map, kernels = as_tensor(feature_map), as_tensor(kernels)
    if feature_map.ndim != 4 or kernels.ndim != 3:
        raise ShapeMismatch(
            "dynamic_conv1x1",
            f"expected map (N,H,W,C) and kernels (N,K,C), got {feature_map.shape}/{kernels.shape}",
        )
    if feature_map.shape[0] != kernels.shape[0] or feature_map.shape[3] != kernels.shape[2]:
        raise ShapeMismatch(
            "dynamic_conv1x1",
            f"map {feature_map.shape} and kernels {kernels.shape} disagree on batch or channels",
        )
    data = np.einsum("nhwc,nkc->nhwk", feature_map.data, kernels.data)

    def backprop(grad):
        accumulate_grad(feature_map, np.einsum("nhwk,nkc->nhwc", grad, kernels.data))
        accumulate_grad(kernels, np.einsum("nhwk,nhwc->nkc", grad, feature_map.data))

    return from_op(data, (feature_map, kernels), backprop)


def avg_pool_spatial(x):
    """Global spatial average: (N, H, W, C) -> (N, C)."""
    x = as_tensor(x)
    if x.ndim != 4:
        raise ShapeMismatch("avg_pool_spatial", f"expected 4-d input, got {x.shape}")
    n, h, w, c = x.shape
    data = x.data.mean(axis=(1, 2))

    def backprop(grad):
        accumulate_grad(x, np.broadcast_to(grad[:, None, None, :], x.shape) / (h * w))

    return from_op(data, (x,), backprop)


# ---------------------------------------------------------------------------
# batch normalization


class BatchNormState:
    """Running statistics for one batch-norm layer (not learned by gradient)."""

    def __init__(self, channels, momentum=0.9, eps=1e-5):
        self.momentum = momentum
        self.eps = eps
        self.running_mean = np.zeros(channels)
        self.running_var = np.ones(channels)


def batch_norm(x, gamma, beta, state, training):
    """Normalize over all axes but the last; running stats updated in training."""
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    channels = x.shape[-1]
    if gamma.shape != (channels,) or beta.shape != (channels,):
        raise ShapeMismatch(
            "batch_norm", f"gamma/beta must be ({channels},), got {gamma.shape}/{beta.shape}"
        )
    axes = tuple(range(x.ndim - 1))
    count = int(np.prod([x.shape[a] for a in axes])) if axes else 1

    if training:
        mean = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        m = state.momentum
        state.running_mean = m * state.running_mean + (1.0 - m) * mean
        state.running_var = m * state.running_var + (1.0 - m) * var
    else:
        mean = state.running_mean
        var = state.running_var

    inv_std = 1.0 / np.sqrt(var + state.eps)
    x_hat = (x.data - mean) * inv_std
    data = gamma.data * x_hat + beta.data

    def backprop(grad):
        accumulate_grad(gamma, (grad * x_hat).sum(axis=axes))
        accumulate_grad(beta, grad.sum(axis=axes))
        if training:
            g_mean = grad.mean(axis=axes)
            gx_mean = (grad * x_hat).mean(axis=axes)
            dx = gamma.data * inv_std * (grad - g_mean - x_hat * gx_mean)
            if count == 1:  # degenerate batch: normalization is constant in x
                dx = np.zeros_like(grad)
            accumulate_grad(x, dx)
        else:
            accumulate_grad(x, grad * gamma.data * inv_std)

    return from_op(data, (x, gamma, beta), backprop)


# ---------------------------------------------------------------------------
# dropout, embedding, losses


def dropout(x, rate, training, rng=None):
    """Inverted dropout; identity in eval mode or at rate 0."""
    x = as_tensor(x)
    if not 0.0 <= rate < 1.0:
        raise ShapeMismatch("dropout", f"rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        def backprop_id(grad):
            accumulate_grad(x, grad)

        return from_op(x.data.copy(), (x,), backprop_id)
    if rng is None:
        raise ShapeMismatch("dropout", "training-mode dropout needs an rng")
    mask = (rng.random(x.shape) >= rate) / (1.0 - rate)

    def backprop(grad):
        accumulate_grad(x, grad * mask)

    return from_op(x.data * mask, (x,), backprop)


def embedding(weight, ids):
    """Row lookup: weight (V, E), integer ids of any shape -> ids.shape + (E,)."""
    weight = as_tensor(weight)
    ids = np.asarray(ids, dtype=np.int64)
    if weight.ndim != 2:
        raise ShapeMismatch("embedding", f"weight must be 2-d, got {weight.shape}")
    if ids.size and (ids.min() < 0 or ids.max() >= weight.shape[0]):
        raise ShapeMismatch(
            "embedding", f"index out of range for vocabulary of {weight.shape[0]}"
        )
    data = weight.data[ids]

    def backprop(grad):
        dw = np.zeros_like(weight.data)
        np.add.at(dw, ids.reshape(-1), grad.reshape(-1, weight.shape[1]))
        accumulate_grad(weight, dw)

    return from_op(data, (weight,), backprop)


def softmax(x, axis=-1):
    x = as_tensor(x)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    data = e / e.sum(axis=axis, keepdims=True)

    def backprop(grad):
        inner = (grad * data).sum(axis=axis, keepdims=True)
        accumulate_grad(x, data * (grad - inner))

    return from_op(data, (x,), backprop)


def softmax_cross_entropy(logits, labels, class_weights=None):
    """Mean of per-sample weighted cross-entropy over softmax probabilities.

    ``labels`` are integer class ids; ``class_weights`` (one float per class,
    default all ones) scale each sample's loss by the weight of its true class.
    """
    logits = as_tensor(logits)
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2:
        raise ShapeMismatch("softmax_cross_entropy", f"logits must be (N, C), got {logits.shape}")
    n, c = logits.shape
    if labels.shape != (n,):
        raise ShapeMismatch(
            "softmax_cross_entropy", f"labels shape {labels.shape} != ({n},)"
        )
    if labels.size and (labels.min() < 0 or labels.max() >= c):
        raise ShapeMismatch("softmax_cross_entropy", f"label out of range for {c} classes")
    if class_weights is None:
        weights = np.ones(c)
    else:
        weights = np.asarray(class_weights, dtype=np.float64)
        if weights.shape != (c,):
            raise ShapeMismatch(
                "softmax_cross_entropy", f"class_weights shape {weights.shape} != ({c},)"
            )

    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    sample_w = weights[labels]
    data = -(sample_w * log_probs[np.arange(n), labels]).sum() / n

    def backprop(grad):
        probs = np.exp(log_probs)
        dlogits = probs.copy()
        dlogits[np.arange(n), labels] -= 1.0
        dlogits *= (sample_w / n)[:, None]
        accumulate_grad(logits, float(grad) * dlogits)

    return from_op(data, (logits,), backprop)


# ---------------------------------------------------------------------------
# primitive registry

PRIMITIVES = {
    "add": add,
    "sub": sub,
    "mul": mul,
    "power": power,
    "matmul": matmul,
    "relu": relu,
    "sigmoid": sigmoid,
    "tanh": tanh,
    "exp": exp,
    "log": log,
    "sum": sum_,
    "mean": mean_,
    "reshape": reshape,
    "concat": concat,
    "tile_spatial": tile_spatial,
    "conv2d": conv2d,
    "dynamic_conv1x1": dynamic_conv1x1,
    "avg_pool_spatial": avg_pool_spatial,
    "batch_norm": batch_norm,
    "dropout": dropout,
    "embedding": embedding,
    "softmax": softmax,
    "softmax_cross_entropy": softmax_cross_entropy,
}


def eval_primitive(name, *inputs, **attrs):
    """Apply a primitive by name; unknown names are rejected."""
    try:
        fn = PRIMITIVES[name]
    except KeyError:
        raise UnknownPrimitive(f"no primitive named {name!r}")
    return fn(*inputs, **attrs)
