"""Differentiable primitives.

Each function takes Tensors (or array-likes, promoted to constants), computes
the forward value with numpy and, when a tape is active and any input needs
a gradient, records a closure producing the input gradients.

Layout convention for skeleton features is ``(..., T, N, C)``: time, joints,
channels. ``axis="time"`` and ``axis="node"`` refer to ``-3`` and ``-2``.
"""
import numpy as np

from . import _kernels
from .errors import ConfigError, DimensionError
from .tensor import Tensor, active_tape

AXIS_ALIASES = {"time": -3, "node": -2}


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, inputs, backward):
    out = Tensor(data)
    tape = active_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        tape.record(out, inputs, backward)
    return out


def unbroadcast(g, shape):
    """Sum ``g`` down to ``shape`` (inverse of numpy broadcasting)."""
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _axis(axis, ndim):
    axis = AXIS_ALIASES.get(axis, axis)
    if not isinstance(axis, (int, np.integer)):
        raise ConfigError(f"unknown axis {axis!r}")
    if not -ndim <= axis < ndim:
        raise DimensionError(f"axis {axis} out of range for rank {ndim}")
    return axis % ndim


# ---------------------------------------------------------------- elementwise

def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    try:
        data = a.data + b.data
    except ValueError:
        raise DimensionError(f"cannot add shapes {a.shape} and {b.shape}") from None

    def backward(g):
        return unbroadcast(g, a.shape), unbroadcast(g, b.shape)

    return _make(data, (a, b), backward)


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    try:
        data = a.data - b.data
    except ValueError:
        raise DimensionError(f"cannot subtract shapes {a.shape} and {b.shape}") from None

    def backward(g):
        return unbroadcast(g, a.shape), unbroadcast(-g, b.shape)

    return _make(data, (a, b), backward)


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    try:
        data = a.data * b.data
    except ValueError:
        raise DimensionError(f"cannot multiply shapes {a.shape} and {b.shape}") from None

    def backward(g):
        ga = unbroadcast(g * b.data, a.shape) if a.requires_grad else None
        gb = unbroadcast(g * a.data, b.shape) if b.requires_grad else None
        return ga, gb

    return _make(data, (a, b), backward)


def scale(a, c):
    a = as_tensor(a)
    c = float(c)
    return _make(a.data * c, (a,), lambda g: (g * c,))


def relu(a):
    a = as_tensor(a)
    mask = a.data > 0
    return _make(np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,))


# ---------------------------------------------------------------- shape

def reshape(a, shape):
    a = as_tensor(a)
    return _make(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def transpose(a, axes=None):
    a = as_tensor(a)
    if axes is None:
        axes = tuple(range(a.ndim))[::-1]
    inv = np.argsort(axes)
    return _make(np.transpose(a.data, axes), (a,), lambda g: (np.transpose(g, inv),))


def swapaxes(a, ax1, ax2):
    a = as_tensor(a)
    return _make(np.swapaxes(a.data, ax1, ax2), (a,), lambda g: (np.swapaxes(g, ax1, ax2),))


def concat(tensors, axis=-1):
    tensors = [as_tensor(t) for t in tensors]
    try:
        data = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        shapes = [t.shape for t in tensors]
        raise DimensionError(f"cannot concatenate shapes {shapes} on axis {axis}") from None
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _make(data, tensors, backward)


# ---------------------------------------------------------------- reductions

def sum(a, axis=None, keepdims=False):  # noqa: A001
    a = as_tensor(a)
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _make(data, (a,), backward)


def mean(a, axis=None, keepdims=False):
    a = as_tensor(a)
    data = a.data.mean(axis=axis, keepdims=keepdims)
    count = a.data.size // max(data.size, 1)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g / count, a.shape).copy(),)

    return _make(data, (a,), backward)


# ---------------------------------------------------------------- linear algebra

def matmul(a, b):
    """Batched matrix product ``a[..., p, q] @ b[..., q, r]``."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    try:
        data = a.data @ b.data
    except ValueError:
        raise DimensionError(f"matmul batch mismatch: {a.shape} @ {b.shape}") from None

    def backward(g):
        ga = gb = None
        if a.requires_grad:
            ga = unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape)
        if b.requires_grad:
            if b.ndim == 2:
                q, r = b.shape
                gb = a.data.reshape(-1, q).T @ g.reshape(-1, r)
            else:
                gb = unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape)
        return ga, gb

    return _make(data, (a, b), backward)


def linear(x, weight, bias=None):
    out = matmul(x, weight)
    return out if bias is None else add(out, bias)


# ---------------------------------------------------------------- nonlinear blocks

def softmax_rows(x):
    """Softmax over the last axis, stabilised by subtracting the row max."""
    x = as_tensor(x)
    n = x.shape[-1]
    y = _kernels.softmax_forward(x.data.reshape(-1, n)).reshape(x.shape)

    def backward(g):
        gx = _kernels.softmax_backward(y.reshape(-1, n), g.reshape(-1, n))
        return (gx.reshape(x.shape),)

    return _make(y, (x,), backward)


def layer_norm(x, gain, bias, eps=1e-5):
    """Normalise over channels (population variance, ``eps`` in the root), then scale and shift."""
    x, gain, bias = as_tensor(x), as_tensor(gain), as_tensor(bias)
    C = x.shape[-1]
    if gain.shape != (C,) or bias.shape != (C,):
        raise DimensionError(
            f"layer_norm affine shapes {gain.shape}, {bias.shape} do not match channels {C}"
        )
    out, xhat, inv = _kernels.layernorm_forward(x.data.reshape(-1, C), gain.data, bias.data, eps)

    def backward(g):
        gx, ggain, gbias = _kernels.layernorm_backward(g.reshape(-1, C), xhat, inv, gain.data)
        return gx.reshape(x.shape), ggain, gbias

    return _make(out.reshape(x.shape), (x, gain, bias), backward)


def _rows_view(data, ax):
    """Move ``ax`` to position -2 and flatten the rest into ``(P, L, C)``."""
    moved = np.moveaxis(data, ax, -2)
    lead = moved.shape[:-2]
    return np.ascontiguousarray(moved).reshape(-1, moved.shape[-2], moved.shape[-1]), lead


def _rows_unview(rows, lead, ax, ndim):
    full = rows.reshape(lead + rows.shape[-2:])
    return np.moveaxis(full, -2, ax)


def dilated_conv_axis(x, weight, axis="time", dilation=1, bias=None):
    """Same-padded dilated 1-D convolution along one non-channel axis.

    ``weight`` has shape ``(kernel, C_in, C_out)``; zero padding of
    ``dilation * (kernel - 1) / 2`` keeps the axis length, stride is 1.
    """
    x, weight = as_tensor(x), as_tensor(weight)
    if weight.ndim != 3:
        raise DimensionError(f"conv weight must be (kernel, C_in, C_out), got {weight.shape}")
    K, Cin, _ = weight.shape
    if K % 2 == 0:
        raise ConfigError(f"kernel size must be odd, got {K}")
    if dilation < 1:
        raise ConfigError(f"dilation must be >= 1, got {dilation}")
    if x.shape[-1] != Cin:
        raise DimensionError(f"conv input channels {x.shape} do not match weight {weight.shape}")
    ax = _axis(axis, x.ndim)
    if ax == x.ndim - 1:
        raise ConfigError("cannot convolve along the channel axis")
    rows, lead = _rows_view(x.data, ax)
    out = _rows_unview(_kernels.conv1d_forward(rows, weight.data, dilation), lead, ax, x.ndim)

    def backward(g):
        grows, _ = _rows_view(g, ax)
        gx, gw = _kernels.conv1d_backward(rows, weight.data, dilation, grows)
        return _rows_unview(gx, lead, ax, x.ndim), gw

    y = _make(out, (x, weight), backward)
    return y if bias is None else add(y, bias)


def maxpool_axis(x, axis="time", window=3):
    """Same-length windowed max along one axis; the border pads with -inf."""
    x = as_tensor(x)
    if window % 2 == 0 or window < 1:
        raise ConfigError(f"pool window must be a positive odd integer, got {window}")
    ax = _axis(axis, x.ndim)
    if ax == x.ndim - 1:
        raise ConfigError("cannot pool along the channel axis")
    rows, lead = _rows_view(x.data, ax)
    out_rows, idx = _kernels.maxpool1d_forward(rows, window)
    out = _rows_unview(out_rows, lead, ax, x.ndim)

    def backward(g):
        grows, _ = _rows_view(g, ax)
        return (_rows_unview(_kernels.maxpool1d_backward(idx, grows), lead, ax, x.ndim),)

    return _make(out, (x,), backward)


def softmax_cross_entropy(logits, labels):
    """Mean of ``-log softmax(logits)[label]`` over the batch (log-sum-exp form)."""
    logits = as_tensor(logits)
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise DimensionError(f"logits {logits.shape} and labels {labels.shape} disagree")
    B, K = logits.shape
    if labels.size and (labels.min() < 0 or labels.max() >= K):
        raise ValueError(f"labels must lie in [0, {K}), got range "
                         f"[{labels.min()}, {labels.max()}]")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1))
    rows = np.arange(B)
    loss = float(np.mean(lse - z[rows, labels]))

    def backward(g):
        p = np.exp(z - lse[:, None])
        p[rows, labels] -= 1.0
        return (p * (float(g) / B),)

    return _make(np.array(loss), (logits,), backward)
