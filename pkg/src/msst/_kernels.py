"""Hot inner loops: dilated 1-D convolution, windowed max-pooling, row
softmax and layer normalisation.

Each kernel has a pure-numpy version and a numba ``@njit`` version (softmax
forward excepted: numpy's vectorised exp was faster, so both tables share it).
The numba table is used when numba imports and ``MSST_DISABLE_NUMBA`` is unset
or ``0``; ``set_backend`` switches at runtime, which the tests and
``benchmarks/bench_kernels.py`` rely on.

Convolution and pooling operate on ``(P, L, C)`` arrays: ``P`` independent
rows, the convolved axis ``L`` and channels ``C`` last. Softmax and layer
norm operate on ``(R, C)``, one row per position.
"""
import os

import numpy as np

try:
    from numba import njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover
    HAS_NUMBA = False


def _env_wants_numba():
    flag = os.environ.get("MSST_DISABLE_NUMBA", "0").strip().lower()
    return flag in ("", "0", "false", "no")


# --------------------------------------------------------------------------
# numpy reference path
# --------------------------------------------------------------------------

def _pad_rows(x, pad, value=0.0):
    if pad == 0:
        return x
    P, L, C = x.shape
    out = np.full((P, L + 2 * pad, C), value, dtype=x.dtype)
    out[:, pad:pad + L] = x
    return out


def conv1d_forward_np(x, w, dilation):
    P, L, Cin = x.shape
    K, _, Cout = w.shape
    pad = dilation * (K - 1) // 2
    xp = _pad_rows(x, pad)
    out = np.zeros((P * L, Cout))
    for k in range(K):
        s = k * dilation
        out += xp[:, s:s + L].reshape(P * L, Cin) @ w[k]
    return out.reshape(P, L, Cout)


def conv1d_backward_np(x, w, dilation, g):
    P, L, Cin = x.shape
    K, _, Cout = w.shape
    pad = dilation * (K - 1) // 2
    xp = _pad_rows(x, pad)
    g2 = g.reshape(P * L, Cout)
    gxp = np.zeros_like(xp)
    gw = np.empty_like(w)
    for k in range(K):
        s = k * dilation
        gxp[:, s:s + L] += (g2 @ w[k].T).reshape(P, L, Cin)
        gw[k] = xp[:, s:s + L].reshape(P * L, Cin).T @ g2
    return gxp[:, pad:pad + L], gw


def maxpool1d_forward_np(x, window):
    P, L, C = x.shape
    r = (window - 1) // 2
    xp = _pad_rows(x, r, -np.inf)
    stack = np.stack([xp[:, s:s + L] for s in range(window)])
    off = np.argmax(stack, axis=0)
    out = np.take_along_axis(stack, off[None], axis=0)[0]
    idx = off + np.arange(L)[None, :, None] - r
    return out, idx


def maxpool1d_backward_np(idx, g):
    P, L, C = g.shape
    gx = np.zeros_like(g)
    p = np.broadcast_to(np.arange(P)[:, None, None], g.shape)
    c = np.broadcast_to(np.arange(C)[None, None, :], g.shape)
    np.add.at(gx, (p, idx, c), g)
    return gx


def softmax_forward_np(x):
    e = np.exp(x - x.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def softmax_backward_np(y, g):
    return y * (g - (g * y).sum(axis=-1, keepdims=True))


def layernorm_forward_np(x, gain, bias, eps):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    return xhat * gain + bias, xhat, inv[:, 0]


def layernorm_backward_np(g, xhat, inv, gain):
    gh = g * gain
    gx = inv[:, None] * (gh - gh.mean(axis=-1, keepdims=True)
                         - xhat * (gh * xhat).mean(axis=-1, keepdims=True))
    return gx, (g * xhat).sum(axis=0), g.sum(axis=0)


# --------------------------------------------------------------------------
# numba path
# --------------------------------------------------------------------------

if HAS_NUMBA:

    @njit(cache=True)
    def _pad_rows_nb(x, pad):
        P, L, C = x.shape
        out = np.zeros((P, L + 2 * pad, C))
        out[:, pad:pad + L] = x
        return out

    @njit(cache=True)
    def conv1d_forward_nb(x, w, dilation):
        P, L, Cin = x.shape
        K, _, Cout = w.shape
        pad = dilation * (K - 1) // 2
        xp = _pad_rows_nb(x, pad)
        out = np.zeros((P, L, Cout))
        for p in range(P):
            acc = np.zeros((L, Cout))
            for k in range(K):
                s = k * dilation
                acc += np.dot(xp[p, s:s + L], w[k])
            out[p] = acc
        return out

    @njit(cache=True)
    def conv1d_backward_nb(x, w, dilation, g):
        # input grad row by row like the forward; weight grad as one large
        # product per tap over a shifted copy of the padded input
        P, L, Cin = x.shape
        K, _, Cout = w.shape
        pad = dilation * (K - 1) // 2
        xp = _pad_rows_nb(x, pad)
        gxp = np.zeros_like(xp)
        wt = np.empty((K, Cout, Cin))
        for k in range(K):
            wt[k] = w[k].T.copy()
        for p in range(P):
            for k in range(K):
                s = k * dilation
                gxp[p, s:s + L] += np.dot(g[p], wt[k])
        g2 = g.reshape(P * L, Cout)
        gw = np.empty((K, Cin, Cout))
        xs = np.empty((P, L, Cin))
        for k in range(K):
            s = k * dilation
            for p in range(P):
                xs[p] = xp[p, s:s + L]
            gw[k] = np.dot(xs.reshape(P * L, Cin).T, g2)
        return gxp[:, pad:pad + L].copy(), gw

    @njit(cache=True)
    def maxpool1d_forward_nb(x, window):
        P, L, C = x.shape
        r = (window - 1) // 2
        out = np.empty((P, L, C))
        idx = np.empty((P, L, C), dtype=np.int64)
        for p in range(P):
            for t in range(L):
                lo = max(t - r, 0)
                hi = min(t + r + 1, L)
                for c in range(C):
                    best = x[p, lo, c]
                    arg = lo
                    for s in range(lo + 1, hi):
                        if x[p, s, c] > best:
                            best = x[p, s, c]
                            arg = s
                    out[p, t, c] = best
                    idx[p, t, c] = arg
        return out, idx

    @njit(cache=True)
    def maxpool1d_backward_nb(idx, g):
        P, L, C = g.shape
        gx = np.zeros((P, L, C))
        for p in range(P):
            for t in range(L):
                for c in range(C):
                    gx[p, idx[p, t, c], c] += g[p, t, c]
        return gx

    @njit(cache=True)
    def softmax_backward_nb(y, g):
        R, C = y.shape
        gx = np.empty((R, C))
        for r in range(R):
            dot = 0.0
            for c in range(C):
                dot += g[r, c] * y[r, c]
            for c in range(C):
                gx[r, c] = y[r, c] * (g[r, c] - dot)
        return gx

    @njit(cache=True)
    def layernorm_forward_nb(x, gain, bias, eps):
        R, C = x.shape
        out = np.empty((R, C))
        xhat = np.empty((R, C))
        inv = np.empty(R)
        for r in range(R):
            mu = 0.0
            for c in range(C):
                mu += x[r, c]
            mu /= C
            var = 0.0
            for c in range(C):
                d = x[r, c] - mu
                var += d * d
            var /= C
            iv = 1.0 / np.sqrt(var + eps)
            inv[r] = iv
            for c in range(C):
                h = (x[r, c] - mu) * iv
                xhat[r, c] = h
                out[r, c] = h * gain[c] + bias[c]
        return out, xhat, inv

    @njit(cache=True)
    def layernorm_backward_nb(g, xhat, inv, gain):
        R, C = g.shape
        gx = np.empty((R, C))
        ggain = np.zeros(C)
        gbias = np.zeros(C)
        for r in range(R):
            m1 = 0.0
            m2 = 0.0
            for c in range(C):
                gh = g[r, c] * gain[c]
                m1 += gh
                m2 += gh * xhat[r, c]
                ggain[c] += g[r, c] * xhat[r, c]
                gbias[c] += g[r, c]
            m1 /= C
            m2 /= C
            for c in range(C):
                gx[r, c] = inv[r] * (g[r, c] * gain[c] - m1 - xhat[r, c] * m2)
        return gx, ggain, gbias


_NUMPY = {
    "conv1d_forward": conv1d_forward_np,
    "conv1d_backward": conv1d_backward_np,
    "maxpool1d_forward": maxpool1d_forward_np,
    "maxpool1d_backward": maxpool1d_backward_np,
    "softmax_forward": softmax_forward_np,
    "softmax_backward": softmax_backward_np,
    "layernorm_forward": layernorm_forward_np,
    "layernorm_backward": layernorm_backward_np,
}
_NUMBA = {
    "conv1d_forward": conv1d_forward_nb,
    "conv1d_backward": conv1d_backward_nb,
    "maxpool1d_forward": maxpool1d_forward_nb,
    "maxpool1d_backward": maxpool1d_backward_nb,
    # numpy's vectorised exp beats a scalar numba loop; only the backward is fused
    "softmax_forward": softmax_forward_np,
    "softmax_backward": softmax_backward_nb,
    "layernorm_forward": layernorm_forward_nb,
    "layernorm_backward": layernorm_backward_nb,
} if HAS_NUMBA else None

_active = _NUMBA if (HAS_NUMBA and _env_wants_numba()) else _NUMPY


def get_backend():
    return "numba" if _active is _NUMBA else "numpy"


def set_backend(name):
    """Select ``"numba"`` or ``"numpy"`` kernels; returns the previous name."""
    global _active
    prev = get_backend()
    if name == "numba":
        if not HAS_NUMBA:
            raise RuntimeError("numba is not installed")
        _active = _NUMBA
    elif name == "numpy":
        _active = _NUMPY
    else:
        raise ValueError(f"unknown kernel backend {name!r}")
    return prev


def conv1d_forward(x, w, dilation):
    return _active["conv1d_forward"](np.ascontiguousarray(x), np.ascontiguousarray(w), dilation)


def conv1d_backward(x, w, dilation, g):
    return _active["conv1d_backward"](
        np.ascontiguousarray(x), np.ascontiguousarray(w), dilation, np.ascontiguousarray(g)
    )


def maxpool1d_forward(x, window):
    return _active["maxpool1d_forward"](np.ascontiguousarray(x), window)


def maxpool1d_backward(idx, g):
    return _active["maxpool1d_backward"](np.ascontiguousarray(idx), np.ascontiguousarray(g))


def softmax_forward(x):
    return _active["softmax_forward"](np.ascontiguousarray(x))


def softmax_backward(y, g):
    return _active["softmax_backward"](np.ascontiguousarray(y), np.ascontiguousarray(g))


def layernorm_forward(x, gain, bias, eps):
    return _active["layernorm_forward"](np.ascontiguousarray(x), np.ascontiguousarray(gain),
                                        np.ascontiguousarray(bias), eps)


def layernorm_backward(g, xhat, inv, gain):
    return _active["layernorm_backward"](np.ascontiguousarray(g), xhat, inv,
                                         np.ascontiguousarray(gain))
