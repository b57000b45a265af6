"""Spatial self-attention graph convolution (SSA-GC) and temporal self-attention (TSA).

Both heads score with ``(H W_K)(H W_Q)^T / sqrt(D')`` and normalise over the
last index. SSA-GC gates the resulting ``N x N`` map elementwise with a
learnable topology before it is applied to the values.
"""
import math

import numpy as np

from . import ops
from .errors import ConfigError, DimensionError
from .tensor import Tensor


def add_positional(H, table, which):
    """Add a positional table to ``H[..., T, N, D]``.

    ``which="spatial"`` broadcasts an ``(N, D)`` table over frames,
    ``which="temporal"`` a ``(T, D)`` table over joints.
    """
    table = ops.as_tensor(table)
    T, N, D = H.shape[-3:]
    if which == "spatial":
        if table.shape != (N, D):
            raise DimensionError(f"spatial table {table.shape} does not fit features {H.shape}")
        return ops.add(H, table)
    if which == "temporal":
        if table.shape != (T, D):
            raise DimensionError(f"temporal table {table.shape} does not fit features {H.shape}")
        return ops.add(H, ops.reshape(table, (T, 1, D)))
    raise ConfigError(f"positional kind must be 'spatial' or 'temporal', got {which!r}")


def _scores(qk_in, w_q, w_k):
    q = ops.matmul(qk_in, w_q)
    k = ops.matmul(qk_in, w_k)
    d_head = w_q.shape[-1]
    return ops.scale(ops.matmul(k, ops.swapaxes(q, -1, -2)), 1.0 / math.sqrt(d_head))


def ssa_gc_head(H, w_q, w_k, w_v, topology, qk_in=None):
    """One SSA-GC head over the joint axis of ``H[..., N, D]``.

    Returns ``(out[..., N, D'], attn)`` where ``attn`` is the row-stochastic
    map before gating by ``topology``.
    """
    qk_in = H if qk_in is None else qk_in
    attn = ops.softmax_rows(_scores(qk_in, w_q, w_k))
    gated = ops.mul(attn, topology)
    return ops.matmul(gated, ops.matmul(H, w_v)), attn


def tsa_head(H, w_q, w_k, w_v, qk_in=None):
    """One TSA head over the frame axis of ``H[..., T, D]``; no topology gate."""
    qk_in = H if qk_in is None else qk_in
    attn = ops.softmax_rows(_scores(qk_in, w_q, w_k))
    return ops.matmul(attn, ops.matmul(H, w_v)), attn


def multi_head_fuse(heads, w_o):
    """Concatenate head outputs along channels and project with ``w_o``."""
    lengths = {h.shape[:-1] for h in heads}
    if len(lengths) != 1:
        raise DimensionError(f"head outputs disagree in shape: {[h.shape for h in heads]}")
    return ops.matmul(ops.concat(heads, axis=-1), w_o)


def head_dim(channels, heads):
    if heads < 1 or channels % heads:
        raise ConfigError(f"{channels} channels cannot be split into {heads} heads")
    return channels // heads


def init_attention(store, prefix, kind, c_in, c_out, heads, length, rng, topology=None):
    """Create per-head Q/K/V, the output projection, the PE table and (spatial) topology.

    ``length`` is N for spatial and T for temporal attention.
    """
    d = head_dim(c_in, heads)
    bound = 1.0 / math.sqrt(c_in)
    for m in range(heads):
        for w in ("wq", "wk", "wv"):
            store.add(f"{prefix}.h{m}.{w}", rng.uniform(-bound, bound, (c_in, d)))
        if kind == "spatial":
            store.add(f"{prefix}.h{m}.topology", np.array(topology, dtype=np.float64))
    store.add(f"{prefix}.wo", rng.uniform(-bound, bound, (c_in, c_out)))
    store.add(f"{prefix}.pe", rng.normal(0.0, 0.02, (length, c_in)))


def spatial_attention(H, store, prefix, heads, trace=None):
    """Multi-head SSA-GC on ``H[B, T, N, C]`` with the spatial table on Q/K."""
    qk_in = add_positional(H, store[f"{prefix}.pe"], "spatial")
    outs = []
    for m in range(heads):
        p = f"{prefix}.h{m}"
        out, attn = ssa_gc_head(H, store[f"{p}.wq"], store[f"{p}.wk"], store[f"{p}.wv"],
                                store[f"{p}.topology"], qk_in=qk_in)
        outs.append(out)
        if trace is not None:
            trace.append(("spatial", m, _average_map(attn)))
    return multi_head_fuse(outs, store[f"{prefix}.wo"])


def temporal_attention(H, store, prefix, heads, trace=None):
    """Multi-head TSA on ``H[B, T, N, C]``; frames attend per joint."""
    qk_in = add_positional(H, store[f"{prefix}.pe"], "temporal")
    Hn = ops.swapaxes(H, -3, -2)
    qk_n = ops.swapaxes(qk_in, -3, -2)
    outs = []
    for m in range(heads):
        p = f"{prefix}.h{m}"
        out, attn = tsa_head(Hn, store[f"{p}.wq"], store[f"{p}.wk"], store[f"{p}.wv"],
                             qk_in=qk_n)
        outs.append(out)
        if trace is not None:
            trace.append(("temporal", m, _average_map(attn)))
    return ops.swapaxes(multi_head_fuse(outs, store[f"{prefix}.wo"]), -3, -2)


def _average_map(attn):
    data = attn.data if isinstance(attn, Tensor) else np.asarray(attn)
    n = data.shape[-1]
    return data.reshape(-1, data.shape[-2], n).mean(axis=0)
