"""The two-stream MSST-GCN network.

An embedding block feeds two parallel stacks of encoding blocks:

* stream 1: SSA-GC -> add & norm -> MS-TC -> add & norm
* stream 2: TSA    -> add & norm -> MS-SC -> add & norm

Each stack ends in global average pooling; the pooled vectors are fused as
``z1 + alpha * z2`` (channel-wise), optionally perturbed by Gaussian noise
during training, and classified by a fully-connected layer.
"""
import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np

from . import ops
from .attention import head_dim, init_attention, spatial_attention, temporal_attention
from .errors import ConfigError, DimensionError
from .graph import normalize_adjacency
from .multiscale import MS_SC, MS_TC, branch_width, init_multiscale, multiscale_forward
from .params import ParameterStore
from .tensor import Tensor


@dataclass
class ModelConfig:
    num_classes: int = 2
    num_joints: int = 25
    in_channels: int = 3
    frames: int = 64
    base_channel: int = 64
    num_layers: int = 9
    heads: int = 4
    noise_std: float = 1.0

    def __post_init__(self):
        if self.num_classes < 2:
            raise ConfigError("need at least two classes")
        if self.num_layers < 1:
            raise ConfigError("need at least one encoding block")
        for c in self.channels():
            branch_width(c)
            head_dim(c, self.heads)

    def channels(self):
        """Per-block output widths: base, 2*base, 4*base over three equal stages."""
        L = self.num_layers
        return [self.base_channel * 2 ** (3 * i // L) for i in range(L)]

    @property
    def out_channels(self):
        return self.channels()[-1]

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in dataclasses.fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})

    def to_dict(self):
        return dataclasses.asdict(self)


@dataclass
class AttentionMaps:
    """Traced attention maps, averaged over batch and the non-attended axis."""

    entries: list = field(default_factory=list)

    def add(self, layer, kind, head, matrix):
        self.entries.append({"layer": layer, "head": head, "kind": kind, "map": matrix})

    def select(self, kind):
        return [e for e in self.entries if e["kind"] == kind]

    def to_json(self):
        return [dict(e, map=np.asarray(e["map"]).tolist()) for e in self.entries]


def init_params(cfg, graph, seed=0):
    if graph.num_joints != cfg.num_joints:
        raise ConfigError(f"graph has {graph.num_joints} joints, config expects {cfg.num_joints}")
    rng = np.random.default_rng(seed)
    store = ParameterStore()
    topology = normalize_adjacency(graph.adjacency)
    D0 = cfg.base_channel
    bound = 1.0 / math.sqrt(cfg.in_channels)
    store.add("embed.w", rng.uniform(-bound, bound, (cfg.in_channels, D0)))
    store.add("embed.b", rng.uniform(-bound, bound, (D0,)))
    for s in (1, 2):
        c_in = D0
        for layer, c_out in enumerate(cfg.channels(), start=1):
            p = f"L{layer}.s{s}"
            if s == 1:
                init_attention(store, f"{p}.attn", "spatial", c_in, c_out, cfg.heads,
                               cfg.num_joints, rng, topology=topology)
            else:
                init_attention(store, f"{p}.attn", "temporal", c_in, c_out, cfg.heads,
                               cfg.frames, rng)
            if c_in != c_out:
                rb = 1.0 / math.sqrt(c_in)
                store.add(f"{p}.res.w", rng.uniform(-rb, rb, (c_in, c_out)))
                store.add(f"{p}.res.b", np.zeros(c_out))
            store.add(f"{p}.ln1.gain", np.ones(c_out), decay=False)
            store.add(f"{p}.ln1.bias", np.zeros(c_out), decay=False)
            init_multiscale(store, p, c_out, c_out, MS_TC if s == 1 else MS_SC, rng)
            store.add(f"{p}.ln2.gain", np.ones(c_out), decay=False)
            store.add(f"{p}.ln2.bias", np.zeros(c_out), decay=False)
            c_in = c_out
    C = cfg.out_channels
    store.add("fusion.alpha", np.zeros(C), decay=False)
    fb = 1.0 / math.sqrt(C)
    store.add("fc.w", rng.uniform(-fb, fb, (C, cfg.num_classes)))
    store.add("fc.b", np.zeros(cfg.num_classes))
    return store


def embed(X, store):
    """Per-position linear map from coordinates to the base width."""
    X = ops.as_tensor(X)
    w = store["embed.w"]
    if X.shape[-1] != w.shape[0]:
        raise DimensionError(f"input has {X.shape[-1]} channels, embedding expects {w.shape[0]}")
    return ops.linear(X, w, store["embed.b"])


def encoding_block(H, store, stream, layer, cfg, maps=None):
    p = f"L{layer}.s{stream}"
    trace = [] if maps is not None else None
    if stream == 1:
        a = spatial_attention(H, store, f"{p}.attn", cfg.heads, trace)
    else:
        a = temporal_attention(H, store, f"{p}.attn", cfg.heads, trace)
    res = ops.linear(H, store[f"{p}.res.w"], store[f"{p}.res.b"]) if f"{p}.res.w" in store else H
    H = ops.layer_norm(ops.add(a, res), store[f"{p}.ln1.gain"], store[f"{p}.ln1.bias"])
    m = multiscale_forward(H, store, p, MS_TC if stream == 1 else MS_SC)
    H = ops.layer_norm(ops.add(m, H), store[f"{p}.ln2.gain"], store[f"{p}.ln2.bias"])
    if maps is not None:
        for kind, head, matrix in trace:
            maps.add(layer, kind, head, matrix)
    return H


def stream_forward(H0, stream, cfg, store, maps=None, return_hidden=False):
    """Run one stack of encoding blocks and pool; returns ``z[..., C_out]``."""
    if stream not in (1, 2):
        raise ConfigError(f"stream must be 1 or 2, got {stream}")
    H = H0
    hidden = []
    for layer in range(1, cfg.num_layers + 1):
        H = encoding_block(H, store, stream, layer, cfg, maps)
        hidden.append(H.shape)
    z = ops.mean(H, axis=(-3, -2))
    return (z, hidden) if return_hidden else z


def fuse_streams(z1, z2, alpha, noise_std=1.0, training=False, rng=None):
    """``z1 + alpha * z2``, plus ``noise_std * eps`` with ``eps ~ N(0, I)`` when training."""
    if z1.shape != z2.shape:
        raise DimensionError(f"stream outputs differ in shape: {z1.shape} vs {z2.shape}")
    f = ops.add(z1, ops.mul(alpha, z2))
    if training and noise_std > 0:
        if rng is None:
            raise ValueError("training-mode fusion needs an rng for the noise sample")
        f = ops.add(f, Tensor(noise_std * rng.standard_normal(f.shape)))
    return f


def classify(z, store):
    return ops.linear(z, store["fc.w"], store["fc.b"])


def forward(X, cfg, store, training=False, rng=None, trace=False):
    """Logits for a batch ``X[B, T, N, C]`` (or one ``[T, N, C]`` sample).

    Returns ``(logits, maps)``; ``maps`` is an :class:`AttentionMaps` when
    ``trace`` is set, otherwise ``None``.
    """
    X = np.asarray(X.data if isinstance(X, Tensor) else X, dtype=np.float64)
    if X.ndim == 3:
        X = X[None]
    if X.ndim != 4:
        raise DimensionError(f"expected input of shape (B, T, N, C), got {X.shape}")
    _, T, N, C = X.shape
    if (T, N, C) != (cfg.frames, cfg.num_joints, cfg.in_channels):
        raise DimensionError(f"input (T, N, C)={(T, N, C)} does not match config "
                             f"{(cfg.frames, cfg.num_joints, cfg.in_channels)}")
    maps = AttentionMaps() if trace else None
    H0 = embed(X, store)
    z1 = stream_forward(H0, 1, cfg, store, maps)
    z2 = stream_forward(H0, 2, cfg, store, maps)
    f = fuse_streams(z1, z2, store["fusion.alpha"], cfg.noise_std, training, rng)
    return classify(f, store), maps
