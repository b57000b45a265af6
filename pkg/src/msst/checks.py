"""Finite-difference gradient suite used by ``msst gradcheck`` and the tests.

Every check reduces the op's output to a scalar through a fixed random
weighting (a plain sum would give softmax and layer norm zero gradients),
then compares tape gradients with central differences.
"""
from dataclasses import dataclass

import numpy as np

from . import ops
from .attention import (init_attention, spatial_attention, ssa_gc_head, temporal_attention,
                        tsa_head)
from .gradcheck import finite_difference_check
from .graph import chain_graph, normalize_adjacency
from .multiscale import MS_SC, MS_TC, init_multiscale, multiscale_forward
from .network import ModelConfig, forward, init_params
from .params import ParameterStore
from .tensor import Tensor

PRIMITIVE_TOL = 1e-5
END_TO_END_TOL = 1e-4


@dataclass
class CheckResult:
    name: str
    error: float
    tol: float

    @property
    def passed(self):
        return self.error < self.tol

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        return f"{status}  {self.name:<32s} max rel err {self.error:.2e} (tol {self.tol:.0e})"


def _check(name, build, inputs, rng, tol=PRIMITIVE_TOL, max_coords=None):
    w_rng = np.random.default_rng(rng.integers(2**32))
    weights = {}

    def f(*_):
        out = build()
        if out.size == 1:
            return ops.reshape(out, ())
        if "w" not in weights:
            weights["w"] = w_rng.standard_normal(out.shape)
        return ops.sum(ops.mul(out, weights["w"]))

    err = finite_difference_check(f, inputs, max_coords=max_coords, rng=rng)
    return CheckResult(name, err, tol)


def _t(rng, *shape, scale=1.0):
    return Tensor(rng.uniform(-scale, scale, shape), requires_grad=True)


def primitive_checks(seed=0):
    rng = np.random.default_rng(seed)
    res = []
    a, b = _t(rng, 2, 3, 4), _t(rng, 4, 2)
    res.append(_check("matmul", lambda: ops.matmul(a, b), [a, b], rng))
    a, b = _t(rng, 2, 3, 4), _t(rng, 2, 4, 5)
    res.append(_check("matmul (batched)", lambda: ops.matmul(a, b), [a, b], rng))
    a, b = _t(rng, 3, 4), _t(rng, 4)
    res.append(_check("add/mul broadcast", lambda: ops.mul(ops.add(a, b), b), [a, b], rng))
    x = Tensor(rng.uniform(0.1, 1.0, (3, 4)) * rng.choice([-1, 1], (3, 4)), requires_grad=True)
    res.append(_check("relu", lambda: ops.relu(x), [x], rng))
    x = _t(rng, 2, 3, 5)
    res.append(_check("softmax_rows", lambda: ops.softmax_rows(x), [x], rng))
    x, g, bb = _t(rng, 2, 3, 6), _t(rng, 6), _t(rng, 6)
    res.append(_check("layer_norm", lambda: ops.layer_norm(x, g, bb), [x, g, bb], rng))
    x, w, bias = _t(rng, 2, 9, 3, 4), _t(rng, 5, 4, 3), _t(rng, 3)
    res.append(_check("dilated_conv_axis time d=2",
                      lambda: ops.dilated_conv_axis(x, w, "time", 2, bias), [x, w, bias], rng))
    x, w = _t(rng, 2, 4, 7, 3), _t(rng, 5, 3, 2)
    res.append(_check("dilated_conv_axis node d=1",
                      lambda: ops.dilated_conv_axis(x, w, "node", 1), [x, w], rng))
    x = _t(rng, 2, 8, 3, 4)
    res.append(_check("maxpool_axis time", lambda: ops.maxpool_axis(x, "time", 3), [x], rng))
    res.append(_check("maxpool_axis node", lambda: ops.maxpool_axis(x, "node", 3), [x], rng))
    a, b = _t(rng, 2, 3, 2), _t(rng, 2, 3, 4)
    res.append(_check("concat/swapaxes/mean",
                      lambda: ops.mean(ops.swapaxes(ops.concat([a, b], -1), 0, 1), axis=(0,)),
                      [a, b], rng))
    logits = _t(rng, 4, 3, scale=2.0)
    labels = np.array([0, 2, 1, 2])
    res.append(_check("softmax_cross_entropy",
                      lambda: ops.softmax_cross_entropy(logits, labels), [logits], rng))
    return res


def attention_checks(seed=1):
    rng = np.random.default_rng(seed)
    res = []
    N, T, D, Dh = 4, 5, 6, 3
    H = _t(rng, 2, N, D)
    wq, wk, wv = _t(rng, D, Dh), _t(rng, D, Dh), _t(rng, D, Dh)
    top = _t(rng, N, N)
    res.append(_check("ssa_gc_head",
                      lambda: ssa_gc_head(H, wq, wk, wv, top)[0], [H, wq, wk, wv, top], rng))
    Hn = _t(rng, 2, T, D)
    res.append(_check("tsa_head", lambda: tsa_head(Hn, wq, wk, wv)[0], [Hn, wq, wk, wv], rng))

    store = ParameterStore()
    X = _t(rng, 2, T, N, D)
    adj = normalize_adjacency(chain_graph(N).adjacency)
    init_attention(store, "sp", "spatial", D, 8, 2, N, rng, topology=adj)
    init_attention(store, "te", "temporal", D, 8, 2, T, rng)
    sp = [X] + [store[k] for k in store.filter("sp.")]
    res.append(_check("spatial attention (2 heads)",
                      lambda: spatial_attention(X, store, "sp", 2), sp, rng))
    te = [X] + [store[k] for k in store.filter("te.")]
    res.append(_check("temporal attention (2 heads)",
                      lambda: temporal_attention(X, store, "te", 2), te, rng))
    return res


def multiscale_checks(seed=2):
    rng = np.random.default_rng(seed)
    res = []
    store = ParameterStore()
    init_multiscale(store, "tc", 8, 8, MS_TC, rng)
    init_multiscale(store, "sc", 8, 8, MS_SC, rng)
    X = _t(rng, 2, 9, 6, 8)
    for prefix, cfg, label in (("tc", MS_TC, "MS-TC block"), ("sc", MS_SC, "MS-SC block")):
        inputs = [X] + [store[k] for k in store.filter(prefix + ".")]
        res.append(_check(label, lambda p=prefix, c=cfg: multiscale_forward(X, store, p, c),
                          inputs, rng))
    return res


def toy_model(seed=0):
    """The end-to-end toy: N=3, T=8, base 8, 2 heads, 2 classes, noise off."""
    cfg = ModelConfig(num_classes=2, num_joints=3, in_channels=2, frames=8, base_channel=8,
                      heads=2, noise_std=0.0)
    graph = chain_graph(3)
    store = init_params(cfg, graph, seed)
    rng = np.random.default_rng(seed + 1)
    # move alpha off zero so stream-2 parameters receive gradient
    store["fusion.alpha"].data = rng.uniform(0.5, 1.0, cfg.out_channels)
    X = rng.uniform(-1.0, 1.0, (2, cfg.frames, cfg.num_joints, cfg.in_channels))
    y = np.array([0, 1])
    return cfg, store, X, y


def end_to_end_check(seed=0, max_coords=2):
    cfg, store, X, y = toy_model(seed)
    rng = np.random.default_rng(seed + 2)

    def loss(*_):
        logits, _ = forward(X, cfg, store, training=False)
        return ops.softmax_cross_entropy(logits, y)

    params = [store[k] for k in store]
    err = finite_difference_check(loss, params, max_coords=max_coords, rng=rng)
    return CheckResult("end-to-end toy model", err, END_TO_END_TOL)


def run_gradient_suite(seed=0, max_coords=2):
    return (primitive_checks(seed) + attention_checks(seed + 1) + multiscale_checks(seed + 2)
            + [end_to_end_check(seed, max_coords)])
