"""Time the numba kernels against the pure-numpy path.

    python3 benchmarks/bench_kernels.py [--repeat 20] [--json out.json]

Shapes mirror one training batch of the desk-scale model (B=16, T=64, N=10)
plus a wider layer (C=64). The last row times a whole forward+backward step.
"""
import argparse
import json
import time

import numpy as np

from msst import _kernels as K
from msst.network import ModelConfig, forward, init_params
from msst.data import synthetic_graph
from msst.ops import softmax_cross_entropy
from msst.tensor import Tape


def _cases(rng):
    B, T, N = 16, 64, 10
    for C in (8, 64):
        x = rng.standard_normal((B * N, T, C))
        w = rng.standard_normal((5, C, C))
        g = rng.standard_normal((B * N, T, C))
        yield f"conv1d fwd C={C} d=2", "conv1d_forward", (x, w, 2)
        yield f"conv1d bwd C={C} d=2", "conv1d_backward", (x, w, 2, g)
        out, idx = K.maxpool1d_forward_np(x, 3)
        yield f"maxpool fwd C={C}", "maxpool1d_forward", (x, 3)
        yield f"maxpool bwd C={C}", "maxpool1d_backward", (idx, g)
        rows = rng.standard_normal((B * T * N, C))
        gain, bias = np.ones(C), np.zeros(C)
        _, xhat, inv = K.layernorm_forward_np(rows, gain, bias, 1e-5)
        yield f"layernorm fwd C={C}", "layernorm_forward", (rows, gain, bias, 1e-5)
        yield f"layernorm bwd C={C}", "layernorm_backward", (rows, xhat, inv, gain)
    att = K.softmax_forward_np(rng.standard_normal((B * N, T, T)).reshape(-1, T))
    yield "softmax bwd T=64", "softmax_backward", (att, rng.standard_normal(att.shape))


def _time(fn, args, repeat):
    fn(*args)  # compile / warm caches
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def _train_step(backend, repeat):
    prev = K.set_backend(backend)
    try:
        cfg = ModelConfig(num_classes=4, num_joints=10, frames=64, base_channel=8, heads=2,
                          num_layers=3)
        store = init_params(cfg, synthetic_graph(10), 0)
        rng = np.random.default_rng(0)
        X = rng.standard_normal((16, 64, 10, 3))
        y = rng.integers(0, 4, 16)

        def step():
            store.zero_grad()
            with Tape() as tape:
                loss = softmax_cross_entropy(forward(X, cfg, store)[0], y)
            tape.backward(loss)

        return _time(lambda: step(), (), max(1, repeat // 5))
    finally:
        K.set_backend(prev)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--json", help="also write results here")
    args = ap.parse_args()
    if not K.HAS_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")
    rng = np.random.default_rng(0)
    rows = []
    print(f"{'kernel':<26s} {'numpy ms':>10s} {'numba ms':>10s} {'speedup':>8s}")
    for label, name, inputs in _cases(rng):
        t_np = _time(K._NUMPY[name], inputs, args.repeat)
        t_nb = _time(K._NUMBA[name], inputs, args.repeat)
        rows.append({"kernel": label, "numpy_s": t_np, "numba_s": t_nb})
        print(f"{label:<26s} {1e3 * t_np:10.3f} {1e3 * t_nb:10.3f} {t_np / t_nb:8.2f}")
    t_np, t_nb = _train_step("numpy", args.repeat), _train_step("numba", args.repeat)
    rows.append({"kernel": "train step (L=3, B=16)", "numpy_s": t_np, "numba_s": t_nb})
    print(f"{'train step (L=3, B=16)':<26s} {1e3 * t_np:10.1f} {1e3 * t_nb:10.1f} {t_np / t_nb:8.2f}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=1)


if __name__ == "__main__":
    main()
