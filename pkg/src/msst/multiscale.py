"""Four-branch multi-scale convolution over time (MS-TC) or joints (MS-SC).

Branch layout in the output channels is fixed::

    [ dilated conv d=1 | dilated conv d=2 | max-pool | residual ]

each a quarter of ``C_out``. Every branch starts with a pointwise (1x1)
channel reduction; the two convolution branches end in a ReLU.
"""
import math
from dataclasses import dataclass

from . import ops
from .errors import ConfigError


@dataclass(frozen=True)
class MultiScaleConfig:
    axis: str = "time"
    kernel: int = 5
    dilations: tuple = (1, 2)
    pool_window: int = 3

    def __post_init__(self):
        if self.axis not in ("time", "node"):
            raise ConfigError(f"multi-scale axis must be 'time' or 'node', got {self.axis!r}")
        if self.kernel % 2 == 0:
            raise ConfigError(f"kernel size must be odd, got {self.kernel}")
        if len(self.dilations) != 2:
            raise ConfigError("exactly two dilated branches are supported")


MS_TC = MultiScaleConfig(axis="time")
MS_SC = MultiScaleConfig(axis="node")


def branch_width(c_out):
    if c_out % 4:
        raise ConfigError(f"output channels {c_out} are not divisible by 4 branches")
    return c_out // 4


def init_multiscale(store, prefix, c_in, c_out, cfg, rng):
    q = branch_width(c_out)
    pw_bound = 1.0 / math.sqrt(c_in)
    conv_bound = 1.0 / math.sqrt(q * cfg.kernel)
    for b in range(4):
        p = f"{prefix}.branch{b}"
        store.add(f"{p}.pw", rng.uniform(-pw_bound, pw_bound, (c_in, q)))
        store.add(f"{p}.pw_bias", rng.uniform(-pw_bound, pw_bound, (q,)))
        if b < 2:
            store.add(f"{p}.w", rng.uniform(-conv_bound, conv_bound, (cfg.kernel, q, q)))
            store.add(f"{p}.bias", rng.uniform(-conv_bound, conv_bound, (q,)))


def multiscale_forward(H, store, prefix, cfg):
    """``H[..., T, N, C_in] -> [..., T, N, C_out]``; T and N are preserved."""
    outs = []
    for b in range(4):
        p = f"{prefix}.branch{b}"
        h = ops.linear(H, store[f"{p}.pw"], store[f"{p}.pw_bias"])
        if b < 2:
            h = ops.dilated_conv_axis(h, store[f"{p}.w"], axis=cfg.axis,
                                      dilation=cfg.dilations[b], bias=store[f"{p}.bias"])
            h = ops.relu(h)
        elif b == 2:
            h = ops.maxpool_axis(h, axis=cfg.axis, window=cfg.pool_window)
        outs.append(h)
    return ops.concat(outs, axis=-1)


def ms_tc_forward(H, store, prefix, cfg=MS_TC):
    if cfg.axis != "time":
        raise ConfigError("MS-TC convolves along time")
    return multiscale_forward(H, store, prefix, cfg)


def ms_sc_forward(H, store, prefix, cfg=MS_SC):
    if cfg.axis != "node":
        raise ConfigError("MS-SC convolves along joints")
    return multiscale_forward(H, store, prefix, cfg)
