import numpy as np
import pytest

from msst import ops
from msst.checks import multiscale_checks
from msst.errors import ConfigError
from msst.multiscale import (MS_SC, MS_TC, MultiScaleConfig, branch_width, init_multiscale,
                             ms_sc_forward, ms_tc_forward, multiscale_forward)
from msst.params import ParameterStore
from msst.tensor import Tensor


def _block(rng, c_in=8, c_out=8, cfg=MS_TC, prefix="b"):
    store = ParameterStore()
    init_multiscale(store, prefix, c_in, c_out, cfg, rng)
    return store


def _reference(H, store, prefix, cfg):
    """Hand-rolled composition of the primitives, branch by branch."""
    H = Tensor(H)
    pw = lambda b: ops.add(ops.matmul(H, store[f"{prefix}.branch{b}.pw"]),
                           store[f"{prefix}.branch{b}.pw_bias"])
    out = []
    for b, d in enumerate(cfg.dilations):
        c = ops.dilated_conv_axis(pw(b), store[f"{prefix}.branch{b}.w"], cfg.axis, d)
        out.append(ops.relu(ops.add(c, store[f"{prefix}.branch{b}.bias"])))
    out.append(ops.maxpool_axis(pw(2), cfg.axis, cfg.pool_window))
    out.append(pw(3))
    return np.concatenate([o.data for o in out], axis=-1)


@pytest.mark.parametrize("cfg", [MS_TC, MS_SC], ids=["tc", "sc"])
def test_composition_oracle(rng, cfg):
    store = _block(rng, 6, 8, cfg)
    H = rng.standard_normal((2, 9, 5, 6))
    got = multiscale_forward(Tensor(H), store, "b", cfg).data
    np.testing.assert_allclose(got, _reference(H, store, "b", cfg), atol=1e-12)


def test_constant_in_time_interior(rng):
    store = _block(rng)
    H = np.broadcast_to(rng.standard_normal((1, 1, 3, 8)), (1, 12, 3, 8)).copy()
    out = ms_tc_forward(Tensor(H), store, "b").data
    q = 2
    # dilation 1, kernel 5 reaches 2 frames out; dilation 2 reaches 4
    np.testing.assert_allclose(out[0, 2:10, :, :q], np.broadcast_to(out[0, 2, :, :q], (8, 3, q)),
                               atol=1e-12)
    np.testing.assert_allclose(out[0, 4:8, :, q:2 * q],
                               np.broadcast_to(out[0, 4, :, q:2 * q], (4, 3, q)), atol=1e-12)
    assert not np.allclose(out[0, 0, :, :q], out[0, 5, :, :q])


def test_residual_branch_is_frame_local(rng):
    store = _block(rng, 4, 4)
    H = rng.standard_normal((6, 2, 4))
    out = ms_tc_forward(Tensor(H), store, "b").data
    w, b = store["b.branch3.pw"].data, store["b.branch3.pw_bias"].data
    np.testing.assert_allclose(out[..., 3:], H @ w + b, atol=1e-12)


def test_single_joint_spatial(rng):
    store = _block(rng, cfg=MS_SC)
    H = rng.standard_normal((4, 1, 8))
    out = ms_sc_forward(Tensor(H), store, "b").data
    for b in range(2):
        pw = H @ store[f"b.branch{b}.pw"].data + store[f"b.branch{b}.pw_bias"].data
        centre = store[f"b.branch{b}.w"].data[2]
        expect = np.maximum(pw @ centre + store[f"b.branch{b}.bias"].data, 0)
        np.testing.assert_allclose(out[..., 2 * b:2 * b + 2], expect, atol=1e-12)


def test_constant_across_joints(rng):
    store = _block(rng, cfg=MS_SC)
    H = np.broadcast_to(rng.standard_normal((3, 1, 8)), (3, 11, 8)).copy()
    out = ms_sc_forward(Tensor(H), store, "b").data
    np.testing.assert_allclose(out[:, 4:7, :4], np.broadcast_to(out[:, 4:5, :4], (3, 3, 4)),
                               atol=1e-12)


def test_zeroing_a_branch_zeroes_its_quarter(rng):
    store = _block(rng, 8, 16)
    H = rng.standard_normal((5, 4, 8))
    base = ms_tc_forward(Tensor(H), store, "b").data
    for b in range(4):
        saved = {k: store[k].data.copy() for k in store.filter(f"b.branch{b}.")}
        for k in saved:
            store[k].data = np.zeros_like(saved[k])
        out = ms_tc_forward(Tensor(H), store, "b").data
        sl = slice(4 * b, 4 * b + 4)
        assert not out[..., sl].any()
        rest = np.delete(np.arange(16), np.arange(4 * b, 4 * b + 4))
        np.testing.assert_array_equal(out[..., rest], base[..., rest])
        for k, v in saved.items():
            store[k].data = v


@pytest.mark.parametrize("T,N", [(1, 1), (3, 2), (17, 25)])
def test_shape_preserved(rng, T, N):
    for cfg in (MS_TC, MS_SC):
        store = _block(rng, 4, 12, cfg)
        assert multiscale_forward(Tensor(np.ones((T, N, 4))), store, "b", cfg).shape == (T, N, 12)


def test_config_errors(rng):
    with pytest.raises(ConfigError):
        branch_width(10)
    with pytest.raises(ConfigError):
        MultiScaleConfig(kernel=4)
    with pytest.raises(ConfigError):
        MultiScaleConfig(axis="channel")
    with pytest.raises(ConfigError):
        ms_tc_forward(Tensor(np.ones((2, 2, 8))), _block(rng), "b", MS_SC)


@pytest.mark.parametrize("check", multiscale_checks(seed=5), ids=lambda c: c.name)
def test_block_gradients(check):
    assert check.passed, check.line()
