"""The numba and numpy kernel tables must agree."""
import numpy as np
import pytest

from msst import _kernels as K

pytestmark = pytest.mark.skipif(not K.HAS_NUMBA, reason="numba not installed")


def _both(name, *args):
    return K._NUMPY[name](*args), K._NUMBA[name](*args)


@pytest.mark.parametrize("dilation,ksize", [(1, 5), (2, 5), (1, 3), (3, 1)])
def test_conv_forward_backward(rng, dilation, ksize):
    x = rng.standard_normal((7, 11, 6))
    w = rng.standard_normal((ksize, 6, 4))
    g = rng.standard_normal((7, 11, 4))
    a, b = _both("conv1d_forward", x, w, dilation)
    np.testing.assert_allclose(a, b, atol=1e-12)
    (gx_a, gw_a), (gx_b, gw_b) = _both("conv1d_backward", x, w, dilation, g)
    np.testing.assert_allclose(gx_a, gx_b, atol=1e-12)
    np.testing.assert_allclose(gw_a, gw_b, atol=1e-12)


def test_maxpool_forward_backward(rng):
    x = rng.standard_normal((5, 9, 3))
    x[0, 2:5, 0] = 1.0  # ties resolve to the first maximum in both tables
    (oa, ia), (ob, ib) = _both("maxpool1d_forward", x, 3)
    np.testing.assert_array_equal(oa, ob)
    np.testing.assert_array_equal(ia, ib)
    g = rng.standard_normal(oa.shape)
    np.testing.assert_allclose(*_both("maxpool1d_backward", ia, g), atol=1e-15)


def test_softmax_backward(rng):
    y = K.softmax_forward_np(rng.standard_normal((6, 5)))
    g = rng.standard_normal((6, 5))
    np.testing.assert_allclose(*_both("softmax_backward", y, g), atol=1e-14)


def test_layernorm(rng):
    x = rng.standard_normal((8, 7))
    gain, bias = rng.standard_normal(7), rng.standard_normal(7)
    fa, fb = _both("layernorm_forward", x, gain, bias, 1e-5)
    for u, v in zip(fa, fb):
        np.testing.assert_allclose(u, v, atol=1e-12)
    g = rng.standard_normal((8, 7))
    ba = K._NUMPY["layernorm_backward"](g, fa[1], fa[2], gain)
    bb = K._NUMBA["layernorm_backward"](g, fb[1], fb[2], gain)
    for u, v in zip(ba, bb):
        np.testing.assert_allclose(u, v, atol=1e-12)


def test_set_backend_round_trip():
    prev = K.set_backend("numpy")
    try:
        assert K.get_backend() == "numpy"
        with pytest.raises(ValueError):
            K.set_backend("cuda")
    finally:
        K.set_backend(prev)
    assert K.get_backend() == prev


def test_env_flag_selects_numpy(tmp_path):
    import subprocess
    import sys

    code = "from msst import _kernels; print(_kernels.get_backend())"
    env = {"MSST_DISABLE_NUMBA": "1", "PATH": "/usr/bin:/bin"}
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True,
                         check=True)
    assert out.stdout.strip() == "numpy"
