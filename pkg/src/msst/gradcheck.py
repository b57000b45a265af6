"""Central finite-difference oracle for tape gradients."""
import numpy as np

from .errors import OracleInvalidError
from .tensor import Tape, Tensor


def _eval(f, tensors):
    out = f(*tensors)
    val = out.data if isinstance(out, Tensor) else np.asarray(out)
    if val.size != 1:
        raise ValueError(f"gradient check needs a scalar function, got shape {val.shape}")
    return float(val)


def finite_difference_check(f, x, h=1e-5, max_coords=None, rng=None, details=False):
    """Compare tape gradients of ``f`` against central differences.

    ``x`` is a Tensor or a sequence of them; ``f`` is called as ``f(*x)`` and
    must return a scalar Tensor (it may also ignore its arguments and close
    over the same tensors). With ``max_coords`` only
    that many randomly chosen coordinates per tensor are probed.

    Returns the max relative error ``|a - b| / max(|a|, |b|, 1e-8)``; with
    ``details=True`` also returns a list of per-tensor maxima.
    """
    tensors = [x] if isinstance(x, Tensor) else list(x)
    rng = np.random.default_rng(0) if rng is None else rng
    saved = [t.requires_grad for t in tensors]
    for t in tensors:
        t.data = np.ascontiguousarray(t.data)
        t.requires_grad = True
        t.grad = None

    try:
        with Tape() as tape:
            out = f(*tensors)
        first = float(out.data)
        if _eval(f, tensors) != first:
            raise OracleInvalidError("function returned different values on identical inputs")
        tape.backward(out)

        per_tensor = []
        worst = 0.0
        for t in tensors:
            analytic = np.zeros(t.shape) if t.grad is None else t.grad
            flat = t.data.reshape(-1)
            n = flat.size
            if max_coords is not None and n > max_coords:
                coords = rng.choice(n, size=max_coords, replace=False)
            else:
                coords = range(n)
            err = 0.0
            for i in coords:
                orig = flat[i]
                flat[i] = orig + h
                fp = _eval(f, tensors)
                flat[i] = orig - h
                fm = _eval(f, tensors)
                flat[i] = orig
                numeric = (fp - fm) / (2.0 * h)
                a = analytic.reshape(-1)[i]
                denom = max(abs(a), abs(numeric), 1e-8)
                err = max(err, abs(a - numeric) / denom)
            per_tensor.append(err)
            worst = max(worst, err)
    finally:
        for t, flag in zip(tensors, saved):
            t.requires_grad = flag
    if details:
        return worst, per_tensor
    return worst
