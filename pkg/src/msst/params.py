"""Named parameter storage and the binary checkpoint format.

Checkpoint layout (all integers u32 little-endian)::

    b"MSST" | version | count
    per parameter: name_len | utf-8 name | rank | dims... | float32 LE values
"""
import struct

import numpy as np

from .errors import DataError
from .tensor import Tensor

MAGIC = b"MSST"
VERSION = 1


class ParameterStore:
    """Ordered mapping from canonical name to a trainable Tensor."""

    def __init__(self):
        self._params = {}
        self._no_decay = set()

    def add(self, name, value, decay=True):
        if name in self._params:
            raise KeyError(f"duplicate parameter name {name!r}")
        self._params[name] = Tensor(np.array(value, dtype=np.float64), requires_grad=True,
                                    name=name)
        if not decay:
            self._no_decay.add(name)
        return self._params[name]

    def __getitem__(self, name):
        return self._params[name]

    def __contains__(self, name):
        return name in self._params

    def __iter__(self):
        return iter(self._params)

    def __len__(self):
        return len(self._params)

    def items(self):
        return self._params.items()

    def names(self):
        return list(self._params)

    def decays(self, name):
        return name not in self._no_decay

    def num_params(self):
        return sum(t.size for t in self._params.values())

    def zero_grad(self):
        for t in self._params.values():
            t.grad = None

    def state(self):
        return {k: t.data.copy() for k, t in self._params.items()}

    def load_state(self, state):
        missing = set(self._params) - set(state)
        extra = set(state) - set(self._params)
        if missing or extra:
            raise DataError(f"parameter names differ: missing={sorted(missing)[:5]}, "
                            f"unexpected={sorted(extra)[:5]}")
        for k, t in self._params.items():
            v = np.asarray(state[k], dtype=np.float64)
            if v.shape != t.shape:
                raise DataError(f"{k}: shape {v.shape} does not match {t.shape}")
            t.data = v.copy()

    def filter(self, prefix):
        return [k for k in self._params if k.startswith(prefix)]


def save_checkpoint(store, path):
    chunks = [MAGIC, struct.pack("<II", VERSION, len(store))]
    for name, t in store.items():
        raw = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(raw)))
        chunks.append(raw)
        chunks.append(struct.pack("<I", t.ndim))
        chunks.append(struct.pack(f"<{t.ndim}I", *t.shape))
        chunks.append(np.ascontiguousarray(t.data, dtype="<f4").tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(chunks))


def read_checkpoint(path):
    """Return an ordered ``{name: float64 array}`` dict from a checkpoint file."""
    with open(path, "rb") as fh:
        buf = fh.read()
    if buf[:4] != MAGIC:
        raise DataError(f"{path}: not an MSST checkpoint (bad magic)")
    pos = 4

    def take(fmt):
        nonlocal pos
        size = struct.calcsize(fmt)
        if pos + size > len(buf):
            raise DataError(f"{path}: truncated checkpoint")
        vals = struct.unpack_from(fmt, buf, pos)
        pos += size
        return vals

    version, count = take("<II")
    if version != VERSION:
        raise DataError(f"{path}: unsupported checkpoint version {version}")
    out = {}
    for _ in range(count):
        (n,) = take("<I")
        name = buf[pos:pos + n].decode("utf-8")
        pos += n
        (rank,) = take("<I")
        dims = take(f"<{rank}I") if rank else ()
        size = int(np.prod(dims)) if rank else 1
        end = pos + 4 * size
        if end > len(buf):
            raise DataError(f"{path}: truncated values for {name}")
        out[name] = np.frombuffer(buf[pos:end], dtype="<f4").astype(np.float64).reshape(dims)
        pos = end
    return out
