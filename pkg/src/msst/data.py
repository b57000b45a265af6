"""Dataset files (JSON Lines) and the seeded synthetic gesture generator.

One sample per line::

    {"label": 2, "frames": [[[x, y, z], ...], ...]}        # T x N x C

Channels follow the (x, y[, z]) convention. An optional ``"id"`` names the
sample; otherwise its zero-based line index is used.
"""
import json
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError
from .graph import build_graph
from .modality import SkeletonSequence


def load_dataset(path):
    seqs = []
    shape_nc = None
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                label = obj["label"]
                frames = np.asarray(obj["frames"], dtype=np.float64)
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise DataError(f"{path}:{lineno}: malformed sample ({exc})") from exc
            if not isinstance(label, int) or isinstance(label, bool) or label < 0:
                raise DataError(f"{path}:{lineno}: label must be a non-negative int")
            if frames.ndim != 3 or frames.shape[0] < 1:
                raise DataError(f"{path}:{lineno}: frames must be a T x N x C array, "
                                f"got shape {frames.shape}")
            if shape_nc is None:
                shape_nc = frames.shape[1:]
            elif frames.shape[1:] != shape_nc:
                raise DataError(f"{path}:{lineno}: (N, C)={frames.shape[1:]} differs from "
                                f"earlier samples {shape_nc}")
            sid = obj.get("id", len(seqs))
            seqs.append(SkeletonSequence(frames, label=label, id=sid))
    return seqs


def save_dataset(seqs, path):
    # json writes floats with repr(), the shortest string that round-trips exactly
    with open(path, "w") as fh:
        for s in seqs:
            obj = {"label": int(s.label), "frames": s.data.tolist()}
            if s.id is not None:
                obj["id"] = s.id
            fh.write(json.dumps(obj) + "\n")


@dataclass(frozen=True)
class SyntheticSpec:
    num_classes: int = 4
    samples_per_class: int = 50
    num_joints: int = 10
    channels: int = 3
    frames: tuple = (48, 80)
    noise: float = 0.1
    seed: int = 0
    template_seed: int = 1234

    def __post_init__(self):
        if self.num_classes < 2:
            raise ConfigError("synthetic data needs at least 2 classes")
        if self.channels < 2 or self.num_joints < 1:
            raise ConfigError("need C >= 2 channels and at least one joint")
        lo, hi = self.frames
        if not 2 <= lo <= hi:
            raise ConfigError(f"frame range must satisfy 2 <= min <= max, got {self.frames}")


def class_templates(spec):
    """Per class, joint and channel: (rest pose, amplitude, frequency, phase).

    Classes differ in oscillation frequency (cycles per sequence) and phase;
    the rest pose is shared so that position alone cannot separate classes.
    """
    rng = np.random.default_rng(spec.template_seed)
    K, N, C = spec.num_classes, spec.num_joints, spec.channels
    rest = rng.normal(0.0, 1.0, (N, C))
    amp = rng.uniform(0.3, 1.0, (K, N, C))
    freq = (1.0 + np.arange(K))[:, None, None] + rng.uniform(0.0, 0.5, (K, N, 1))
    phase = rng.uniform(0.0, 2 * np.pi, (K, N, C))
    return rest, amp, freq, phase


def generate_synthetic(spec):
    """Seeded list of :class:`SkeletonSequence`, classes interleaved."""
    rest, amp, freq, phase = class_templates(spec)
    rng = np.random.default_rng(spec.seed)
    lo, hi = spec.frames
    seqs = []
    for i in range(spec.samples_per_class):
        for c in range(spec.num_classes):
            T = int(rng.integers(lo, hi + 1))
            tau = np.linspace(0.0, 1.0, T)[:, None, None]
            x = rest + amp[c] * np.sin(2 * np.pi * freq[c] * tau + phase[c])
            x = x + spec.noise * rng.standard_normal(x.shape)
            seqs.append(SkeletonSequence(x, label=c, id=len(seqs)))
    return seqs


def synthetic_graph(num_joints):
    """Binary-tree skeleton used with synthetic data: ``parent(j) = (j - 1) // 2``."""
    return build_graph([-1] + [(j - 1) // 2 for j in range(1, num_joints)],
                       name=f"tree{num_joints}")
