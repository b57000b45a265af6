"""Input modalities: joint/bone positions, their motions, and temporal resizing."""
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError, DataError
from .graph import matrix_power

MODALITIES = ("joint", "bone", "joint-motion", "bone-motion")


@dataclass
class SkeletonSequence:
    """One labelled sample; ``data`` is a ``(T, N, C)`` float array."""

    data: np.ndarray
    label: int = 0
    id: object = None

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 3:
            raise DataError(f"skeleton data must be (T, N, C), got shape {self.data.shape}")

    @property
    def frames(self):
        return self.data.shape[0]

    @property
    def joints(self):
        return self.data.shape[1]

    @property
    def channels(self):
        return self.data.shape[2]


def _check_joints(seq, graph):
    if seq.joints != graph.num_joints:
        raise DataError(f"sequence has {seq.joints} joints but graph {graph.name!r} "
                        f"has {graph.num_joints}")


def generalized_bone(seq, k, graph):
    """Per frame ``X_j - X_{a_k(j)}``: subtract the k-th ancestor of each joint.

    This is ``(I - P^k)`` applied over the joint axis with ``P`` read as
    ``P[i, j] = 1`` when ``i`` is the source of ``j``. Joints with no k-th
    ancestor are left unchanged, so ``k = K`` returns the input.
    """
    _check_joints(seq, graph)
    K = graph.nilpotency_index()
    if not 1 <= k <= K:
        raise ConfigError(f"bone power k must lie in [1, {K}] for graph {graph.name!r}, got {k}")
    Pk = matrix_power(graph.source_target, k)
    out = seq.data - np.einsum("ij,tic->tjc", Pk, seq.data)
    return replace(seq, data=out)


def motion_diff(seq):
    """Forward difference over time; the final frame is zero."""
    if seq.frames < 2:
        raise DataError(f"motion needs at least 2 frames, got {seq.frames}")
    out = np.zeros_like(seq.data)
    out[:-1] = seq.data[1:] - seq.data[:-1]
    return replace(seq, data=out)


def resize_temporal(seq, target_T=64):
    """Linear interpolation onto ``target_T`` evenly spaced points over ``[0, T-1]``."""
    T = seq.frames
    if T < 2:
        raise DataError(f"resizing needs at least 2 frames, got {T}")
    if target_T < 2:
        raise ConfigError(f"target frame count must be >= 2, got {target_T}")
    if T == target_T:
        return replace(seq, data=seq.data.copy())
    pos = np.linspace(0.0, T - 1, target_T)
    lo = np.minimum(np.floor(pos).astype(np.int64), T - 2)
    frac = (pos - lo)[:, None, None]
    out = seq.data[lo] * (1.0 - frac) + seq.data[lo + 1] * frac
    return replace(seq, data=out)


def stream_tag(modality, k, graph):
    """Score-file tag: J, B, JM, BM for k=1 bones, ``B{k}``/``B{k}M`` otherwise."""
    K = graph.nilpotency_index()
    motion = modality.endswith("-motion")
    if modality.startswith("joint") or k == K:
        base = "J"
    elif k == 1:
        base = "B"
    else:
        base = f"B{k}"
    return base + ("M" if motion else "")


def apply_modality(seq, modality, graph, k=1):
    """Derive one modality stream; motion is taken after the bone transform."""
    if modality not in MODALITIES:
        raise ConfigError(f"unknown modality {modality!r}; expected one of {MODALITIES}")
    if modality.startswith("joint"):
        out = replace(seq, data=seq.data.copy())
    else:
        out = generalized_bone(seq, k, graph)
    if modality.endswith("-motion"):
        out = motion_diff(out)
    return out


def prepare(seqs, modality, graph, k=1, frames=64):
    """Resize then transform a list of sequences; returns ``(X, labels)`` arrays."""
    if not seqs:
        raise DataError("no sequences to prepare")
    out = [apply_modality(resize_temporal(s, frames), modality, graph, k) for s in seqs]
    X = np.stack([s.data for s in out])
    y = np.array([s.label for s in out], dtype=np.int64)
    return X, y
