"""Loss, Nesterov SGD, warmup + cosine schedule and the epoch loop."""
import dataclasses
import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import ops
from .errors import ConfigError, DimensionError, NonFiniteError
from .network import forward
from .params import save_checkpoint
from .tensor import Tape

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    epochs: int = 120
    warmup_epochs: int = 5
    batch_size: int = 64
    lr_max: float = 0.1
    lr_min: float = 0.0001
    momentum: float = 0.9
    weight_decay: float = 0.0004
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be positive")
        if not 0 <= self.warmup_epochs < self.epochs:
            raise ConfigError(f"warmup_epochs ({self.warmup_epochs}) must be < epochs "
                              f"({self.epochs})")
        if not 0 < self.lr_min < self.lr_max:
            raise ConfigError(f"need 0 < lr_min < lr_max, got {self.lr_min}, {self.lr_max}")
        if self.momentum < 0 or self.weight_decay < 0:
            raise ConfigError("momentum and weight_decay must be non-negative")

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in dataclasses.fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})

    def to_dict(self):
        return dataclasses.asdict(self)


@dataclass
class TrainState:
    epoch: int = 0
    step: int = 0
    velocity: dict = field(default_factory=dict)
    best_val_acc: float = -1.0


def cross_entropy(logits, labels):
    """Mean softmax cross-entropy; the default (and only built-in) training loss."""
    return ops.softmax_cross_entropy(logits, labels)


def lr_at(epoch, cfg):
    """Linear warmup to ``lr_max``, then cosine decay reaching ``lr_min`` at the last epoch."""
    if not 0 <= epoch < cfg.epochs:
        raise ValueError(f"epoch {epoch} outside [0, {cfg.epochs})")
    if epoch < cfg.warmup_epochs:
        return cfg.lr_max * ((epoch + 1) / cfg.warmup_epochs)
    span = cfg.epochs - cfg.warmup_epochs - 1
    if span <= 0:
        return cfg.lr_max
    frac = (epoch - cfg.warmup_epochs) / span
    return cfg.lr_min + 0.5 * (cfg.lr_max - cfg.lr_min) * (1.0 + math.cos(math.pi * frac))


def sgd_step(store, state, lr, cfg):
    """One Nesterov momentum update with L2 weight decay folded into the gradient.

    ``g = grad + wd * p``; ``v = mu * v + g``; ``p -= lr * (g + mu * v)``.
    Layer-norm affine parameters and the fusion rate are not decayed.
    """
    for name, p in store.items():
        g = np.zeros_like(p.data) if p.grad is None else p.grad
        if g.shape != p.shape:
            raise DimensionError(f"{name}: gradient shape {g.shape} != parameter {p.shape}")
        if cfg.weight_decay and store.decays(name):
            g = g + cfg.weight_decay * p.data
        v = state.velocity.get(name)
        v = g.copy() if v is None else cfg.momentum * v + g
        state.velocity[name] = v
        p.data = p.data - lr * (g + cfg.momentum * v)
    state.step += 1


def _softmax(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def predict_scores(model_cfg, store, X, batch_size=64):
    """Softmax scores ``(samples, classes)`` with noise disabled."""
    out = []
    for i in range(0, len(X), batch_size):
        logits, _ = forward(X[i:i + batch_size], model_cfg, store, training=False)
        out.append(_softmax(logits.data))
    if not out:
        return np.zeros((0, model_cfg.num_classes))
    return np.concatenate(out)


def evaluate(model_cfg, store, X, y, batch_size=64):
    """Top-1 accuracy and the per-class softmax score matrix."""
    y = np.asarray(y)
    if len(y) and y.max() >= model_cfg.num_classes:
        raise DimensionError(f"label {y.max()} outside the model's {model_cfg.num_classes} classes")
    scores = predict_scores(model_cfg, store, X, batch_size)
    acc = float(np.mean(scores.argmax(axis=1) == y)) if len(y) else 0.0
    return acc, scores


@dataclass
class TrainResult:
    metrics: list
    best_state: dict
    final_state: dict
    state: TrainState


def train(model_cfg, store, X, y, cfg, X_val=None, y_val=None, loss_fn=cross_entropy,
          log_path=None, checkpoint_dir=None):
    """Run the full epoch loop in place on ``store``.

    Metrics for every epoch are appended to ``log_path`` (JSON Lines) as
    ``{"epoch", "lr", "train_loss", "train_acc", "val_acc"}``; ``train_acc`` is
    the running accuracy of the noisy training forward passes. The parameters
    with the best validation accuracy (training accuracy if no validation set)
    and the final ones are written to ``best.msst``/``final.msst``.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if len(X) == 0:
        raise ValueError("cannot train on an empty dataset")
    shuffle_seq, noise_seq = np.random.SeedSequence(cfg.seed).spawn(2)
    shuffle_rng = np.random.default_rng(shuffle_seq)
    noise_rng = np.random.default_rng(noise_seq)
    state = TrainState()
    metrics = []
    best_state = store.state()
    log_fh = open(log_path, "w") if log_path else None
    try:
        for epoch in range(cfg.epochs):
            state.epoch = epoch
            lr = lr_at(epoch, cfg)
            order = shuffle_rng.permutation(len(X))
            total_loss = 0.0
            correct = 0
            for start in range(0, len(X), cfg.batch_size):
                idx = order[start:start + cfg.batch_size]
                store.zero_grad()
                with Tape() as tape:
                    logits, _ = forward(X[idx], model_cfg, store, training=True, rng=noise_rng)
                    loss = loss_fn(logits, y[idx])
                value = loss.item()
                if not math.isfinite(value):
                    raise NonFiniteError(f"loss became {value} at epoch {epoch}, step "
                                         f"{state.step} (lr={lr:.6g})")
                tape.backward(loss)
                for name, p in store.items():
                    if p.grad is not None and not np.all(np.isfinite(p.grad)):
                        raise NonFiniteError(f"non-finite gradient in {name} at epoch {epoch}, "
                                             f"step {state.step}")
                sgd_step(store, state, lr, cfg)
                total_loss += value * len(idx)
                correct += int(np.sum(logits.data.argmax(axis=1) == y[idx]))
            train_acc = correct / len(X)
            val_acc = None
            if X_val is not None and len(X_val):
                val_acc, _ = evaluate(model_cfg, store, X_val, y_val, cfg.batch_size)
            row = {"epoch": epoch, "lr": lr, "train_loss": total_loss / len(X),
                   "train_acc": train_acc, "val_acc": val_acc}
            metrics.append(row)
            if log_fh:
                log_fh.write(json.dumps(row) + "\n")
                log_fh.flush()
            score = train_acc if val_acc is None else val_acc
            if score > state.best_val_acc:
                state.best_val_acc = score
                best_state = store.state()
            log.info("epoch %d lr=%.5f loss=%.4f train_acc=%.3f val_acc=%s", epoch, lr,
                     row["train_loss"], train_acc, val_acc)
    finally:
        if log_fh:
            log_fh.close()
    final_state = store.state()
    if checkpoint_dir is not None:
        save_checkpoint(store, f"{checkpoint_dir}/final.msst")
        store.load_state(best_state)
        save_checkpoint(store, f"{checkpoint_dir}/best.msst")
        store.load_state(final_state)
    return TrainResult(metrics, best_state, final_state, state)
