"""Categorical cross-entropy, Adam, and the training loop.

Defaults follow the training setup used throughout: batch size 32,
100 epochs, learning rate 0.001, Adam with the canonical
beta1=0.9 / beta2=0.999 / eps=1e-8.
"""

from dataclasses import dataclass, field

import numpy as np

from . import data as data_mod
from . import layers, tensor
from .errors import ArgumentError, DimensionError, NumericError

LOG_CLAMP = 1e-12


@dataclass
class TrainConfig:
    batch_size: int = 32
    epochs: int = 100
    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    seed: int = 0
    max_rotation_deg: float = 15.0
    augment: bool = True


@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0


@dataclass
class TrainReport:
    rows: list = field(default_factory=list)  # (epoch, tr_loss, tr_acc, te_loss, te_acc)

    HEADER = "epoch,train_loss,train_acc,test_loss,test_acc"

    def to_csv(self):
        lines = [self.HEADER]
        for epoch, tl, ta, vl, va in self.rows:
            lines.append(f"{epoch},{tl:.9g},{ta:.9g},{vl:.9g},{va:.9g}")
        return "\n".join(lines) + "\n"


def _check_one_hot(labels):
    labels = np.asarray(labels)
    if labels.ndim != 2:
        raise ArgumentError(f"labels must be 2-D one-hot, got shape {labels.shape}")
    ok = np.all((labels == 0) | (labels == 1)) and np.all(labels.sum(axis=1) == 1)
    if not ok:
        raise ArgumentError("labels are not one-hot rows")
    return labels


def cross_entropy(probs, labels):
    """Mean categorical cross-entropy; probabilities clamped at 1e-12
    inside the log. Returns (loss, dL/dprobs)."""
    probs = np.asarray(probs)
    labels = _check_one_hot(labels)
    if probs.shape != labels.shape:
        raise DimensionError(f"probs {probs.shape} vs labels {labels.shape}")
    n = probs.shape[0]
    clamped = np.maximum(probs, LOG_CLAMP)
    loss = -(labels * np.log(clamped)).sum() / n
    grad = np.where(probs > LOG_CLAMP, -labels / clamped / n, 0.0)
    return float(loss), grad.astype(probs.dtype)


def softmax_cross_entropy(logits, labels):
    """Fused softmax + cross-entropy. Returns (loss, dL/dlogits, probs);
    the gradient is the exact (p - y)/n form."""
    logits = np.asarray(logits)
    labels = _check_one_hot(labels)
    probs = layers.softmax(logits)
    n = logits.shape[0]
    loss = -(labels * np.log(np.maximum(probs, LOG_CLAMP))).sum() / n
    grad = (probs - labels) / n
    return float(loss), grad.astype(logits.dtype), probs


def adam_step(params, grads, state: AdamState, cfg: TrainConfig):
    """One Adam update over a dict of named tensors. Parameters are
    updated in place; returns (params, state)."""
    state.t += 1
    t = state.t
    b1, b2 = cfg.beta1, cfg.beta2
    for name in sorted(params):
        g = grads[name]
        p = params[name]
        if g.shape != p.shape:
            raise DimensionError(
                f"adam: grad shape {g.shape} != param shape {p.shape} for {name}")
        if name not in state.m:
            state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        m = state.m[name] = b1 * state.m[name] + (1 - b1) * g
        v = state.v[name] = b2 * state.v[name] + (1 - b2) * g * g
        m_hat = m / (1 - b1 ** t)
        v_hat = v / (1 - b2 ** t)
        p -= (cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.epsilon)).astype(p.dtype)
    return params, state


def evaluate(model, dataset, subset, cfg: TrainConfig, image_size=None):
    """Mean loss and accuracy over one unaugmented pass."""
    image_size = image_size or model.config.input_shape[1]
    total_loss = 0.0
    correct = 0
    n_items = 0
    for images, labels in data_mod.batches(
            dataset, subset, batch_size=cfg.batch_size, seed=cfg.seed,
            shuffle=False, augment=False, image_size=image_size):
        probs, _ = model.forward(images, mode="eval")
        loss, _ = cross_entropy(probs, labels)
        b = images.shape[0]
        total_loss += loss * b
        correct += int((probs.argmax(axis=1) == labels.argmax(axis=1)).sum())
        n_items += b
    if n_items == 0:
        raise ArgumentError(f"evaluate: subset {subset!r} is empty")
    return total_loss / n_items, correct / n_items


def train(model, dataset, cfg: TrainConfig, hooks=None):
    """Full training loop. Records per-epoch train/test loss and accuracy;
    aborts with a NumericError naming the epoch/batch if the loss goes
    non-finite. Shuffling and augmentation draws depend only on cfg.seed."""
    if not dataset.items:
        raise ArgumentError("train: dataset is empty")
    image_size = model.config.input_shape[1]
    state = AdamState()
    report = TrainReport()
    for epoch in range(1, cfg.epochs + 1):
        epoch_loss = 0.0
        correct = 0
        n_items = 0
        batch_iter = data_mod.batches(
            dataset, "train", batch_size=cfg.batch_size, seed=cfg.seed,
            epoch=epoch, shuffle=True, augment=cfg.augment,
            max_rotation_deg=cfg.max_rotation_deg, image_size=image_size)
        for b_idx, (images, labels) in enumerate(batch_iter):
            probs, caches = model.forward(images, mode="train")
            loss, grad_probs = cross_entropy(probs, labels)
            if not np.isfinite(loss):
                raise NumericError(
                    f"non-finite loss at epoch {epoch}, batch {b_idx}")
            grads = model.backward(caches, grad_probs)
            adam_step(model.all_params(), grads, state, cfg)
            b = images.shape[0]
            epoch_loss += loss * b
            correct += int((probs.argmax(axis=1) == labels.argmax(axis=1)).sum())
            n_items += b
        train_loss = epoch_loss / n_items
        train_acc = correct / n_items
        test_loss, test_acc = evaluate(model, dataset, "test", cfg,
                                       image_size=image_size)
        row = (epoch, train_loss, train_acc, test_loss, test_acc)
        report.rows.append(row)
        if hooks:
            for hook in hooks:
                hook(epoch, row)
    return report, state
