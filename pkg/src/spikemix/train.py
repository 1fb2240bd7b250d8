"""Surrogate-gradient training loop: cross-entropy on time-averaged logits,
Adam with decoupled weight decay, cosine learning-rate schedule, top-1
evaluation, and per-epoch JSONL metrics."""

import json
import math
import time
from dataclasses import dataclass

import numpy as np

from .data import Dataset, batch_iter
from .model import Spikformer
from .runtime import tune_allocator
from .tensor import Tensor, custom_op, no_grad

__all__ = [
    "TrainConfig",
    "AdamW",
    "cross_entropy_time_avg",
    "cosine_lr",
    "train_epoch",
    "evaluate_top1",
    "fit",
]


@dataclass
class TrainConfig:
    epochs: int = 20
    batch_size: int = 16
    lr: float = 5e-4
    weight_decay: float = 0.01
    seed: int = 0
    eval_every: int = 1

    def __post_init__(self):
        for name in ("epochs", "batch_size", "lr"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be nonnegative")


def cross_entropy_time_avg(logits: Tensor, labels) -> Tensor:
    """Mean over the batch of -log softmax(logits)[label], max-stabilized."""
    labels = np.asarray(labels)
    b, k = logits.shape
    if labels.min() < 0 or labels.max() >= k:
        raise ValueError(f"label out of range [0, {k}) in {labels}")
    z = logits.data
    shifted = z - z.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    softmax = exp / exp.sum(axis=1, keepdims=True)
    picked = shifted[np.arange(b), labels]
    loss = float(np.mean(np.log(exp.sum(axis=1)) - picked))

    def grad(g):
        onehot = np.zeros_like(z)
        onehot[np.arange(b), labels] = 1.0
        return (g * (softmax - onehot) / b).astype(z.dtype)

    return custom_op("cross_entropy", np.asarray(loss, dtype=z.dtype), [logits], [grad])


def cosine_lr(step, total_steps, lr_max, lr_min=0.0) -> float:
    if not 0 <= step <= total_steps:
        raise ValueError(f"step {step} outside [0, {total_steps}]")
    return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + math.cos(math.pi * step / total_steps))


class AdamW:
    """Adam with decoupled weight decay (applied directly to the weights,
    outside the adaptive term)."""

    def __init__(self, named_params, weight_decay=0.01, beta1=0.9, beta2=0.999, eps=1e-8):
        self.entries = [(name, p) for name, p in named_params if p.trainable]
        self.weight_decay = weight_decay
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self._m = [np.zeros_like(p.data) for _, p in self.entries]
        self._v = [np.zeros_like(p.data) for _, p in self.entries]

    def census(self) -> dict:
        """Parameter names and sizes as seen by the optimizer."""
        return {name: p.size for name, p in self.entries}

    def zero_grad(self):
        for _, p in self.entries:
            p.zero_grad()

    def step(self, lr: float):
        self.step_count += 1
        bc1 = 1.0 - self.beta1**self.step_count
        bc2 = 1.0 - self.beta2**self.step_count
        for (name, p), m, v in zip(self.entries, self._m, self._v):
            g = p.grad.astype(np.float64)
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            update = (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            theta = p.data.astype(np.float64)
            theta -= lr * update
            if self.weight_decay:
                theta -= lr * self.weight_decay * p.data.astype(np.float64)
            p.data = theta.astype(p.dtype)


def train_epoch(model: Spikformer, optimizer: AdamW, ds: Dataset, cfg: TrainConfig,
                epoch: int, total_steps: int, step_offset: int):
    """One pass over the data with full backprop through time per batch."""
    model.train()
    losses, correct, seen = [], 0, 0
    start = time.perf_counter()
    n_batches = 0
    lr = cfg.lr
    for batch in batch_iter(ds, cfg.batch_size, model.cfg.timesteps,
                            shuffle_seed=cfg.seed * 100003 + epoch):
        logits = model.forward(batch.images)
        loss = cross_entropy_time_avg(logits, batch.labels)
        optimizer.zero_grad()
        loss.backward()
        lr = cosine_lr(step_offset + n_batches, total_steps, cfg.lr)
        optimizer.step(lr)
        losses.append(loss.item())
        correct += int((logits.data.argmax(axis=1) == batch.labels).sum())
        seen += len(batch.labels)
        n_batches += 1
    elapsed_ms = (time.perf_counter() - start) * 1000.0
    return {
        "loss": float(np.mean(losses)),
        "train_acc": correct / seen,
        "lr": lr,
        "ms_per_batch": elapsed_ms / max(n_batches, 1),
        "batches": n_batches,
    }


def evaluate_top1(model: Spikformer, ds: Dataset, batch_size=64) -> float:
    """Top-1 accuracy in eval mode (running BN stats, no tape)."""
    model.eval()
    correct, seen = 0, 0
    with no_grad():
        for batch in batch_iter(ds, batch_size, model.cfg.timesteps):
            logits = model.forward(batch.images)
            correct += int((logits.data.argmax(axis=1) == batch.labels).sum())
            seen += len(batch.labels)
    return correct / seen if seen else 0.0


def fit(model: Spikformer, train_ds: Dataset, eval_ds, cfg: TrainConfig,
        metrics_path=None, target_acc=None, min_epochs=0):
    """Train for cfg.epochs (early-stopping at target_acc once min_epochs have
    run). Returns the per-epoch metric dicts; optionally appends them as JSON
    lines to metrics_path."""
    tune_allocator()
    optimizer = AdamW(model.named_parameters(), weight_decay=cfg.weight_decay)
    steps_per_epoch = math.ceil(len(train_ds) / cfg.batch_size)
    total_steps = steps_per_epoch * cfg.epochs
    history = []
    sink = open(metrics_path, "w") if metrics_path else None
    try:
        for epoch in range(1, cfg.epochs + 1):
            stats = train_epoch(
                model, optimizer, train_ds, cfg, epoch, total_steps,
                step_offset=(epoch - 1) * steps_per_epoch,
            )
            eval_acc = None
            if eval_ds is not None and epoch % cfg.eval_every == 0:
                eval_acc = evaluate_top1(model, eval_ds)
            record = {
                "epoch": epoch,
                "loss": stats["loss"],
                "train_acc": stats["train_acc"],
                "eval_acc": eval_acc,
                "lr": stats["lr"],
                "ms_per_batch": stats["ms_per_batch"],
            }
            history.append(record)
            if sink:
                sink.write(json.dumps(record) + "\n")
                sink.flush()
            if (
                target_acc is not None
                and eval_acc is not None
                and eval_acc >= target_acc
                and epoch >= min_epochs
            ):
                break
    finally:
        if sink:
            sink.close()
    return history
