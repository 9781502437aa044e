"""Trimmed-MAE training loop, L2 regularization, optimizers, model selection.

The loss on a 9-output sample is the mean absolute difference against the
unit-sum targets.  Because the contest scores the *median* error, each
mini-batch drops its worst 20% and best 1% of samples (floor arithmetic on
both tails) before averaging.  Everything is deterministic under a fixed seed
and a single thread.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import (
    AllDropped,
    DivergenceDetected,
    EmptyBatch,
    EmptyCandidates,
    NonFiniteInput,
)
from .metrics import aggregate, reproduction_error
from .nncore import LayerStack, normalize_head
from .patches import PatchTensor, stack_patches

OPTIMIZERS = ("sgd_momentum", "adam")


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 256
    drop_worst_frac: float = 0.2
    drop_best_frac: float = 0.01
    l2: float = 1e-5
    epochs: int = 30
    learning_rate: float = 1e-3
    optimizer: str = "sgd_momentum"
    seed: int = 0
    early_stop_patience: int = 10  # epochs without val-median improvement; 0 disables

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.drop_worst_frac < 0 or self.drop_best_frac < 0 \
                or self.drop_worst_frac + self.drop_best_frac >= 1:
            raise ValueError("need 0 <= drop_best + drop_worst < 1")
        if self.l2 < 0:
            raise ValueError("l2 must be >= 0")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"optimizer must be one of {OPTIMIZERS}")


def mae_loss(pred: Sequence[float], target: Sequence[float]) -> float:
    """Mean absolute difference over the 9 outputs of one sample."""
    p = np.asarray(pred, dtype=np.float64)
    t = np.asarray(target, dtype=np.float64)
    if p.shape != (9,) or t.shape != (9,):
        raise ValueError(f"expected 9-vectors, got {p.shape} and {t.shape}")
    if not (np.isfinite(p).all() and np.isfinite(t).all()):
        raise NonFiniteInput("loss inputs must be finite")
    return float(np.abs(p - t).mean())


def trimmed_indices(per_sample_losses: Sequence[float], drop_worst_frac: float,
                    drop_best_frac: float) -> np.ndarray:
    """Indices retained after dropping floor(n*frac) samples off each tail.

    Ties rank by original index (stable sort), so among equal losses the lower
    index is retained first; the result preserves original order.
    """
    losses = np.asarray(per_sample_losses, dtype=np.float64)
    n = losses.size
    if n == 0:
        raise EmptyBatch("cannot trim an empty batch")
    k_worst = math.floor(n * drop_worst_frac)
    k_best = math.floor(n * drop_best_frac)
    if k_worst + k_best >= n:
        raise AllDropped(f"dropping {k_worst}+{k_best} of {n} leaves nothing")
    order = np.argsort(losses, kind="stable")
    kept = order[k_best:n - k_worst] if k_worst else order[k_best:]
    return np.sort(kept)


def l2_penalty(model: LayerStack, l2: float) -> float:
    """l2 * sum of squared weights; biases are excluded."""
    total = 0.0
    for name, arr in model.params().items():
        if name.endswith("w"):
            total += float((arr.astype(np.float64) ** 2).sum())
    return l2 * total


def add_l2_gradients(model: LayerStack, l2: float) -> None:
    """Add d(l2 * sum w^2)/dw = 2 * l2 * w to the weight gradients in place."""
    if l2 == 0:
        return
    params = model.params()
    grads = model.grads()
    for name, arr in params.items():
        if name.endswith("w"):
            grads[name] += (2.0 * l2) * arr


class _SgdMomentum:
    def __init__(self, lr: float, momentum: float = 0.9):
        self.lr, self.momentum = lr, momentum
        self.velocity: dict[str, np.ndarray] = {}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        for name in params:
            g = grads[name]
            v = self.velocity.get(name)
            v = g.copy() if v is None else self.momentum * v + g
            self.velocity[name] = v
            params[name] -= (self.lr * v).astype(params[name].dtype)


class _Adam:
    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t = 0

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for name in params:
            g = grads[name].astype(np.float64)
            m = self.m.get(name, np.zeros_like(g))
            v = self.v.get(name, np.zeros_like(g))
            m = b1 * m + (1 - b1) * g
            v = b2 * v + (1 - b2) * g * g
            self.m[name], self.v[name] = m, v
            m_hat = m / (1 - b1 ** self.t)
            v_hat = v / (1 - b2 ** self.t)
            update = self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
            params[name] -= update.astype(params[name].dtype)


def _make_optimizer(config: TrainConfig):
    if config.optimizer == "adam":
        return _Adam(config.learning_rate)
    return _SgdMomentum(config.learning_rate)


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    train_loss: float
    val_median_deg: float
    val_mean_deg: float


@dataclass
class TrainResult:
    model: LayerStack
    history: list[EpochStats] = field(default_factory=list)

    @property
    def final_val_median(self) -> float:
        return self.history[-1].val_median_deg if self.history else math.inf


def validation_errors(model: LayerStack, val_patches: Sequence[PatchTensor]) -> np.ndarray:
    """Per-patch reproduction error of head 0 against the dominant target."""
    x, y = stack_patches(val_patches)
    dtype = next(iter(model.params().values())).dtype
    preds = model.forward(x.astype(dtype))
    errs = np.empty(len(val_patches))
    for i in range(len(val_patches)):
        est = normalize_head(preds[i, :3])
        errs[i] = reproduction_error(tuple(y[i, :3]), tuple(est))
    return errs


def train(model: LayerStack, train_patches: Sequence[PatchTensor],
          val_patches: Sequence[PatchTensor], config: TrainConfig) -> TrainResult:
    """Run the trimmed-MAE loop; returns the trained model plus per-epoch history.

    Each step: forward a mini-batch, per-sample MAE, drop the trimmed tails,
    average the retained losses, add the L2 penalty, backpropagate, and update.
    A non-finite loss rolls the model back to the end of the last finished
    epoch and raises DivergenceDetected.
    """
    x_all, y_all = stack_patches(train_patches)
    n = x_all.shape[0]
    if config.epochs > 0 and n == 0:
        raise EmptyBatch("no training patches")
    dtype = next(iter(model.params().values())).dtype
    x_all = x_all.astype(dtype)
    y_all = y_all.astype(dtype)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(config.seed)))
    opt = _make_optimizer(config)
    history: list[EpochStats] = []
    last_good = model.snapshot()
    best_median = math.inf
    stale = 0
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        losses = []
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            xb, yb = x_all[idx], y_all[idx]
            pred = model.forward(xb)
            per_sample = np.abs(pred.astype(np.float64) - yb).mean(axis=1)
            kept = trimmed_indices(per_sample, config.drop_worst_frac, config.drop_best_frac)
            loss = float(per_sample[kept].mean()) + l2_penalty(model, config.l2)
            if not math.isfinite(loss):
                model.set_params(last_good)
                raise DivergenceDetected(
                    f"non-finite loss at epoch {epoch}; rolled back to last good state")
            losses.append(loss)
            dpred = np.zeros_like(pred)
            dpred[kept] = np.sign(pred[kept] - yb[kept]) / (9.0 * kept.size)
            model.backward(dpred)
            add_l2_gradients(model, config.l2)
            opt.step(model.params(), model.grads())
        val_errs = validation_errors(model, val_patches)
        stats = aggregate(val_errs)
        history.append(EpochStats(epoch=epoch, train_loss=float(np.mean(losses)),
                                  val_median_deg=stats.median, val_mean_deg=stats.mean))
        last_good = model.snapshot()
        if stats.median < best_median - 1e-12:
            best_median = stats.median
            stale = 0
        else:
            stale += 1
            if config.early_stop_patience and stale >= config.early_stop_patience:
                break
    return TrainResult(model=model, history=history)


def select_best(candidates: Sequence[TrainResult],
                val_patches: Sequence[PatchTensor]) -> TrainResult:
    """Candidate with the smallest validation median of head 0; ties keep the
    earliest."""
    if not candidates:
        raise EmptyCandidates("no candidate models")
    best = None
    best_median = math.inf
    for cand in candidates:
        median = aggregate(validation_errors(cand.model, val_patches)).median
        if median < best_median:
            best, best_median = cand, median
    return best


def write_history_csv(history: Sequence[EpochStats], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_loss", "val_median_deg", "val_mean_deg"])
        for row in history:
            writer.writerow([row.epoch, repr(row.train_loss),
                             repr(row.val_median_deg), repr(row.val_mean_deg)])
