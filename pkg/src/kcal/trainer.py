"""Projection training by SGD on the KDE-classifier log-loss.

Each batch draws prediction points from the whole training set and an
equal-size per-class background sample from the rest; background kernel
sums are rescaled by (class size / m) to stay unbiased for the full-set
sums. The bandwidth is fixed at 1 during training (its value folds into
the projection scale), gradients through the full composite are exact,
and the learning rate halves when the epoch-mean loss plateaus.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from scipy.special import logsumexp

from .dataio import ClassPartition, EmbeddingDataset, class_partition
from .errors import NumericalError, ValidationError
from .kernel import pairwise_sq_dist
from .projection import (
    Arch,
    ProjectionParams,
    freeze_normalization,
    init_projection,
    project_backward,
    project_forward,
)

LOG_PROB_FLOOR = 1e-12
TRAIN_BANDWIDTH = 1.0


@dataclass
class TrainConfig:
    batch_size: int = 64
    per_class_background: int = 20
    learning_rate: float = 1e-3
    epochs: int = 100
    batches_per_epoch: int = 200
    plateau_patience: int = 10
    plateau_factor: float = 0.5
    seed: int = 0
    arch: Arch = Arch.MLP2_SKIP
    dim: Optional[int] = None  # None -> min(h, 32)

    def __post_init__(self):
        if self.batch_size < 1 or self.per_class_background < 1:
            raise ValidationError("batch_size and per_class_background must be >= 1")
        if self.learning_rate <= 0:
            raise ValidationError("learning_rate must be positive")
        if not 0 < self.plateau_factor < 1:
            raise ValidationError("plateau_factor must be in (0, 1)")
        if self.epochs < 0 or self.batches_per_epoch < 1:
            raise ValidationError("epochs must be >= 0, batches_per_epoch >= 1")


@dataclass
class Batch:
    prediction_indices: np.ndarray
    background_indices: List[np.ndarray]
    class_sizes: np.ndarray


@dataclass
class TrainReport:
    params: ProjectionParams
    epoch_losses: List[float] = field(default_factory=list)
    learning_rates: List[float] = field(default_factory=list)
    seed: int = 0


def sample_batch(
    partition: ClassPartition, batch_size: int, m: int, rng: np.random.Generator
) -> Batch:
    """Draw prediction indices plus per-class background samples.

    Prediction indices come uniformly without replacement from all rows;
    background indices for class k come without replacement from that
    class minus the prediction rows. A class with fewer than ``m`` rows
    left is resampled with replacement under a warning. ``class_sizes``
    records the pool size each class's rescaling uses.
    """
    n = partition.n
    if batch_size > n:
        raise ValidationError(f"batch_size {batch_size} exceeds n={n}")
    pred = rng.choice(n, size=batch_size, replace=False) if batch_size else np.empty(
        0, dtype=np.int64
    )
    pred_set = set(pred.tolist())
    backgrounds = []
    class_sizes = np.empty(partition.num_classes, dtype=np.int64)
    for k, members in enumerate(partition.per_class_indices):
        if members.size == 0:
            raise ValidationError(f"class {k} has no training rows")
        pool = members[~np.isin(members, pred, assume_unique=False)] if pred_set else members
        if pool.size == 0:
            warnings.warn(
                f"class {k} fully consumed by the prediction batch; "
                "sampling backgrounds from the whole class",
                stacklevel=2,
            )
            pool = members
        if pool.size < m:
            warnings.warn(
                f"class {k} has {pool.size} rows outside the prediction batch, "
                f"fewer than m={m}; sampling with replacement",
                stacklevel=2,
            )
            backgrounds.append(rng.choice(pool, size=m, replace=True))
        else:
            backgrounds.append(rng.choice(pool, size=m, replace=False))
        class_sizes[k] = pool.size
    return Batch(np.asarray(pred, dtype=np.int64), backgrounds, class_sizes)


def compute_batch_loss_and_grads(
    params: ProjectionParams, train_embeddings: np.ndarray, batch: Batch, labels
):
    """Log-loss of the weighted KDE prediction over a batch, with gradients.

    The loss is the mean negative log of the rescaled per-class kernel
    sums' softmax at the true label, log-probabilities clamped below at
    log(1e-12) (a clamped sample contributes zero gradient). Gradients
    are exact through the kernel and the projection.
    """
    labels = np.asarray(labels, dtype=np.int64)
    pred_idx = batch.prediction_indices
    if pred_idx.size == 0:
        raise ValidationError("prediction batch is empty")
    m_sizes = [idx.size for idx in batch.background_indices]
    bg_idx = np.concatenate(batch.background_indices)
    stacked = np.concatenate([pred_idx, bg_idx])
    z_all, cache = project_forward(params, train_embeddings[stacked])
    n_pred = pred_idx.size
    z_pred, z_bg = z_all[:n_pred], z_all[n_pred:]

    lw = -pairwise_sq_dist(z_pred, z_bg) / (2.0 * TRAIN_BANDWIDTH**2)
    num_classes = len(batch.background_indices)
    starts = np.concatenate([[0], np.cumsum(m_sizes)])
    scores = np.empty((n_pred, num_classes))
    for k in range(num_classes):
        block = lw[:, starts[k] : starts[k + 1]]
        scores[:, k] = logsumexp(block, axis=1) + np.log(
            batch.class_sizes[k] / m_sizes[k]
        )
    denom = logsumexp(scores, axis=1, keepdims=True)
    log_probs = scores - denom
    y = labels[pred_idx]
    lp_true = log_probs[np.arange(n_pred), y]
    floor = np.log(LOG_PROB_FLOOR)
    loss = float(-np.mean(np.maximum(lp_true, floor)))
    if not np.isfinite(loss):
        raise NumericalError("non-finite batch loss")

    active = (lp_true > floor).astype(np.float64)
    probs = np.exp(log_probs)
    g_scores = probs.copy()
    g_scores[np.arange(n_pred), y] -= 1.0
    g_scores *= (active / n_pred)[:, None]

    g_lw = np.empty_like(lw)
    for k in range(num_classes):
        block = lw[:, starts[k] : starts[k + 1]]
        alpha = np.exp(block - logsumexp(block, axis=1, keepdims=True))
        g_lw[:, starts[k] : starts[k + 1]] = g_scores[:, k : k + 1] * alpha

    # lw = -||z_p - z_b||^2 / 2 => d lw/d z_p = -(z_p - z_b), d lw/d z_b = +(z_p - z_b)
    row_tot = g_lw.sum(axis=1, keepdims=True)
    col_tot = g_lw.sum(axis=0, keepdims=True)
    d_z_pred = (g_lw @ z_bg - row_tot * z_pred) / TRAIN_BANDWIDTH**2
    d_z_bg = (g_lw.T @ z_pred - col_tot.T * z_bg) / TRAIN_BANDWIDTH**2
    grads = project_backward(params, cache, np.concatenate([d_z_pred, d_z_bg]))
    return loss, grads


def train_projection(config: TrainConfig, train_set: EmbeddingDataset) -> TrainReport:
    """Train the projection; fully deterministic in ``config.seed``.

    Normalization statistics are frozen over the whole training set
    before any updates. Plain SGD; the learning rate halves after
    ``plateau_patience`` epochs without improvement of the epoch-mean
    loss, and training stops at the epoch cap.
    """
    if train_set.labels is None:
        raise ValidationError("training set must carry labels")
    if train_set.n < 1:
        raise ValidationError("training set is empty")
    partition = class_partition(train_set.labels, train_set.num_classes)
    if (partition.counts == 0).any():
        raise ValidationError("every class must be nonempty for training")
    h = train_set.h
    d = config.dim if config.dim is not None else min(h, 32)
    params = init_projection(h, d, config.arch, config.seed)
    if config.arch is not Arch.IDENTITY:
        params = freeze_normalization(params, train_set.embeddings)
    rng = np.random.default_rng(config.seed)
    report = TrainReport(params=params, seed=config.seed)
    lr = config.learning_rate
    best = np.inf
    stale = 0
    for _ in range(config.epochs):
        epoch_losses = np.empty(config.batches_per_epoch)
        for b in range(config.batches_per_epoch):
            batch = sample_batch(
                partition, config.batch_size, config.per_class_background, rng
            )
            loss, grads = compute_batch_loss_and_grads(
                params, train_set.embeddings, batch, train_set.labels
            )
            epoch_losses[b] = loss
            for name, tensor in params.weight_items():
                tensor -= lr * getattr(grads, name)
        mean_loss = float(epoch_losses.mean())
        report.epoch_losses.append(mean_loss)
        report.learning_rates.append(lr)
        if mean_loss < best:
            best = mean_loss
            stale = 0
        else:
            stale += 1
            if stale >= config.plateau_patience:
                lr *= config.plateau_factor
                stale = 0
    report.params = params
    return report
