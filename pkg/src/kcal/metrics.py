"""Calibration and accuracy metrics over probability matrices.

Binning is shared between the scalar metrics and the reliability-diagram
data so that the binned ECE reaggregates exactly from diagram gaps.
Adaptive (equal-mass) bins split the samples, sorted stably by value then
index, into contiguous groups whose sizes differ by at most one; static
bins are the equal-width intervals [j/n, (j+1)/n) with the last interval
closed at 1.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import List, Optional

import numpy as np

from .errors import ValidationError

NLL_PROB_FLOOR = 1e-12


class BinningKind(Enum):
    ADAPTIVE = "adaptive"
    STATIC = "static"


@dataclass(frozen=True)
class BinningScheme:
    kind: BinningKind = BinningKind.ADAPTIVE
    n_bins: int = 20

    def __post_init__(self):
        if self.n_bins < 1:
            raise ValidationError("n_bins must be at least 1")


ADAPTIVE_20 = BinningScheme(BinningKind.ADAPTIVE, 20)
STATIC_20 = BinningScheme(BinningKind.STATIC, 20)


@dataclass(frozen=True)
class ReliabilityBin:
    mean_predicted: float
    frequency: float
    count: int


@dataclass
class ReliabilityData:
    """Per-bin (mean predicted probability, empirical frequency, count) records."""

    bins: List[ReliabilityBin]
    axis: str
    scheme: BinningScheme
    min_count: int
    n_samples: int

    def as_rows(self):
        return [(b.mean_predicted, b.frequency, b.count) for b in self.bins]


def validate_prob_matrix(probs: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 2 or probs.shape[1] < 2:
        raise ValidationError("probability matrix must be n x K with K >= 2")
    if probs.size == 0:
        return probs
    if probs.min() < -tol or probs.max() > 1 + tol:
        raise ValidationError("probabilities outside [0, 1]")
    sums = probs.sum(axis=1)
    worst = np.abs(sums - 1.0).max()
    if worst > tol:
        raise ValidationError(f"rows must sum to 1 within {tol}, worst |sum-1|={worst:g}")
    return probs


def _check_inputs(probs, labels):
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if probs.ndim != 2:
        raise ValidationError("probability matrix must be 2-D")
    if probs.shape[0] == 0:
        raise ValidationError("empty input")
    if labels.shape != (probs.shape[0],):
        raise ValidationError(
            f"labels shape {labels.shape} does not match {probs.shape[0]} rows"
        )
    if labels.min() < 0 or labels.max() >= probs.shape[1]:
        raise ValidationError("labels outside [0, K)")
    return probs, labels


def _bin_groups(values: np.ndarray, scheme: BinningScheme):
    """Index groups per bin; empty groups for empty bins."""
    n = values.shape[0]
    if scheme.kind is BinningKind.ADAPTIVE:
        order = np.argsort(values, kind="stable")
        return np.array_split(order, scheme.n_bins)
    idx = np.minimum(
        (values * scheme.n_bins).astype(int), scheme.n_bins - 1
    )
    return [np.flatnonzero(idx == j) for j in range(scheme.n_bins)]


def _binned_gap(values: np.ndarray, outcomes: np.ndarray, scheme: BinningScheme):
    """Count-weighted mean absolute gap between value and outcome means."""
    n = values.shape[0]
    if n == 0:
        return 0.0
    total = 0.0
    for group in _bin_groups(values, scheme):
        if group.size == 0:
            continue
        gap = abs(values[group].mean() - outcomes[group].mean())
        total += group.size / n * gap
    return total


def accuracy(probs, labels) -> float:
    """Fraction of rows whose argmax (ties to the lowest index) is the label."""
    probs, labels = _check_inputs(probs, labels)
    return float(np.mean(np.argmax(probs, axis=1) == labels))


def ece(probs, labels, scheme: BinningScheme = ADAPTIVE_20) -> float:
    """Expected calibration error of the top-class confidence."""
    probs, labels = _check_inputs(probs, labels)
    confidence = probs.max(axis=1)
    correct = (np.argmax(probs, axis=1) == labels).astype(np.float64)
    return float(_binned_gap(confidence, correct, scheme))


def cece_threshold(num_classes: int) -> float:
    return max(0.01, 1.0 / num_classes)


def cece(probs, labels, scheme: BinningScheme = ADAPTIVE_20) -> float:
    """Class-wise ECE, unweighted mean over classes.

    Per class, predictions below ``max(0.01, 1/K)`` are ignored before
    binning; classes left with no samples are skipped.
    """
    probs, labels = _check_inputs(probs, labels)
    k = probs.shape[1]
    threshold = cece_threshold(k)
    per_class = []
    for c in range(k):
        kept = probs[:, c] >= threshold
        if not kept.any():
            continue
        outcomes = (labels[kept] == c).astype(np.float64)
        per_class.append(_binned_gap(probs[kept, c], outcomes, scheme))
    if not per_class:
        raise ValidationError("every class filtered empty; degenerate predictions")
    return float(np.mean(per_class))


def brier_top(probs, labels) -> float:
    """Squared error of the top-class probability against its correctness."""
    probs, labels = _check_inputs(probs, labels)
    top = np.argmax(probs, axis=1)
    confidence = probs[np.arange(probs.shape[0]), top]
    return float(np.mean((confidence - (top == labels)) ** 2))


def brier_multi(probs, labels) -> float:
    """Multi-class Brier score with 1/(NK) normalization."""
    probs, labels = _check_inputs(probs, labels)
    one_hot = np.zeros_like(probs)
    one_hot[np.arange(probs.shape[0]), labels] = 1.0
    return float(np.mean((probs - one_hot) ** 2))


def nll(probs, labels) -> float:
    """Mean negative log-likelihood, probabilities floored at 1e-12."""
    probs, labels = _check_inputs(probs, labels)
    p_true = probs[np.arange(probs.shape[0]), labels]
    return float(-np.mean(np.log(np.maximum(p_true, NLL_PROB_FLOOR))))


def reliability_data(
    probs,
    labels,
    axis: str = "confidence",
    scheme: BinningScheme = ADAPTIVE_20,
    min_count: int = 15,
    class_k: Optional[int] = None,
) -> ReliabilityData:
    """Reliability-diagram records for the confidence or one class' axis.

    ``axis`` is ``"confidence"`` (top-class probability vs correctness)
    or ``"class"`` with ``class_k`` set (that class' probability vs the
    event ``y == k``, over samples passing the class-wise threshold).
    Bins with fewer than ``min_count`` samples are dropped; records are
    sorted by mean predicted probability.
    """
    probs, labels = _check_inputs(probs, labels)
    if axis == "confidence":
        values = probs.max(axis=1)
        outcomes = (np.argmax(probs, axis=1) == labels).astype(np.float64)
    elif axis == "class":
        if class_k is None or not 0 <= class_k < probs.shape[1]:
            raise ValidationError(f"class_k must be in [0, {probs.shape[1]})")
        kept = probs[:, class_k] >= cece_threshold(probs.shape[1])
        values = probs[kept, class_k]
        outcomes = (labels[kept] == class_k).astype(np.float64)
    else:
        raise ValidationError(f"unknown axis {axis!r}")
    records = []
    for group in _bin_groups(values, scheme):
        if group.size == 0 or group.size < min_count:
            continue
        records.append(
            ReliabilityBin(
                float(values[group].mean()),
                float(outcomes[group].mean()),
                int(group.size),
            )
        )
    records.sort(key=lambda r: r.mean_predicted)
    label = axis if axis == "confidence" else f"class:{class_k}"
    return ReliabilityData(records, label, scheme, min_count, int(values.shape[0]))


def reaggregate_ece(data: ReliabilityData) -> float:
    """Weighted gap sum over diagram bins; equals ECE when min_count=0."""
    if data.n_samples == 0:
        return 0.0
    return float(
        sum(b.count / data.n_samples * abs(b.mean_predicted - b.frequency) for b in data.bins)
    )
