"""Gaussian-mixture test beds with an exact posterior oracle.

Classes share an isotropic covariance, so the Bayes posterior has a
closed form and the smoothness/boundedness assumptions behind the KDE
convergence guarantees hold exactly. The oracle is the ground truth for
measuring true full-calibration error at desk scale.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .dataio import EmbeddingDataset
from .errors import ValidationError


@dataclass
class GmmOracle:
    """Mixture parameters with an analytic posterior."""

    means: np.ndarray
    sigma: float
    priors: np.ndarray
    seed: int

    def __post_init__(self):
        self.means = np.asarray(self.means, dtype=np.float64)
        self.priors = np.asarray(self.priors, dtype=np.float64)
        if self.means.ndim != 2:
            raise ValidationError("means must be a K x h matrix")
        if self.priors.shape != (self.means.shape[0],):
            raise ValidationError("need one prior per class")
        if (self.priors < 0).any() or abs(self.priors.sum() - 1.0) > 1e-12:
            raise ValidationError("priors must be nonnegative and sum to 1")
        if not self.sigma > 0:
            raise ValidationError("sigma must be positive")

    @property
    def num_classes(self) -> int:
        return self.means.shape[0]

    @property
    def h(self) -> int:
        return self.means.shape[1]

    def to_dict(self) -> dict:
        return {
            "means": self.means.tolist(),
            "sigma": self.sigma,
            "priors": self.priors.tolist(),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "GmmOracle":
        return cls(
            np.asarray(payload["means"]),
            float(payload["sigma"]),
            np.asarray(payload["priors"]),
            int(payload["seed"]),
        )


def _spread_directions(rng, num_classes: int, h: int) -> np.ndarray:
    """Random direction vectors, redrawn until pairwise distinct."""
    dirs = np.empty((num_classes, h))
    for k in range(num_classes):
        while True:
            v = rng.standard_normal(h)
            if all(np.linalg.norm(v - dirs[j]) > 1e-6 for j in range(k)):
                dirs[k] = v
                break
    return dirs


def generate_gmm(
    num_classes: int,
    h: int,
    separation: float,
    sigma: float,
    priors,
    n: int,
    seed: int,
):
    """Draw a labeled sample from a seeded isotropic Gaussian mixture.

    Means are random directions rescaled so the minimum pairwise distance
    equals ``separation`` (zero separation collapses all means onto the
    origin). Returns ``(EmbeddingDataset, GmmOracle)``.
    """
    if num_classes < 2:
        raise ValidationError("need at least 2 classes")
    if h < 1 or n < 1:
        raise ValidationError("need h >= 1 and n >= 1")
    if separation < 0:
        raise ValidationError("separation must be nonnegative")
    priors = np.asarray(priors, dtype=np.float64)
    if priors.shape != (num_classes,) or (priors < 0).any() or abs(
        priors.sum() - 1.0
    ) > 1e-12:
        raise ValidationError("priors must be a nonnegative vector summing to 1")
    rng = np.random.default_rng(seed)
    dirs = _spread_directions(rng, num_classes, h)
    gaps = [
        np.linalg.norm(dirs[i] - dirs[j])
        for i in range(num_classes)
        for j in range(i + 1, num_classes)
    ]
    means = dirs * (separation / min(gaps))
    oracle = GmmOracle(means, float(sigma), priors, seed)
    labels = rng.choice(num_classes, size=n, p=priors)
    x = means[labels] + sigma * rng.standard_normal((n, h))
    return EmbeddingDataset(x, labels, num_classes), oracle


def sample_from_oracle(oracle: GmmOracle, n: int, seed: int) -> EmbeddingDataset:
    """Draw a fresh labeled sample from an existing mixture."""
    if n < 1:
        raise ValidationError("need n >= 1")
    rng = np.random.default_rng(seed)
    labels = rng.choice(oracle.num_classes, size=n, p=oracle.priors)
    x = oracle.means[labels] + oracle.sigma * rng.standard_normal((n, oracle.h))
    return EmbeddingDataset(x, labels, oracle.num_classes)


def sample_per_class(oracle: GmmOracle, per_class: int, seed: int) -> EmbeddingDataset:
    """Draw exactly ``per_class`` points from every class of the mixture."""
    if per_class < 1:
        raise ValidationError("need per_class >= 1")
    rng = np.random.default_rng(seed)
    xs, ys = [], []
    for k in range(oracle.num_classes):
        xs.append(
            oracle.means[k]
            + oracle.sigma * rng.standard_normal((per_class, oracle.h))
        )
        ys.append(np.full(per_class, k, dtype=np.int64))
    return EmbeddingDataset(np.vstack(xs), np.concatenate(ys), oracle.num_classes)


def oracle_posterior(oracle: GmmOracle, x: np.ndarray) -> np.ndarray:
    """Exact Gaussian Bayes posterior rows, computed in log space."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != oracle.h:
        raise ValidationError(f"expected n x {oracle.h} inputs, got {x.shape}")
    diff = x[:, None, :] - oracle.means[None, :, :]
    sq = np.einsum("nkh,nkh->nk", diff, diff)
    log_like = -sq / (2.0 * oracle.sigma**2)
    with np.errstate(divide="ignore"):
        log_prior = np.log(oracle.priors)
    scores = log_like + log_prior
    return np.exp(scores - logsumexp(scores, axis=1, keepdims=True))


def full_calibration_error(pred: np.ndarray, truth: np.ndarray) -> float:
    """Mean absolute deviation between predicted and true posterior entries."""
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape:
        raise ValidationError(f"shape mismatch: {pred.shape} vs {truth.shape}")
    return float(np.mean(np.abs(pred - truth)))
