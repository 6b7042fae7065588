"""Bandwidth selection for the KDE classifier.

The inference bandwidth is the minimizer of the (leave-one-out)
calibration log-loss, found by golden-section search in log-bandwidth
space; the loss is empirically unimodal in the bandwidth, which the
search assumes. An analytic alternative follows the optimal shrinkage
rate ``b = C' * m^(-1/(d+4))`` with the constant fitted to observed
(per-class count, tuned bandwidth) pairs, so retuning can be skipped
when calibration data accumulates online.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import NumericalError, ValidationError
from .kde import KdeModel, kde_predict

#: golden ratio conjugate, the per-iteration interval shrink factor
INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0

LOG_PROB_FLOOR = 1e-12


@dataclass
class BandwidthSearchConfig:
    """Bounds and tolerance for the bandwidth search.

    ``lb``/``ub`` default to 1e-3 and 1e+3 times the RMS pairwise
    distance of the support, keeping the bracket scale-free.
    """

    lb: Optional[float] = None
    ub: Optional[float] = None
    tol: float = 1e-3
    loo: bool = True

    def __post_init__(self):
        if self.tol <= 0:
            raise ValidationError("tol must be positive")
        if self.lb is not None and self.ub is not None and not (
            0 < self.lb < self.ub
        ):
            raise ValidationError(f"need 0 < lb < ub, got [{self.lb}, {self.ub}]")


@dataclass(frozen=True)
class BandwidthLaw:
    """The fitted shrinkage law ``b = constant * m^(-1/(dim+4))``."""

    constant: float
    dim: int
    residual_rms: float = 0.0

    def __post_init__(self):
        if not self.constant > 0:
            raise ValidationError("law constant must be positive")


def golden_section_minimize(
    f: Callable[[float], float], lb: float, ub: float, tol: float = 1e-3
):
    """Minimize a scalar unimodal function over ``[lb, ub]``.

    The search runs in log space, so ``lb`` must be positive and ``tol``
    is a relative precision: the bracket stops once its log-width is at
    most ``tol``, placing the returned point within a factor
    ``exp(tol)`` of the true minimizer of any strictly unimodal ``f``.
    Iterations are bounded by ``ceil(log(W/tol) / log(1/INV_PHI))`` with
    ``W = log(ub/lb)`` the initial bracket width.
    """
    if not (0 < lb < ub):
        raise ValidationError(f"need 0 < lb < ub, got [{lb}, {ub}]")

    def g(t: float) -> float:
        x = math.exp(t)
        value = f(x)
        if not np.isfinite(value):
            raise NumericalError(f"objective non-finite at {x}")
        return value

    a, b = math.log(lb), math.log(ub)
    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    fc, fd = g(c), g(d)
    while (b - a) > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - INV_PHI * (b - a)
            fc = g(c)
        else:
            a, c, fc = c, d, fd
            d = a + INV_PHI * (b - a)
            fd = g(d)
    t_best, f_best = (c, fc) if fc < fd else (d, fd)
    return math.exp(t_best), f_best


def rms_pairwise_distance(z: np.ndarray, max_points: int = 1000) -> float:
    """Root-mean-square pairwise distance of (a strided subsample of) ``z``."""
    z = np.asarray(z, dtype=np.float64)
    n = z.shape[0]
    if n > max_points:
        z = z[np.linspace(0, n - 1, max_points).astype(int)]
        n = max_points
    if n < 2:
        raise ValidationError("need at least 2 points for a distance scale")
    from .kernel import pairwise_sq_dist

    sq = pairwise_sq_dist(z, z)
    mean_sq = sq.sum() / (n * (n - 1))
    if mean_sq <= 0:
        raise ValidationError("support points are all identical")
    return math.sqrt(mean_sq)


def default_search_bounds(z: np.ndarray):
    scale = rms_pairwise_distance(z)
    return 1e-3 * scale, 1e3 * scale


def loo_log_loss(support_z, labels, class_counts, bandwidth: float) -> float:
    """Mean negative log-likelihood of leave-one-out KDE prediction.

    Probabilities are clamped below at ``LOG_PROB_FLOOR`` so singleton
    classes (whose own-class weight vanishes under leave-one-out) keep
    the loss finite.
    """
    model = KdeModel(support_z, labels, class_counts, bandwidth, _identity_for(support_z))
    probs = kde_predict(model, leave_one_out=True)
    p_true = probs[np.arange(labels.shape[0]), labels]
    return float(-np.mean(np.log(np.maximum(p_true, LOG_PROB_FLOOR))))


def _identity_for(z):
    from .projection import Arch, ProjectionParams

    d = z.shape[1]
    return ProjectionParams(Arch.IDENTITY, d, d, np.zeros(d), np.ones(d), frozen=True)


def tune_bandwidth(
    support_z: np.ndarray,
    labels: np.ndarray,
    config: Optional[BandwidthSearchConfig] = None,
):
    """Select the bandwidth minimizing calibration log-loss.

    ``support_z`` is the already-projected calibration set. Returns the
    selected bandwidth. Under leave-one-out, classes with a single member
    contribute a constant floor term and trigger a warning.
    """
    config = config or BandwidthSearchConfig()
    support_z = np.asarray(support_z, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if support_z.shape[0] != labels.shape[0]:
        raise ValidationError("support and labels disagree on N")
    num_classes = int(labels.max()) + 1
    class_counts = np.bincount(labels, minlength=num_classes)
    if config.loo and (class_counts == 1).any():
        singles = np.flatnonzero(class_counts == 1).tolist()
        warnings.warn(
            f"classes {singles} have a single calibration point; their own-"
            "class weight is excluded under leave-one-out",
            stacklevel=2,
        )
    lb, ub = config.lb, config.ub
    if lb is None or ub is None:
        lb_default, ub_default = default_search_bounds(support_z)
        lb = lb_default if lb is None else lb
        ub = ub_default if ub is None else ub
    if not 0 < lb < ub:
        raise ValidationError(f"need 0 < lb < ub, got [{lb}, {ub}]")

    if config.loo:
        objective = lambda b: loo_log_loss(support_z, labels, class_counts, b)
    else:
        def objective(b):
            model = KdeModel(
                support_z, labels, class_counts, b, _identity_for(support_z)
            )
            probs = kde_predict(model, support_z, leave_one_out=False)
            p_true = probs[np.arange(labels.shape[0]), labels]
            return float(-np.mean(np.log(np.maximum(p_true, LOG_PROB_FLOOR))))

    b_star, _ = golden_section_minimize(objective, lb, ub, config.tol)
    return b_star


def fit_bandwidth_constant(pairs, dim: int) -> BandwidthLaw:
    """Fit the law constant to observed ``(m, b*)`` pairs.

    The slope is fixed at ``-1/(dim+4)``; only the intercept is fitted,
    by least squares in log-log space. Returns the constant and the
    residual RMS of the fit.
    """
    pairs = [(float(m), float(b)) for m, b in pairs]
    if len(pairs) < 2:
        raise ValidationError("need at least 2 (m, b*) pairs")
    if any(m <= 0 or b <= 0 for m, b in pairs):
        raise ValidationError("pairs must be positive")
    log_m = np.log([m for m, _ in pairs])
    log_b = np.log([b for _, b in pairs])
    slope = -1.0 / (dim + 4)
    log_c = float(np.mean(log_b - slope * log_m))
    residuals = log_b - (log_c + slope * log_m)
    return BandwidthLaw(math.exp(log_c), dim, float(np.sqrt(np.mean(residuals**2))))


def analytic_bandwidth(law: BandwidthLaw, m: int) -> float:
    """Bandwidth from the fitted shrinkage law at per-class count ``m``.

    ``m`` is the rarest class's calibration count, not the total over K.
    """
    if m < 1:
        raise ValidationError(f"m must be at least 1, got {m}")
    return law.constant * float(m) ** (-1.0 / (law.dim + 4))
