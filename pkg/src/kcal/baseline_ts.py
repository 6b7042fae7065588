"""Temperature scaling, the single comparison baseline.

Operates on logits (not embeddings): a scalar temperature divides every
logit row before the softmax, fitted by minimizing calibration NLL. The
transform is monotone per row, so argmax predictions and accuracy are
unchanged for any temperature.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .bandwidth import golden_section_minimize
from .errors import ValidationError
from .metrics import nll

TEMPERATURE_BOUNDS = (0.05, 20.0)
_FIT_TOL = 1e-4


@dataclass(frozen=True)
class TemperatureModel:
    temperature: float

    def __post_init__(self):
        if not (np.isfinite(self.temperature) and self.temperature > 0):
            raise ValidationError(
                f"temperature must be positive and finite, got {self.temperature}"
            )


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax, max-shifted for overflow safety."""
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 2:
        raise ValidationError("logits must be an n x K matrix")
    if logits.size and not np.all(np.isfinite(logits)):
        raise ValidationError("logits contain non-finite entries")
    shifted = logits - logits.max(axis=1, keepdims=True)
    expd = np.exp(shifted)
    return expd / expd.sum(axis=1, keepdims=True)


def fit_temperature(cal_logits: np.ndarray, cal_labels: np.ndarray) -> TemperatureModel:
    """Fit T minimizing NLL of softmax(logits / T) on the calibration set.

    Searches log-temperature over ``TEMPERATURE_BOUNDS``; warns when the
    optimum sits at a search boundary.
    """
    cal_logits = np.asarray(cal_logits, dtype=np.float64)
    cal_labels = np.asarray(cal_labels, dtype=np.int64)
    if cal_logits.shape[0] != cal_labels.shape[0]:
        raise ValidationError("logits and labels disagree on n")

    def objective(temperature: float) -> float:
        return nll(softmax(cal_logits / temperature), cal_labels)

    lb, ub = TEMPERATURE_BOUNDS
    t_star, _ = golden_section_minimize(objective, lb, ub, _FIT_TOL)
    # the NLL can plateau flat near a bound (probabilities saturate), so
    # boundary detection needs a window much wider than the search tol
    boundary_slack = 0.15
    if (
        abs(np.log(t_star) - np.log(lb)) < boundary_slack
        or abs(np.log(t_star) - np.log(ub)) < boundary_slack
    ):
        warnings.warn(
            f"fitted temperature {t_star:.4g} sits at a search boundary "
            f"{TEMPERATURE_BOUNDS}",
            stacklevel=2,
        )
    return TemperatureModel(t_star)


def apply_temperature(model: TemperatureModel, logits: np.ndarray) -> np.ndarray:
    """softmax(logits / T)."""
    return softmax(np.asarray(logits, dtype=np.float64) / model.temperature)
