"""Kernel weight evaluation on projected embeddings, in log space.

Only the RBF family ships. All multiplicative normalizers (1/b^d and the
Gaussian constant) are dropped: every consumer forms a ratio of sums of
the same kernel, so constants cancel exactly, and omitting them avoids
underflow at moderate distances. The synthetic-oracle module reinstates
normalizers explicitly where true densities are required.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ValidationError


class KernelFamily(Enum):
    RBF = "rbf"


@dataclass(frozen=True)
class KernelSpec:
    """A mother kernel family plus a positive bandwidth."""

    bandwidth: float
    family: KernelFamily = KernelFamily.RBF

    def __post_init__(self):
        b = self.bandwidth
        if not (np.isfinite(b) and b > 0):
            raise ValidationError(f"bandwidth must be positive and finite, got {b}")


# keep broadcast temporaries around this many float64 elements
_CHUNK_ELEMENTS = 16_000_000


def pairwise_sq_dist(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Squared Euclidean distances between the rows of ``a`` and ``b``.

    Computed from explicit row differences (chunked over rows of ``a``
    to bound memory) so entries are nonnegative by construction and
    identical rows give exact zeros.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2:
        raise ValidationError("inputs must be 2-D matrices")
    if a.shape[1] != b.shape[1]:
        raise ValidationError(
            f"column mismatch: {a.shape[1]} vs {b.shape[1]}"
        )
    p, d = a.shape
    q = b.shape[0]
    out = np.empty((p, q), dtype=np.float64)
    if p == 0 or q == 0:
        return out
    chunk = max(1, _CHUNK_ELEMENTS // max(q * max(d, 1), 1))
    for start in range(0, p, chunk):
        stop = min(start + chunk, p)
        diff = a[start:stop, None, :] - b[None, :, :]
        np.einsum("ijk,ijk->ij", diff, diff, out=out[start:stop])
    return out


def pairwise_sq_dist_fast(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Squared distances via the expanded product, clipped at zero.

    Orders of magnitude faster than :func:`pairwise_sq_dist` on large
    inputs (one BLAS product instead of materialized differences), at the
    cost of ~1e-13-scale rounding: identical rows give near-zero rather
    than exactly zero. Prediction paths use this; anything contractually
    needing exact zeros uses the difference-based version.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2:
        raise ValidationError("inputs must be 2-D matrices")
    if a.shape[1] != b.shape[1]:
        raise ValidationError(f"column mismatch: {a.shape[1]} vs {b.shape[1]}")
    sq = a @ (-2.0 * b).T
    sq += np.einsum("ij,ij->i", a, a)[:, None]
    sq += np.einsum("ij,ij->i", b, b)[None, :]
    np.maximum(sq, 0.0, out=sq)
    return sq


def log_kernel_weights(sq_dists: np.ndarray, spec: KernelSpec) -> np.ndarray:
    """Log kernel weights up to the additive constant that cancels in ratios.

    For RBF this is ``-sq_dist / (2 b^2)``.
    """
    sq_dists = np.asarray(sq_dists, dtype=np.float64)
    if np.any(sq_dists < 0):
        raise ValidationError("squared distances must be nonnegative")
    if spec.family is not KernelFamily.RBF:
        raise ValidationError(f"unsupported kernel family {spec.family}")
    return -sq_dists / (2.0 * spec.bandwidth**2)
