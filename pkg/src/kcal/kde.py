"""KDE classification over a calibration support set.

Predictions are ratios of per-class kernel-weight sums, computed entirely
in log space (per-class log-sum-exp, then a softmax over classes), so a
row lies on the probability simplex by construction. A query whose kernel
weights all underflow (every log weight below :data:`UNDERFLOW_LOG_FLOOR`)
would make the direct ratio 0/0; such rows fall back to the class priors
of the support and are flagged.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.special import logsumexp

from .dataio import (
    labels_block_size,
    labels_from_bytes,
    labels_to_bytes,
    matrix_block_size,
    matrix_from_bytes,
    matrix_to_bytes,
)
from .errors import FormatError, ValidationError
from .kernel import pairwise_sq_dist_fast
from .projection import (
    ProjectionParams,
    project_forward,
    projection_from_bytes,
    projection_to_bytes,
)

#: natural-log floor below which exp() is an exact zero in float64
UNDERFLOW_LOG_FLOOR = -745.0

# cap on query-block x support elements processed at once
_BLOCK_ELEMENTS = 8_000_000


@dataclass
class KdeModel:
    """A deployable calibrated classifier.

    Holds the projected calibration support, its labels and per-class
    counts, the tuned bandwidth, and the projection used to map raw
    queries into the support's metric space. Immutable after
    construction; adding calibration points means building a new value.
    """

    support: np.ndarray
    labels: np.ndarray
    class_counts: np.ndarray
    bandwidth: float
    projection: ProjectionParams
    bandwidth_law: Optional[dict] = None

    def __post_init__(self):
        self.support = np.asarray(self.support, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.class_counts = np.asarray(self.class_counts, dtype=np.int64)
        if self.support.ndim != 2 or self.support.shape[0] != self.labels.shape[0]:
            raise ValidationError("support and labels disagree on N")
        if self.support.shape[0] < 1:
            raise ValidationError("support must hold at least one point")
        if self.class_counts.sum() != self.labels.shape[0]:
            raise ValidationError("class_counts do not sum to N")
        k = self.class_counts.shape[0]
        if self.labels.size:
            hist = np.bincount(self.labels, minlength=k)
            if hist.shape[0] > k or not np.array_equal(hist, self.class_counts):
                raise ValidationError("class_counts disagree with label histogram")
        if not (np.isfinite(self.bandwidth) and self.bandwidth > 0):
            raise ValidationError(f"bandwidth must be positive, got {self.bandwidth}")
        # class-sorted views for contiguous per-class reductions; the
        # position map lets leave-one-out mask self-columns
        order = np.argsort(self.labels, kind="stable")
        self._sorted_support = self.support[order]
        self._sorted_pos = np.empty(order.shape[0], dtype=np.int64)
        self._sorted_pos[order] = np.arange(order.shape[0])
        self._class_bounds = np.concatenate(
            [[0], np.cumsum(self.class_counts)]
        ).astype(np.int64)

    @property
    def n_support(self) -> int:
        return self.support.shape[0]

    @property
    def num_classes(self) -> int:
        return self.class_counts.shape[0]

    @property
    def d(self) -> int:
        return self.support.shape[1]


def _class_log_sums(model: KdeModel, z_block: np.ndarray, b: float, loo_base=None):
    """Per-class logsumexp of kernel weights for a block of projected queries.

    ``loo_base`` is the support index of the block's first row when the
    block is the support itself and self-matches must be excluded.
    Works on the class-sorted support so every class is a contiguous
    column range: one exp pass plus a reduceat per block.

    Returns ``(class_logsum, underflowed)``.
    """
    n_rows = z_block.shape[0]
    k = model.num_classes
    bounds = model._class_bounds
    lw = pairwise_sq_dist_fast(z_block, model._sorted_support)
    lw *= -1.0 / (2.0 * b * b)
    if loo_base is not None:
        rows = np.arange(n_rows)
        lw[rows, model._sorted_pos[loo_base + rows]] = -np.inf
    block_max = np.full((n_rows, k), -np.inf)
    for c in range(k):
        lo, hi = bounds[c], bounds[c + 1]
        if hi > lo:
            block_max[:, c] = lw[:, lo:hi].max(axis=1)
    underflowed = block_max.max(axis=1) < UNDERFLOW_LOG_FLOOR
    safe_max = np.where(np.isfinite(block_max), block_max, 0.0)
    for c in range(k):
        lo, hi = bounds[c], bounds[c + 1]
        if hi > lo:
            lw[:, lo:hi] -= safe_max[:, c : c + 1]
    np.exp(lw, out=lw)
    # reduceat over nonempty classes only: their starts are strictly
    # increasing and zero-width (empty) classes would corrupt segments
    nonempty = np.flatnonzero(model.class_counts > 0)
    cls = np.full((n_rows, k), -np.inf)
    if nonempty.size:
        sums = np.add.reduceat(lw, bounds[:-1][nonempty], axis=1)
        with np.errstate(divide="ignore"):
            cls[:, nonempty] = np.log(sums) + safe_max[:, nonempty]
    # rows whose block max was -inf (e.g. singleton class under LOO)
    cls[~np.isfinite(block_max)] = -np.inf
    return cls, underflowed


def _probs_from_class_log_sums(cls: np.ndarray, priors: np.ndarray, underflowed):
    with np.errstate(invalid="ignore"):
        log_probs = cls - logsumexp(cls, axis=1, keepdims=True)
    probs = np.exp(log_probs)
    if underflowed.any():
        probs[underflowed] = priors
    return probs


def kde_predict(
    model: KdeModel,
    queries: Optional[np.ndarray] = None,
    leave_one_out: bool = False,
    return_fallback_mask: bool = False,
):
    """Calibrated class probabilities for raw queries.

    Parameters
    ----------
    model : KdeModel
    queries : ndarray, optional
        Raw n x h embeddings, projected through ``model.projection``.
        In leave-one-out mode the queries must be the support itself;
        pass ``None`` to use the stored support directly (row i then
        excludes support point i from both sums).
    leave_one_out : bool
    return_fallback_mask : bool
        Also return the boolean per-query underflow-fallback mask.

    Returns
    -------
    probs : ndarray
        n x K rows on the probability simplex.
    """
    if leave_one_out:
        if queries is not None:
            queries = np.asarray(queries, dtype=np.float64)
            if queries.shape[0] != model.n_support:
                raise ValidationError(
                    "leave-one-out queries must be the calibration support"
                )
        z = model.support
    else:
        if queries is None:
            raise ValidationError("queries required unless leave_one_out")
        z, _ = project_forward(model.projection, queries)
    n = z.shape[0]
    priors = model.class_counts / max(model.n_support, 1)
    probs = np.empty((n, model.num_classes), dtype=np.float64)
    fallback = np.zeros(n, dtype=bool)
    block = max(1, _BLOCK_ELEMENTS // max(model.n_support, 1))
    for start in range(0, n, block):
        stop = min(start + block, n)
        cls, under = _class_log_sums(
            model,
            z[start:stop],
            model.bandwidth,
            loo_base=start if leave_one_out else None,
        )
        probs[start:stop] = _probs_from_class_log_sums(cls, priors, under)
        fallback[start:stop] = under
    if return_fallback_mask:
        return probs, fallback
    return probs


def kde_predict_weighted(
    query_z: np.ndarray,
    backgrounds: list,
    class_sizes,
    bandwidth: float = 1.0,
):
    """Training-time prediction from per-class background samples.

    Each class contributes ``(class_size_k / m_k) * sum_of_kernel_weights``
    over its background block; the rescale keeps the per-class sums
    unbiased for the full-set sums. Inputs are already projected.
    """
    query_z = np.asarray(query_z, dtype=np.float64)
    class_sizes = np.asarray(class_sizes, dtype=np.float64)
    if len(backgrounds) != class_sizes.shape[0]:
        raise ValidationError("need one background block per class")
    for c, bg in enumerate(backgrounds):
        if bg.shape[0] < 1:
            raise ValidationError(f"empty background for class {c}")
        if class_sizes[c] < bg.shape[0]:
            raise ValidationError(
                f"class_sizes[{c}]={class_sizes[c]} below m_k={bg.shape[0]}"
            )
    scores = np.empty((query_z.shape[0], len(backgrounds)), dtype=np.float64)
    for c, bg in enumerate(backgrounds):
        lw = -pairwise_sq_dist_fast(query_z, bg) / (2.0 * bandwidth**2)
        scores[:, c] = logsumexp(lw, axis=1) + np.log(class_sizes[c] / bg.shape[0])
    return np.exp(scores - logsumexp(scores, axis=1, keepdims=True))


MAGIC_MODEL = b"KMDL"
_MODEL_HEADER = struct.Struct("<4sII")


def save_model(path, model: KdeModel):
    """Serialize a model: JSON manifest + projection, support, labels blocks.

    Support coordinates are stored in the float32 embedding framing, so a
    model should be built from float32-rounded support (as the CLI does)
    for save/load round trips to be exact.
    """
    proj_blob = projection_to_bytes(model.projection)
    manifest = {
        "bandwidth": model.bandwidth,
        "num_classes": model.num_classes,
        "class_counts": model.class_counts.tolist(),
        "n_support": model.n_support,
        "d": model.d,
        "h": model.projection.h,
        "projection_bytes": len(proj_blob),
        "bandwidth_law": model.bandwidth_law,
    }
    header = json.dumps(manifest, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(_MODEL_HEADER.pack(MAGIC_MODEL, 1, len(header)))
        fh.write(header)
        fh.write(proj_blob)
        fh.write(matrix_to_bytes(model.support))
        fh.write(labels_to_bytes(model.labels, model.num_classes))


def load_model(path) -> KdeModel:
    raw = Path(path).read_bytes()
    if len(raw) < _MODEL_HEADER.size:
        raise FormatError(f"{path}: shorter than model header")
    magic, version, header_len = _MODEL_HEADER.unpack_from(raw)
    if magic != MAGIC_MODEL:
        raise FormatError(f"{path}: bad model magic {magic!r}")
    if version != 1:
        raise FormatError(f"{path}: unsupported model version {version}")
    offset = _MODEL_HEADER.size
    manifest = json.loads(raw[offset : offset + header_len].decode())
    offset += header_len
    proj = projection_from_bytes(raw[offset : offset + manifest["projection_bytes"]])
    offset += manifest["projection_bytes"]
    n, d = manifest["n_support"], manifest["d"]
    emb_bytes = matrix_block_size(n, d)
    support = matrix_from_bytes(raw[offset : offset + emb_bytes], source=path)
    offset += emb_bytes
    labels, _ = labels_from_bytes(
        raw[offset : offset + labels_block_size(n)], source=path
    )
    return KdeModel(
        support,
        labels,
        np.asarray(manifest["class_counts"], dtype=np.int64),
        manifest["bandwidth"],
        proj,
        bandwidth_law=manifest.get("bandwidth_law"),
    )
