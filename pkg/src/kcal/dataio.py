"""Reading, writing and splitting of embedding/label/probability files.

Binary containers share one framing: a 4-byte ASCII magic, a u32 LE
version (always 1), a u64 LE row count and a u32 LE column count (or
class count), followed by the payload in little-endian row-major order.

=========  =======  ==================  ========
magic      payload  contents            columns
=========  =======  ==================  ========
``KEMB``   float32  embeddings          h
``KLGT``   float32  logits              K
``KPRB``   float64  probability rows    K
``KLAB``   u32      labels              (K in header)
=========  =======  ==================  ========

KPRB stores float64 because probability rows quantized to float32 can
miss their unit sum by ~1e-7, which would defeat the 1e-9 simplex check
applied downstream.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import FormatError, SizeMismatchError, ValidationError

MAGIC_EMBEDDINGS = b"KEMB"
MAGIC_LOGITS = b"KLGT"
MAGIC_PROBS = b"KPRB"
MAGIC_LABELS = b"KLAB"

_VERSION = 1
_HEADER = struct.Struct("<4sIQI")  # magic, version, n rows, n cols


@dataclass
class EmbeddingDataset:
    """An n x h matrix of embeddings with optional integer labels.

    ``labels`` entries must lie in ``[0, num_classes)``. Embedding-only
    files (e.g. prediction queries) carry ``labels=None``; those may be
    empty, while labeled datasets used for training or calibration are
    validated by their consumers.
    """

    embeddings: np.ndarray
    labels: Optional[np.ndarray] = None
    num_classes: Optional[int] = None

    def __post_init__(self):
        self.embeddings = np.asarray(self.embeddings, dtype=np.float64)
        if self.embeddings.ndim != 2:
            raise ValidationError("embeddings must be a 2-D matrix")
        if not np.all(np.isfinite(self.embeddings)):
            raise ValidationError("embeddings contain non-finite entries")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != (self.n,):
                raise ValidationError(
                    f"expected {self.n} labels, got {self.labels.shape}"
                )
            if self.num_classes is None:
                self.num_classes = int(self.labels.max(initial=-1)) + 1
            if self.num_classes < 2:
                raise ValidationError("num_classes must be at least 2")
            if self.labels.size and (
                self.labels.min() < 0 or self.labels.max() >= self.num_classes
            ):
                raise ValidationError("labels outside [0, num_classes)")

    @property
    def n(self) -> int:
        return self.embeddings.shape[0]

    @property
    def h(self) -> int:
        return self.embeddings.shape[1]


@dataclass
class ClassPartition:
    """Per-class row indices; lists are disjoint and cover [0, n)."""

    per_class_indices: list
    counts: np.ndarray

    @property
    def num_classes(self) -> int:
        return len(self.per_class_indices)

    @property
    def n(self) -> int:
        return int(self.counts.sum())


def _read_header(raw: bytes, path, expected_magic: bytes):
    if len(raw) < _HEADER.size:
        raise FormatError(f"{path}: file shorter than header")
    magic, version, n, cols = _HEADER.unpack_from(raw)
    if magic != expected_magic:
        raise FormatError(
            f"{path}: bad magic {magic!r}, expected {expected_magic!r}"
        )
    if version != _VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    return int(n), int(cols)


def _payload_dtype(magic: bytes) -> np.dtype:
    return np.dtype("<f8") if magic == MAGIC_PROBS else np.dtype("<f4")


def matrix_to_bytes(matrix: np.ndarray, magic: bytes = MAGIC_EMBEDDINGS) -> bytes:
    matrix = np.asarray(matrix)
    if matrix.ndim != 2:
        raise ValidationError("matrix must be 2-D")
    dtype = _payload_dtype(magic)
    payload = np.ascontiguousarray(matrix, dtype=dtype)
    header = _HEADER.pack(magic, _VERSION, matrix.shape[0], matrix.shape[1])
    return header + payload.tobytes()


def matrix_block_size(n: int, cols: int, magic: bytes = MAGIC_EMBEDDINGS) -> int:
    return _HEADER.size + n * cols * _payload_dtype(magic).itemsize


def matrix_from_bytes(
    raw: bytes, magic: bytes = MAGIC_EMBEDDINGS, source="<bytes>"
) -> np.ndarray:
    n, cols = _read_header(raw, source, magic)
    dtype = _payload_dtype(magic)
    expected = _HEADER.size + n * cols * dtype.itemsize
    if len(raw) != expected:
        raise SizeMismatchError(
            f"{source}: header declares {n}x{cols} but file has "
            f"{len(raw) - _HEADER.size} payload bytes, expected "
            f"{expected - _HEADER.size}"
        )
    values = np.frombuffer(raw, dtype=dtype, offset=_HEADER.size)
    matrix = values.reshape(n, cols).astype(np.float64)
    if not np.all(np.isfinite(matrix)):
        raise ValidationError(f"{source}: payload contains non-finite values")
    return matrix


def write_matrix_file(path, matrix: np.ndarray, magic: bytes = MAGIC_EMBEDDINGS):
    """Write a 2-D matrix in the binary container identified by ``magic``."""
    Path(path).write_bytes(matrix_to_bytes(matrix, magic))


def read_matrix_file(path, magic: bytes = MAGIC_EMBEDDINGS) -> np.ndarray:
    """Read a matrix container, reconstructing the stored values exactly.

    Returns a float64 matrix whose values equal the stored 32-bit (or
    64-bit for KPRB) payload bit-for-bit after widening.
    """
    return matrix_from_bytes(Path(path).read_bytes(), magic, source=path)


def write_embedding_file(path, embeddings: np.ndarray):
    write_matrix_file(path, embeddings, MAGIC_EMBEDDINGS)


def read_embedding_file(path) -> EmbeddingDataset:
    """Read a KEMB file into an embedding-only dataset."""
    return EmbeddingDataset(read_matrix_file(path, MAGIC_EMBEDDINGS))


def labels_to_bytes(labels: np.ndarray, num_classes: int) -> bytes:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.ndim != 1:
        raise ValidationError("labels must be a vector")
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise ValidationError("labels outside [0, num_classes)")
    header = _HEADER.pack(MAGIC_LABELS, _VERSION, labels.shape[0], num_classes)
    return header + labels.astype("<u4").tobytes()


def labels_block_size(n: int) -> int:
    return _HEADER.size + 4 * n


def labels_from_bytes(raw: bytes, source="<bytes>"):
    n, header_k = _read_header(raw, source, MAGIC_LABELS)
    expected = _HEADER.size + n * 4
    if len(raw) != expected:
        raise SizeMismatchError(
            f"{source}: header declares {n} labels but payload has "
            f"{len(raw) - _HEADER.size} bytes"
        )
    labels = np.frombuffer(raw, dtype="<u4", offset=_HEADER.size).astype(np.int64)
    if labels.size and labels.max() >= header_k:
        raise ValidationError(
            f"{source}: label {labels.max()} >= header num_classes {header_k}"
        )
    return labels, header_k


def write_label_file(path, labels: np.ndarray, num_classes: int):
    Path(path).write_bytes(labels_to_bytes(labels, num_classes))


def read_label_file(path):
    """Read a KLAB file.

    Returns ``(labels, num_classes)`` where ``num_classes`` is the header
    K or ``1 + max(label)``, whichever is larger; a label at or above the
    header K is a validation error.
    """
    return labels_from_bytes(Path(path).read_bytes(), source=path)


def read_csv_dataset(path, with_labels: bool = True) -> EmbeddingDataset:
    """Read a CSV fixture: one row per sample, last column = label (optional)."""
    rows = []
    with open(path, newline="") as fh:
        for record in csv.reader(fh):
            if record:
                rows.append([float(v) for v in record])
    if not rows:
        raise ValidationError(f"{path}: empty CSV")
    matrix = np.asarray(rows, dtype=np.float64)
    if with_labels:
        if matrix.shape[1] < 2:
            raise ValidationError(f"{path}: need at least 2 columns for labels")
        labels = matrix[:, -1]
        if not np.allclose(labels, np.round(labels)):
            raise ValidationError(f"{path}: label column is not integral")
        return EmbeddingDataset(matrix[:, :-1], labels.astype(np.int64))
    return EmbeddingDataset(matrix)


def split_dataset(ds: EmbeddingDataset, cal_fraction: float, seed: int):
    """Split into (calibration, test) by a seeded uniform shuffle.

    The index sets are disjoint, cover the dataset, and depend only on
    ``seed``. Emits a warning when the calibration side is expected to
    hold fewer than one point per class.
    """
    if not 0.0 < cal_fraction < 1.0:
        raise ValidationError(f"cal_fraction must be in (0, 1), got {cal_fraction}")
    n = ds.n
    if n < 2:
        raise ValidationError("need at least 2 rows to split")
    if ds.num_classes is not None and cal_fraction * n < ds.num_classes:
        import warnings

        warnings.warn(
            f"calibration fraction {cal_fraction} of n={n} is below one "
            f"point per class (K={ds.num_classes})",
            stacklevel=2,
        )
    n_cal = min(max(int(round(cal_fraction * n)), 1), n - 1)
    perm = np.random.default_rng(seed).permutation(n)
    cal_idx = np.sort(perm[:n_cal])
    test_idx = np.sort(perm[n_cal:])

    def take(idx):
        return EmbeddingDataset(
            ds.embeddings[idx],
            None if ds.labels is None else ds.labels[idx],
            ds.num_classes,
        )

    return take(cal_idx), take(test_idx)


def class_partition(labels, num_classes: int) -> ClassPartition:
    """Group row indices by class, preserving input order within a class."""
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise ValidationError("labels outside [0, num_classes)")
    per_class = [np.flatnonzero(labels == k) for k in range(num_classes)]
    counts = np.array([idx.size for idx in per_class], dtype=np.int64)
    return ClassPartition(per_class, counts)
