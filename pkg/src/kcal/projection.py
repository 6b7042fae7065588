"""The learnable embedding projection: a two-layer MLP with a skip path.

The map sends h-dimensional penultimate embeddings to a d-dimensional
metric space. Input normalization uses statistics frozen once over the
whole training set (rather than per-batch), which keeps training
deterministic and makes single-query inference well defined. Forward and
backward passes are exact closed-form numpy; gradients are verified
against central finite differences in the test suite.
"""

from __future__ import annotations

import dataclasses
import json
import struct
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import FormatError, ValidationError

NORM_EPS = 1e-5

MAGIC_PROJECTION = b"KPRJ"
_PROJ_HEADER = struct.Struct("<4sII")  # magic, version, json header length


class Arch(Enum):
    MLP2_SKIP = "mlp2"
    LINEAR = "linear"
    IDENTITY = "identity"


@dataclass
class ProjectionParams:
    """Weights and normalization statistics of the projection.

    For ``LINEAR`` only ``w1``/``b1`` are used; ``IDENTITY`` carries no
    parameters and requires ``d == h``.
    """

    arch: Arch
    h: int
    d: int
    norm_mean: np.ndarray
    norm_var: np.ndarray
    w1: Optional[np.ndarray] = None
    b1: Optional[np.ndarray] = None
    w2: Optional[np.ndarray] = None
    b2: Optional[np.ndarray] = None
    ws: Optional[np.ndarray] = None
    frozen: bool = False

    def copy(self) -> "ProjectionParams":
        return dataclasses.replace(
            self,
            norm_mean=self.norm_mean.copy(),
            norm_var=self.norm_var.copy(),
            w1=None if self.w1 is None else self.w1.copy(),
            b1=None if self.b1 is None else self.b1.copy(),
            w2=None if self.w2 is None else self.w2.copy(),
            b2=None if self.b2 is None else self.b2.copy(),
            ws=None if self.ws is None else self.ws.copy(),
        )

    def weight_items(self):
        """(name, array) pairs of trainable tensors, in update order."""
        names = {
            Arch.MLP2_SKIP: ("w1", "b1", "w2", "b2", "ws"),
            Arch.LINEAR: ("w1", "b1"),
            Arch.IDENTITY: (),
        }[self.arch]
        return [(name, getattr(self, name)) for name in names]


@dataclass
class ProjectionGrads:
    w1: Optional[np.ndarray] = None
    b1: Optional[np.ndarray] = None
    w2: Optional[np.ndarray] = None
    b2: Optional[np.ndarray] = None
    ws: Optional[np.ndarray] = None


def _glorot_uniform(rng, fan_in: int, fan_out: int, shape):
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


def init_projection(h: int, d: int, arch: Arch, seed: int) -> ProjectionParams:
    """Initialize parameters; weights are fan-scaled uniform, biases zero.

    Normalization statistics start at mean 0 / variance 1 until frozen.
    Deterministic in ``seed``.
    """
    if arch is Arch.IDENTITY:
        if d != h:
            raise ValidationError("IDENTITY projection requires d == h")
        return ProjectionParams(
            arch, h, d, np.zeros(h), np.ones(h), frozen=True
        )
    if not 1 <= d <= h:
        raise ValidationError(f"need 1 <= d <= h, got d={d}, h={h}")
    rng = np.random.default_rng(seed)
    params = ProjectionParams(
        arch,
        h,
        d,
        np.zeros(h),
        np.ones(h),
        w1=_glorot_uniform(rng, h, d, (h, d)),
        b1=np.zeros(d),
    )
    if arch is Arch.MLP2_SKIP:
        params.w2 = _glorot_uniform(rng, d, d, (d, d))
        params.b2 = np.zeros(d)
        params.ws = _glorot_uniform(rng, h, d, (h, d))
    return params


def freeze_normalization(params: ProjectionParams, x: np.ndarray) -> ProjectionParams:
    """Freeze per-column normalization statistics from ``x``.

    Stores the population variance plus ``NORM_EPS`` (so constant columns
    normalize by sqrt(eps) instead of dividing by zero). Idempotent for a
    fixed ``x``; returns a new params value.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.h:
        raise ValidationError(f"expected n x {params.h} matrix")
    if x.shape[0] < 2:
        raise ValidationError("need at least 2 rows to estimate statistics")
    out = params.copy()
    out.norm_mean = x.mean(axis=0)
    out.norm_var = x.var(axis=0) + NORM_EPS
    out.frozen = True
    return out


@dataclass
class ForwardCache:
    x_norm: np.ndarray
    h_pre: Optional[np.ndarray] = None
    h_act: Optional[np.ndarray] = None


def project_forward(params: ProjectionParams, x: np.ndarray):
    """Apply the projection to the rows of ``x``.

    Returns ``(z, cache)`` where the cache holds the intermediates needed
    by :func:`project_backward`.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.h:
        raise ValidationError(
            f"expected n x {params.h} input, got {x.shape}"
        )
    if params.arch is Arch.IDENTITY:
        return x, ForwardCache(x)
    if not params.frozen:
        raise ValidationError("normalization statistics not frozen")
    x_norm = (x - params.norm_mean) / np.sqrt(params.norm_var)
    if params.arch is Arch.LINEAR:
        return x_norm @ params.w1 + params.b1, ForwardCache(x_norm)
    h_pre = x_norm @ params.w1 + params.b1
    h_act = np.maximum(h_pre, 0.0)
    z = h_act @ params.w2 + params.b2 + x_norm @ params.ws
    return z, ForwardCache(x_norm, h_pre, h_act)


def project_backward(
    params: ProjectionParams, cache: ForwardCache, dz: np.ndarray
) -> ProjectionGrads:
    """Exact parameter gradients of sum(dz * z) for the cached forward pass.

    The relu subgradient at 0 is taken as 0.
    """
    dz = np.asarray(dz, dtype=np.float64)
    n, d = cache.x_norm.shape[0], params.d
    if dz.shape != (n, d):
        raise ValidationError(f"expected {n} x {d} upstream gradient, got {dz.shape}")
    if params.arch is Arch.IDENTITY:
        return ProjectionGrads()
    if params.arch is Arch.LINEAR:
        return ProjectionGrads(w1=cache.x_norm.T @ dz, b1=dz.sum(axis=0))
    d_hact = dz @ params.w2.T
    d_hpre = d_hact * (cache.h_pre > 0)
    return ProjectionGrads(
        w1=cache.x_norm.T @ d_hpre,
        b1=d_hpre.sum(axis=0),
        w2=cache.h_act.T @ dz,
        b2=dz.sum(axis=0),
        ws=cache.x_norm.T @ dz,
    )


# serialization: JSON header then float32 tensors in this fixed order
_TENSOR_ORDER = ("norm_mean", "norm_var", "w1", "b1", "w2", "b2", "ws")


def _tensor_shapes(arch: Arch, h: int, d: int):
    shapes = {"norm_mean": (h,), "norm_var": (h,)}
    if arch is not Arch.IDENTITY:
        shapes["w1"] = (h, d)
        shapes["b1"] = (d,)
    if arch is Arch.MLP2_SKIP:
        shapes["w2"] = (d, d)
        shapes["b2"] = (d,)
        shapes["ws"] = (h, d)
    return shapes


def projection_to_bytes(params: ProjectionParams) -> bytes:
    header = json.dumps(
        {
            "arch": params.arch.value,
            "h": params.h,
            "d": params.d,
            "eps": NORM_EPS,
            "frozen": params.frozen,
        },
        sort_keys=True,
    ).encode()
    blobs = [_PROJ_HEADER.pack(MAGIC_PROJECTION, 1, len(header)), header]
    shapes = _tensor_shapes(params.arch, params.h, params.d)
    for name in _TENSOR_ORDER:
        if name in shapes:
            tensor = getattr(params, name)
            blobs.append(np.ascontiguousarray(tensor, dtype="<f4").tobytes())
    return b"".join(blobs)


def projection_from_bytes(raw: bytes) -> ProjectionParams:
    if len(raw) < _PROJ_HEADER.size:
        raise FormatError("projection blob shorter than header")
    magic, version, header_len = _PROJ_HEADER.unpack_from(raw)
    if magic != MAGIC_PROJECTION:
        raise FormatError(f"bad projection magic {magic!r}")
    if version != 1:
        raise FormatError(f"unsupported projection version {version}")
    offset = _PROJ_HEADER.size
    meta = json.loads(raw[offset : offset + header_len].decode())
    offset += header_len
    arch = Arch(meta["arch"])
    h, d = int(meta["h"]), int(meta["d"])
    shapes = _tensor_shapes(arch, h, d)
    fields = {}
    for name in _TENSOR_ORDER:
        if name not in shapes:
            continue
        count = int(np.prod(shapes[name]))
        block = raw[offset : offset + 4 * count]
        if len(block) != 4 * count:
            raise FormatError(f"projection payload truncated at tensor {name}")
        fields[name] = (
            np.frombuffer(block, dtype="<f4").astype(np.float64).reshape(shapes[name])
        )
        offset += 4 * count
    return ProjectionParams(
        arch,
        h,
        d,
        fields["norm_mean"],
        fields["norm_var"],
        w1=fields.get("w1"),
        b1=fields.get("b1"),
        w2=fields.get("w2"),
        b2=fields.get("b2"),
        ws=fields.get("ws"),
        frozen=bool(meta["frozen"]),
    )


def save_projection(path, params: ProjectionParams):
    Path(path).write_bytes(projection_to_bytes(params))


def load_projection(path) -> ProjectionParams:
    return projection_from_bytes(Path(path).read_bytes())
