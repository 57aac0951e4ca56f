"""Volume containers and grid conventions.

Axis order is (z, y, x) = (D, H, W) everywhere in this package, with z the
slowest-varying axis; arrays are C-contiguous, so the in-memory layout matches
the z-major on-disk layout used by :mod:`lesionkit.io`.  Spacing is the
physical voxel pitch in millimetres, stored in the same (z, y, x) order.

Internal arithmetic is 64-bit float; file payloads are 32-bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InputError

__all__ = [
    "GridShape",
    "LabelVolume",
    "ProbVolume",
    "BinaryMask",
    "softmax",
    "backprop_logits",
]


@dataclass(frozen=True)
class GridShape:
    """Grid dimensions (d, h, w) plus per-axis spacing in mm (z, y, x)."""

    dims: tuple[int, int, int]
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        if len(self.dims) != 3 or any(int(n) != n or n < 1 for n in self.dims):
            raise InputError(f"grid dims must be three positive integers, got {self.dims!r}")
        if len(self.spacing) != 3 or any(not np.isfinite(s) or s <= 0 for s in self.spacing):
            raise InputError(f"spacing must be three positive finite floats, got {self.spacing!r}")
        object.__setattr__(self, "dims", tuple(int(n) for n in self.dims))
        object.__setattr__(self, "spacing", tuple(float(s) for s in self.spacing))

    @property
    def num_voxels(self) -> int:
        d, h, w = self.dims
        return d * h * w

    @property
    def voxel_volume_mm3(self) -> float:
        sz, sy, sx = self.spacing
        return sz * sy * sx


def _check_data_shape(shape: GridShape, data: np.ndarray, what: str):
    if tuple(data.shape[-3:]) != shape.dims:
        raise InputError(f"{what} data shape {data.shape} does not match grid dims {shape.dims}")


@dataclass(frozen=True)
class LabelVolume:
    """Dense integer label volume; label 0 is background by convention."""

    shape: GridShape
    data: np.ndarray  # (d, h, w) integer
    num_classes: int

    def __post_init__(self):
        if self.num_classes < 2:
            raise InputError(f"num_classes must be >= 2, got {self.num_classes}")
        _check_data_shape(self.shape, self.data, "label")
        if self.data.ndim != 3 or not np.issubdtype(self.data.dtype, np.integer):
            raise InputError("label data must be a 3-D integer array")
        if self.data.size and (self.data.min() < 0 or self.data.max() >= self.num_classes):
            raise InputError(
                f"label values must lie in [0, {self.num_classes}), "
                f"found range [{self.data.min()}, {self.data.max()}]"
            )
        # smallest sufficient width, and freeze the payload
        dtype = np.uint8 if self.num_classes <= 256 else np.int16
        arr = np.ascontiguousarray(self.data.astype(dtype, copy=False))
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)


@dataclass(frozen=True)
class ProbVolume:
    """Per-class probability fields, one scalar field per class.

    ``normalized`` is a caller-supplied declaration that per-voxel class sums
    are 1 (within 1e-6); :func:`softmax` sets it, hand-built volumes may too.
    """

    shape: GridShape
    data: np.ndarray  # (C, d, h, w) float64
    normalized: bool = False

    def __post_init__(self):
        _check_data_shape(self.shape, self.data, "probability")
        if self.data.ndim != 4:
            raise InputError("probability data must have shape (num_classes, d, h, w)")
        if self.data.shape[0] < 2:
            raise InputError("probability volume needs at least 2 class channels")
        arr = np.ascontiguousarray(self.data, dtype=np.float64)
        if not np.isfinite(arr).all():
            raise InputError("probability data contains non-finite values")
        if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
            raise InputError("probability values must lie in [0, 1]")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def num_classes(self) -> int:
        return self.data.shape[0]

    def check_normalized(self, tol: float = 1e-6):
        sums = self.data.sum(axis=0)
        err = float(np.abs(sums - 1.0).max()) if sums.size else 0.0
        if err > tol:
            raise InputError(f"per-voxel class sums deviate from 1 by {err:.3g}")


@dataclass(frozen=True)
class BinaryMask:
    shape: GridShape
    data: np.ndarray = field(repr=False)  # (d, h, w) bool

    def __post_init__(self):
        _check_data_shape(self.shape, self.data, "mask")
        arr = np.ascontiguousarray(self.data.astype(bool, copy=False))
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    def num_true(self) -> int:
        return int(self.data.sum())


def softmax(logits: np.ndarray, shape: GridShape) -> ProbVolume:
    """Per-voxel softmax over the class axis (axis 0), max-shifted for stability."""
    logits = np.asarray(logits, dtype=np.float64)
    if not np.isfinite(logits).all():
        raise InputError("softmax input contains non-finite values")
    shifted = logits - logits.max(axis=0, keepdims=True)
    e = np.exp(shifted)
    p = e / e.sum(axis=0, keepdims=True)
    return ProbVolume(shape=shape, data=p, normalized=True)


def backprop_logits(grad_prob: np.ndarray, prob: ProbVolume) -> np.ndarray:
    """Pull a gradient w.r.t. softmax probabilities back to logits.

    out_i = p_i * (g_i - sum_j p_j g_j), per voxel.
    """
    g = np.asarray(grad_prob, dtype=np.float64)
    if g.shape != prob.data.shape:
        raise InputError(f"gradient shape {g.shape} does not match prob shape {prob.data.shape}")
    if not prob.normalized:
        raise InputError("backprop_logits requires a normalized ProbVolume")
    p = prob.data
    inner = (p * g).sum(axis=0, keepdims=True)
    return p * (g - inner)
