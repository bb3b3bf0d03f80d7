"""Dense tensor helpers.

Tensors are plain C-contiguous numpy arrays (row-major, last axis fastest).
This module only adds the few shape-checked primitives the rest of the
package relies on.
"""
from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .errors import ShapeError, SizeError

DEFAULT_DTYPE = np.float32
_MAX_ELEMENTS = np.iinfo(np.intp).max


def check_shape(shape: Sequence[int]) -> tuple[int, ...]:
    dims = tuple(int(d) for d in shape)
    if not dims:
        raise ShapeError("shape must have at least one dimension")
    if any(d < 1 for d in dims):
        raise ShapeError(f"every dimension must be >= 1, got {dims}")
    if math.prod(dims) > _MAX_ELEMENTS:
        raise SizeError(f"element count of {dims} overflows the index range")
    return dims


def zeros(shape: Sequence[int], dtype=DEFAULT_DTYPE) -> np.ndarray:
    return np.zeros(check_shape(shape), dtype=dtype)


def transpose_cw(t: np.ndarray) -> np.ndarray:
    """Turn an LLF output ``(C, 1, T)`` into an image ``(1, C, T)``.

    A leading batch axis is allowed: ``(N, C, 1, T) -> (N, 1, C, T)``.
    Since one of the two swapped axes has length 1 this is a pure reshape
    and the data order is untouched.
    """
    if t.ndim not in (3, 4):
        raise ShapeError(f"transpose_cw expects rank 3 or 4, got rank {t.ndim}")
    if t.shape[-2] != 1:
        raise ShapeError(f"expected a singleton height axis, got shape {t.shape}")
    lead = t.shape[:-3]
    c, _, w = t.shape[-3:]
    return np.ascontiguousarray(t).reshape(*lead, 1, c, w)


def untranspose_cw(t: np.ndarray) -> np.ndarray:
    """Inverse of :func:`transpose_cw`."""
    if t.ndim not in (3, 4):
        raise ShapeError(f"untranspose_cw expects rank 3 or 4, got rank {t.ndim}")
    if t.shape[-3] != 1:
        raise ShapeError(f"expected a singleton channel axis, got shape {t.shape}")
    lead = t.shape[:-3]
    _, c, w = t.shape[-3:]
    return np.ascontiguousarray(t).reshape(*lead, c, 1, w)


def elementwise(a: np.ndarray, b, op: str) -> np.ndarray:
    """Pointwise ``add``/``mul`` of equal-shape arrays, or ``scale`` by a scalar."""
    a = np.asarray(a)
    if op == "scale":
        if np.ndim(b) != 0:
            raise ShapeError("scale expects a scalar factor")
        return a * np.asarray(b, dtype=a.dtype)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch: {a.shape} vs {b.shape}")
    if op == "add":
        return a + b
    if op == "mul":
        return a * b
    raise ValueError(f"unknown op {op!r}")
