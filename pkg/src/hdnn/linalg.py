"""Dense float64 matrix primitives.

A "matrix" throughout this package is a 2-D C-contiguous float64 ndarray;
rows/cols are ``shape`` and the row-major data is ``ravel()``.  Everything
else in the library is built on the small operation set below.  All
operations are pure and deterministic: identical inputs give bit-identical
outputs on a fixed backend.
"""

from __future__ import annotations

import numpy as np

from . import backend
from .errors import DomainError, ParameterError, ShapeError


def as_matrix(x) -> np.ndarray:
    """Coerce to a 2-D C-contiguous float64 array."""
    a = np.ascontiguousarray(x, dtype=np.float64)
    if a.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got ndim={a.ndim}")
    return a


def _check_same_shape(a: np.ndarray, b: np.ndarray, op: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: operand shapes {a.shape} and {b.shape} differ")


def matmul(a, b) -> np.ndarray:
    """Matrix product with left-to-right accumulation over the shared dim."""
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(
            f"matmul: inner dimensions of {a.shape} and {b.shape} do not match")
    return backend.matmul(a, b)


def sigmoid(a) -> np.ndarray:
    return backend.sigmoid(as_matrix(a))


def elem_mul(a, b) -> np.ndarray:
    a, b = as_matrix(a), as_matrix(b)
    _check_same_shape(a, b, "elem_mul")
    return a * b


def elem_add(a, b) -> np.ndarray:
    a, b = as_matrix(a), as_matrix(b)
    _check_same_shape(a, b, "elem_add")
    return a + b


def elem_sub(a, b) -> np.ndarray:
    a, b = as_matrix(a), as_matrix(b)
    _check_same_shape(a, b, "elem_sub")
    return a - b


def scale(a, factor: float) -> np.ndarray:
    return as_matrix(a) * float(factor)


def elem_log(a) -> np.ndarray:
    a = as_matrix(a)
    if np.any(a <= 0.0):
        bad = np.argwhere(a <= 0.0)[0]
        raise DomainError(
            f"elem_log: non-positive entry {a[tuple(bad)]!r} at index {tuple(bad)}")
    return np.log(a)


def elem_exp(a) -> np.ndarray:
    return np.exp(as_matrix(a))


_UNARY_OPS = {"sigmoid": sigmoid, "log": elem_log, "exp": elem_exp}
_BINARY_OPS = {"multiply": elem_mul, "add": elem_add, "subtract": elem_sub}


def map_elementwise(a, op: str, operand=None) -> np.ndarray:
    """Apply a named elementwise operation.

    ``op`` is one of sigmoid/log/exp (unary), multiply/add/subtract
    (matrix operand of the same shape), or scale (scalar operand).
    """
    if op in _UNARY_OPS:
        if operand is not None:
            raise ParameterError(f"map_elementwise: {op!r} takes no operand")
        return _UNARY_OPS[op](a)
    if op in _BINARY_OPS:
        if operand is None:
            raise ParameterError(f"map_elementwise: {op!r} needs a matrix operand")
        return _BINARY_OPS[op](a, operand)
    if op == "scale":
        if operand is None:
            raise ParameterError("map_elementwise: 'scale' needs a scalar operand")
        return scale(a, operand)
    supported = sorted([*_UNARY_OPS, *_BINARY_OPS, "scale"])
    raise ParameterError(f"map_elementwise: unknown op {op!r}; supported: {supported}")
