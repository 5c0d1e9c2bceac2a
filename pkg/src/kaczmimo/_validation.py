"""Input validation helpers.

All matrices are handled as C-ordered (row-major) ``complex128`` numpy
arrays; these helpers are the single place where foreign inputs are
converted, so no module ever has to guess about storage order.
"""

import numbers

import numpy as np

from .exceptions import ShapeMismatch


def check_matrix(A, name="A", shape=None, allow_empty=False):
    """Return ``A`` as a finite, C-contiguous complex128 2-D array.

    Parameters
    ----------
    A : array_like
        Candidate matrix.
    name : str
        Used in error messages.
    shape : tuple of (int or None), optional
        Expected ``(rows, cols)``; ``None`` entries are not checked.
    allow_empty : bool
        Whether zero rows or columns are acceptable.
    """
    arr = np.ascontiguousarray(A, dtype=np.complex128)
    if arr.ndim != 2:
        raise ShapeMismatch(f"{name} must be 2-D, got ndim={arr.ndim}")
    if not allow_empty and arr.size == 0:
        raise ShapeMismatch(f"{name} must be non-empty, got shape {arr.shape}")
    if shape is not None:
        for axis, want in enumerate(shape):
            if want is not None and arr.shape[axis] != want:
                raise ShapeMismatch(
                    f"{name} has shape {arr.shape}, expected {tuple(shape)}"
                )
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def check_vector(x, name="x", length=None):
    """Return ``x`` as a finite complex128 1-D array of the given length."""
    arr = np.ascontiguousarray(x, dtype=np.complex128)
    if arr.ndim != 1:
        raise ShapeMismatch(f"{name} must be 1-D, got ndim={arr.ndim}")
    if length is not None and arr.shape[0] != length:
        raise ShapeMismatch(f"{name} has length {arr.shape[0]}, expected {length}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def check_nonnegative(value, name):
    if not isinstance(value, numbers.Real) or not np.isfinite(value) or value < 0:
        raise ValueError(f"{name} must be a finite real >= 0, got {value!r}")
    return float(value)


def check_count(value, name):
    if isinstance(value, bool) or not isinstance(value, numbers.Integral) or value < 0:
        raise ValueError(f"{name} must be a non-negative integer, got {value!r}")
    return int(value)
