"""Plain-text matrix files and atomic output writes.

Matrix format: the first line is ``rows cols``; then one line per
entry in row-major order holding the real and imaginary parts. Values
are written with 17 significant digits, which round-trips every double
exactly.
"""

import os
import tempfile

import numpy as np

from .exceptions import ShapeMismatch

__all__ = ["format_matrix", "parse_matrix", "read_matrix", "write_matrix", "read_vector", "atomic_write"]


def format_matrix(A):
    A = np.atleast_2d(np.asarray(A, dtype=np.complex128))
    if A.ndim != 2:
        raise ShapeMismatch(f"expected a matrix, got ndim={A.ndim}")
    lines = [f"{A.shape[0]} {A.shape[1]}"]
    lines.extend(f"{z.real:.17g} {z.imag:.17g}" for z in A.ravel(order="C"))
    return "\n".join(lines) + "\n"


def parse_matrix(text, name="matrix"):
    """Parse the text format; raises ``ValueError`` on malformed input."""
    tokens = text.split()
    if len(tokens) < 2:
        raise ValueError(f"{name}: missing 'rows cols' header")
    try:
        rows, cols = int(tokens[0]), int(tokens[1])
        vals = np.array([float(t) for t in tokens[2:]], dtype=np.float64)
    except ValueError as exc:
        raise ValueError(f"{name}: {exc}") from None
    if rows < 0 or cols < 0:
        raise ValueError(f"{name}: negative dimensions {rows} x {cols}")
    if vals.size != 2 * rows * cols:
        raise ShapeMismatch(f"{name}: header says {rows} x {cols} but found {vals.size // 2} entries")
    if not np.all(np.isfinite(vals)):
        raise ValueError(f"{name}: non-finite entries")
    return (vals[0::2] + 1j * vals[1::2]).reshape(rows, cols)


def read_matrix(path):
    with open(path, encoding="utf-8") as fh:
        return parse_matrix(fh.read(), name=str(path))


def read_vector(path):
    """Read an ``n x 1`` or ``1 x n`` matrix file as a 1-D array."""
    A = read_matrix(path)
    if 1 not in A.shape:
        raise ShapeMismatch(f"{path}: expected a vector, got shape {A.shape}")
    return A.reshape(-1)


def atomic_write(path, data):
    """Write ``data`` (str) to ``path`` via a temporary file and rename."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_matrix(path, A):
    atomic_write(path, format_matrix(A))
