"""Dense complex linear algebra used throughout the package.

Matrices are C-ordered (row-major) ``complex128`` arrays everywhere; see
:mod:`kaczmimo._validation`. Every eigen-solve in the package is K x K
with K at most a few tens, so a cyclic Jacobi method is accurate and
fast enough, and Cholesky is written out directly.
"""

import numba
import numpy as np

from ._validation import check_matrix
from .exceptions import NotHermitian, NotPositiveDefinite, ShapeMismatch

__all__ = [
    "gram",
    "frobenius_sq",
    "cholesky_lower",
    "solve_hpd",
    "eigh_hermitian",
    "min_eig_hermitian",
]

_PIVOT_RTOL = 1e-14
_HERMITIAN_RTOL = 1e-12


def gram(A):
    """Return the Gram matrix ``A^H A``."""
    A = check_matrix(A, "A")
    G = A.conj().T @ A
    # symmetrize away rounding so downstream Hermitian checks are exact
    return 0.5 * (G + G.conj().T)


def frobenius_sq(A):
    """Squared Frobenius norm, sum of ``|a_ij|^2``."""
    A = np.asarray(A, dtype=np.complex128)
    return float(np.sum(A.real**2 + A.imag**2))


def cholesky_lower(S):
    """Lower-triangular ``L`` with ``S = L L^H``.

    Raises
    ------
    NotPositiveDefinite
        If a pivot falls at or below ``1e-14 * trace(S) / n``.
    """
    S = check_matrix(S, "S")
    n = S.shape[0]
    if S.shape[1] != n:
        raise ShapeMismatch(f"S must be square, got {S.shape}")
    floor = _PIVOT_RTOL * max(float(np.trace(S).real), 0.0) / n
    L = np.zeros_like(S)
    for j in range(n):
        row = L[j, :j]
        d = S[j, j].real - float(np.sum(row.real**2 + row.imag**2))
        if not d > floor:
            raise NotPositiveDefinite(
                f"pivot {j} is {d:.3e}, not above {floor:.3e}"
            )
        L[j, j] = np.sqrt(d)
        if j + 1 < n:
            L[j + 1:, j] = (S[j + 1:, j] - L[j + 1:, :j] @ row.conj()) / L[j, j].real
    return L


def _forward(L, b):
    y = np.empty_like(b)
    for i in range(L.shape[0]):
        y[i] = (b[i] - L[i, :i] @ y[:i]) / L[i, i].real
    return y


def _backward_adjoint(L, y):
    # solves L^H x = y
    n = L.shape[0]
    x = np.empty_like(y)
    LH = L.conj().T
    for i in range(n - 1, -1, -1):
        x[i] = (y[i] - LH[i, i + 1:] @ x[i + 1:]) / L[i, i].real
    return x


def solve_hpd(S, b):
    """Solve ``S x = b`` for Hermitian positive definite ``S``.

    ``b`` may be a vector or a matrix of right-hand sides (one per
    column). Uses the Cholesky factorization from :func:`cholesky_lower`.
    """
    L = cholesky_lower(S)
    b = np.asarray(b, dtype=np.complex128)
    if b.shape[0] != L.shape[0]:
        raise ShapeMismatch(f"b has leading dimension {b.shape[0]}, expected {L.shape[0]}")
    return _backward_adjoint(L, _forward(L, b))


@numba.njit(cache=True)
def _jacobi_sweeps(A, V, tol, max_sweeps):
    n = A.shape[0]
    for sweep in range(max_sweeps):
        off = 0.0
        for p in range(n):
            for q in range(p + 1, n):
                off += A[p, q].real ** 2 + A[p, q].imag ** 2
        if np.sqrt(2.0 * off) <= tol:
            return sweep
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                mag = abs(apq)
                if mag == 0.0:
                    continue
                e = apq / mag
                tau = (A[q, q].real - A[p, p].real) / (2.0 * mag)
                if tau >= 0.0:
                    t = 1.0 / (tau + np.sqrt(1.0 + tau * tau))
                else:
                    t = -1.0 / (-tau + np.sqrt(1.0 + tau * tau))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                ebar = e.conjugate()
                # columns: A <- A J, with J_pp=c, J_pq=s, J_qp=-s*ebar, J_qq=c*ebar
                for i in range(n):
                    aip = A[i, p]
                    aiq = A[i, q]
                    A[i, p] = c * aip - s * ebar * aiq
                    A[i, q] = s * aip + c * ebar * aiq
                    vip = V[i, p]
                    viq = V[i, q]
                    V[i, p] = c * vip - s * ebar * viq
                    V[i, q] = s * vip + c * ebar * viq
                # rows: A <- J^H A
                for j in range(n):
                    apj = A[p, j]
                    aqj = A[q, j]
                    A[p, j] = c * apj - s * e * aqj
                    A[q, j] = s * apj + c * e * aqj
                A[p, q] = 0.0
                A[q, p] = 0.0
                A[p, p] = A[p, p].real
                A[q, q] = A[q, q].real
    return max_sweeps


def _check_hermitian(S):
    S = check_matrix(S, "S")
    if S.shape[0] != S.shape[1]:
        raise ShapeMismatch(f"S must be square, got {S.shape}")
    scale = np.sqrt(frobenius_sq(S))
    skew = np.max(np.abs(S - S.conj().T)) if S.size else 0.0
    if skew > _HERMITIAN_RTOL * scale:
        raise NotHermitian(f"max |S - S^H| = {skew:.3e} exceeds {_HERMITIAN_RTOL:g} * ||S||_F")
    return S, scale


def eigh_hermitian(S, V0=None, max_sweeps=60):
    """Full eigendecomposition of a Hermitian matrix by cyclic Jacobi.

    Parameters
    ----------
    S : (n, n) array_like
        Hermitian matrix.
    V0 : (n, n) array_like, optional
        Unitary warm start (e.g. the eigenvectors of a nearby matrix);
        Jacobi then only has to clean up a nearly diagonal matrix.
    max_sweeps : int
        Upper bound on full sweeps over all ``(p, q)`` pairs.

    Returns
    -------
    w : (n,) ndarray
        Eigenvalues in ascending order.
    V : (n, n) ndarray
        Unitary matrix whose columns are the matching eigenvectors.

    Raises
    ------
    NotHermitian
        If ``max |S - S^H| > 1e-12 * ||S||_F``.
    """
    S, scale = _check_hermitian(S)
    n = S.shape[0]
    A = 0.5 * (S + S.conj().T)
    if V0 is None:
        V = np.eye(n, dtype=np.complex128)
    else:
        V = np.array(V0, dtype=np.complex128, order="C")
        A = V.conj().T @ A @ V
    A = np.ascontiguousarray(A)
    _jacobi_sweeps(A, V, 1e-15 * max(scale, np.finfo(float).tiny), max_sweeps)
    w = A.diagonal().real.copy()
    order = np.argsort(w, kind="stable")
    return w[order], np.ascontiguousarray(V[:, order])


def min_eig_hermitian(S):
    """Smallest eigenvalue of a Hermitian matrix."""
    return float(eigh_hermitian(S)[0][0])
