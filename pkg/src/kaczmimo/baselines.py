"""Exact linear transceivers and two reference Kaczmarz variants.

``naive_ka_od`` runs plain Kaczmarz on the overdetermined, noisy system
``H s = y``; it ends up fluctuating around a point that is not the
least-squares solution. ``herman_ka`` solves the consistent
underdetermined system ``[H, sqrt(xi) I_M] [s; n] = y`` instead, whose
minimum-norm solution has ``s`` equal to the MMSE estimate, but with a
much smaller gain than the uplink solver.

The ``*_detector`` functions return the same estimators as explicit
K x M matrices, which is what the rate computations need.
"""

import math
from dataclasses import dataclass

import numba
import numpy as np

from ._validation import check_count, check_matrix, check_nonnegative, check_vector
from .exceptions import ShapeMismatch, ZeroSignal
from .gains import kappa_suboptimal
from .kaczmarz import RowDistribution, ka_basic, sample_rows
from .numerics import frobenius_sq, gram, solve_hpd

__all__ = [
    "PrecoderOutput",
    "detect_direct",
    "precode_direct",
    "direct_map",
    "mrc",
    "naive_ka_od",
    "herman_ka",
    "naive_ka_detector",
    "herman_ka_detector",
    "naive_ka_detector_snapshots",
    "herman_ka_detector_snapshots",
    "herman_gains",
]


@dataclass(frozen=True)
class PrecoderOutput:
    x: np.ndarray
    beta: float


def _regularized_gram(Q, xi):
    G = gram(Q)
    G[np.diag_indices_from(G)] += xi
    return G


def detect_direct(Q, y, xi):
    """``(Q^H Q + xi I)^{-1} Q^H y``: ZF for ``xi = 0``, MMSE for ``xi = 1/SNR``.

    Raises
    ------
    NotPositiveDefinite
        If ``Q`` is rank deficient and ``xi = 0``.
    """
    Q = check_matrix(Q, "Q")
    y = check_vector(y, "y", Q.shape[0])
    xi = check_nonnegative(xi, "xi")
    return solve_hpd(_regularized_gram(Q, xi), Q.conj().T @ y)


def direct_map(Q, xi):
    """``(Q^H Q + xi I)^{-1}``, the K x K factor shared by ZF/MMSE/ZFBF/RZFBF."""
    Q = check_matrix(Q, "Q")
    xi = check_nonnegative(xi, "xi")
    return solve_hpd(_regularized_gram(Q, xi), np.eye(Q.shape[1], dtype=np.complex128))


def precode_direct(Q, s, xi, p_tx=1.0, normalize=True):
    """Regularized zero-forcing precoding ``x = beta Q (Q^H Q + xi I)^{-1} s``.

    ``beta`` scales the realized vector to ``||x||^2 = p_tx``; with
    ``normalize=False`` it is fixed to 1.

    Raises
    ------
    ZeroSignal
        If normalization is requested and the unscaled vector is zero.
    """
    Q = check_matrix(Q, "Q")
    s = check_vector(s, "s", Q.shape[1])
    xi = check_nonnegative(xi, "xi")
    x = Q @ solve_hpd(_regularized_gram(Q, xi), s)
    if not normalize:
        return PrecoderOutput(x=x, beta=1.0)
    nrm = float(np.linalg.norm(x))
    if nrm == 0.0:
        raise ZeroSignal("cannot normalize a zero precoded vector")
    beta = math.sqrt(p_tx) / nrm
    return PrecoderOutput(x=beta * x, beta=beta)


def mrc(Q, y):
    """Maximum ratio combining, ``Q^H y``."""
    Q = check_matrix(Q, "Q")
    y = check_vector(y, "y", Q.shape[0])
    return Q.conj().T @ y


def naive_ka_od(H, y, T, rng=None):
    """Plain randomized Kaczmarz on ``H s = y`` over the M rows of ``H``."""
    H = check_matrix(H, "H")
    y = check_vector(y, "y", H.shape[0])
    return ka_basic(H, y, T, rng)


@numba.njit(cache=True)
def _herman_core(H, rn, sxi, y, idx, s, n):
    K = H.shape[1]
    for t in range(idx.shape[0]):
        r = idx[t]
        acc = 0j
        for k in range(K):
            acc += H[r, k] * s[k]
        g = (y[r] - acc - sxi * n[r]) / rn[r]
        for k in range(K):
            s[k] += g * H[r, k].conjugate()
        n[r] += sxi * g


def _herman_setup(H, xi, T, rng):
    H = check_matrix(H, "H")
    xi = check_nonnegative(xi, "xi")
    if not xi > 0:
        raise ValueError("herman_ka needs xi > 0")
    rn = np.sum(H.real**2 + H.imag**2, axis=1) + xi
    idx = sample_rows(RowDistribution.from_weights(rn), rng, check_count(T, "T"))
    return H, xi, rn, idx


def herman_ka(H, y, xi, T, rng=None):
    """Kaczmarz on ``[H, sqrt(xi) I_M] [s; n] = y``; returns the ``s`` part.

    Rows are sampled proportionally to ``||h_r||^2 + xi``.
    """
    H, xi, rn, idx = _herman_setup(H, xi, T, rng)
    y = check_vector(y, "y", H.shape[0])
    s = np.zeros(H.shape[1], dtype=np.complex128)
    n = np.zeros(H.shape[0], dtype=np.complex128)
    _herman_core(H, rn, math.sqrt(xi), y, idx, s, n)
    return s


@numba.njit(cache=True)
def _naive_map_core(H, rn, idx, X):
    # X is K x M; column j is the iterate for input y = e_j
    M = H.shape[0]
    K = H.shape[1]
    g = np.empty(M, dtype=np.complex128)
    for t in range(idx.shape[0]):
        r = idx[t]
        for j in range(M):
            g[j] = 0.0
        g[r] = 1.0
        for k in range(K):
            h = H[r, k]
            for j in range(M):
                g[j] -= h * X[k, j]
        for j in range(M):
            g[j] /= rn[r]
        for k in range(K):
            hc = H[r, k].conjugate()
            for j in range(M):
                X[k, j] += hc * g[j]


@numba.njit(cache=True)
def _herman_map_core(H, rn, sxi, idx, X, N):
    M = H.shape[0]
    K = H.shape[1]
    g = np.empty(M, dtype=np.complex128)
    for t in range(idx.shape[0]):
        r = idx[t]
        for j in range(M):
            g[j] = -sxi * N[r, j]
        g[r] += 1.0
        for k in range(K):
            h = H[r, k]
            for j in range(M):
                g[j] -= h * X[k, j]
        for j in range(M):
            g[j] /= rn[r]
        for k in range(K):
            hc = H[r, k].conjugate()
            for j in range(M):
                X[k, j] += hc * g[j]
        for j in range(M):
            N[r, j] += sxi * g[j]


def _snapshots(core, state, idx, checkpoints, args):
    cps = sorted({int(t) for t in checkpoints})
    if cps and (cps[0] < 0 or cps[-1] > idx.size):
        raise ValueError(f"checkpoints must lie in [0, {idx.size}]")
    out, done = [], 0
    for t in cps:
        core(*args, idx[done:t], *state)
        done = t
        out.append(state[0].copy())
    return out


def naive_ka_detector_snapshots(H, checkpoints, rng=None):
    """K x M matrices ``G_t`` with ``naive_ka_od(H, y, t) = G_t y``, one per checkpoint.

    All snapshots come from one run, so they share the index sequence of
    ``naive_ka_od`` called with the same ``rng`` and ``T = max(checkpoints)``.
    """
    H = check_matrix(H, "H")
    rn = np.sum(H.real**2 + H.imag**2, axis=1)
    T = max(checkpoints, default=0)
    idx = sample_rows(RowDistribution.from_weights(rn), rng, check_count(T, "T"))
    X = np.zeros((H.shape[1], H.shape[0]), dtype=np.complex128)
    return _snapshots(_naive_map_core, (X,), idx, checkpoints, (H, rn))


def herman_ka_detector_snapshots(H, xi, checkpoints, rng=None):
    """Snapshot matrices of :func:`herman_ka`, as for :func:`naive_ka_detector_snapshots`."""
    H, xi, rn, idx = _herman_setup(H, xi, max(checkpoints, default=0), rng)
    M, K = H.shape
    X = np.zeros((K, M), dtype=np.complex128)
    N = np.zeros((M, M), dtype=np.complex128)
    return _snapshots(_herman_map_core, (X, N), idx, checkpoints, (H, rn, math.sqrt(xi)))


def naive_ka_detector(H, T, rng=None):
    """K x M matrix ``G_T`` with ``naive_ka_od(H, y, T) = G_T y`` for the same ``rng``."""
    return naive_ka_detector_snapshots(H, [T], rng)[0]


def herman_ka_detector(H, xi, T, rng=None):
    """K x M matrix ``G_T`` with ``herman_ka(H, y, xi, T) = G_T y`` for the same ``rng``."""
    return herman_ka_detector_snapshots(H, xi, [T], rng)[0]


def herman_gains(H, xi):
    """Measured and printed-formula gains of the augmented system.

    Returns a dict with ``measured`` (norm-proportional gain of
    ``[H, sqrt(xi) I_M]`` on its row space) and the two candidate closed
    forms ``xi / (||H||_F^2 + K xi)`` and ``xi / (||H||_F^2 + M xi)``.
    """
    H = check_matrix(H, "H")
    xi = check_nonnegative(xi, "xi")
    M, K = H.shape
    if H.shape[0] < 1:
        raise ShapeMismatch("H must have at least one row")
    aug = np.hstack([H, math.sqrt(xi) * np.eye(M, dtype=np.complex128)])
    fro = frobenius_sq(H)
    return {
        "measured": kappa_suboptimal(aug),
        "formula_K": xi / (fro + K * xi),
        "formula_M": xi / (fro + M * xi),
    }
