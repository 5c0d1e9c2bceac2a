"""Randomized Kaczmarz solvers for regularized detection and precoding.

The uplink and downlink iterations work on the split iterate ``(u, v)``
with ``u = Q v``: a step on row ``r`` of ``[Q; sqrt(xi) I]^H`` touches all
of ``u`` but only ``v[r]``, and the ``sqrt(xi)`` factors cancel, so the
``xi = 0`` (zero-forcing) case needs no special handling.

Operation counts are in complex multiply-accumulates (MACs). One
iteration costs ``2 M`` for the inner product and the axpy plus
``ITER_OVERHEAD_OPS`` for the scalar work on ``v[r]``.
"""

from dataclasses import dataclass, field

import numba
import numpy as np

from ._validation import check_count, check_matrix, check_nonnegative, check_vector
from .channel import as_generator
from .exceptions import DegenerateDistribution, IndexOutOfRange, ShapeMismatch, ZeroRowSelected

__all__ = [
    "ITER_OVERHEAD_OPS",
    "RowDistribution",
    "KaState",
    "FactorizedLinearMap",
    "build_row_distribution",
    "sample_row",
    "sample_rows",
    "ka_basic",
    "ul_detect",
    "dl_precode",
    "ka_error_trace",
    "compute_linear_map",
    "replay_linear_map",
    "apply_detector",
    "apply_precoder",
]

ITER_OVERHEAD_OPS = 2


@dataclass(frozen=True)
class RowDistribution:
    """Sampling weights over row indices with a cumulative table.

    Attributes
    ----------
    weights : ndarray
        Nonnegative weight per row.
    total : float
        Sum of the weights (equal to ``cumulative[-1]``).
    cumulative : ndarray
        Running sums used for inverse-CDF sampling by binary search.
    ops : int
        MACs spent building the table.
    """

    weights: np.ndarray
    total: float
    cumulative: np.ndarray
    ops: int = 0

    @classmethod
    def from_weights(cls, weights, ops=0):
        w = np.asarray(weights, dtype=np.float64)
        if w.ndim != 1 or w.size == 0:
            raise ShapeMismatch("weights must be a non-empty 1-D array")
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise ValueError("weights must be finite and nonnegative")
        cum = np.cumsum(w)
        total = float(cum[-1])
        if not total > 0:
            raise DegenerateDistribution("row weights sum to zero")
        w.setflags(write=False)
        cum.setflags(write=False)
        return cls(weights=w, total=total, cumulative=cum, ops=int(ops))

    @property
    def probabilities(self):
        return self.weights / self.total

    def __len__(self):
        return self.weights.shape[0]


def build_row_distribution(Q, xi):
    """Weights ``||q_i||^2 + xi`` over the columns ``q_i`` of ``Q``.

    These are the squared row norms of ``[Q; sqrt(xi) I]^H``.
    """
    Q = check_matrix(Q, "Q")
    xi = check_nonnegative(xi, "xi")
    col_sq = np.sum(Q.real**2 + Q.imag**2, axis=0)
    return RowDistribution.from_weights(col_sq + xi, ops=Q.size)


def sample_rows(dist, rng, n):
    """Draw ``n`` i.i.d. row indices; binary search in the cumulative table."""
    n = check_count(n, "n")
    rng = as_generator(rng)
    x = rng.random(n) * dist.total
    idx = np.searchsorted(dist.cumulative, x, side="right")
    # x < total always, so idx < len; the clip only guards rounding in cumsum
    return np.minimum(idx, len(dist) - 1).astype(np.int64)


def sample_row(dist, rng):
    """Draw one row index with probability ``weight_i / total``."""
    return int(sample_rows(dist, rng, 1)[0])


@dataclass
class KaState:
    """Final state of a Kaczmarz run.

    ``u`` and ``v`` are the split iterate (``u == Q v`` up to rounding),
    ``t`` the number of iterations, ``ops`` the MAC count and
    ``indices`` the row sequence that was used.
    """

    u: np.ndarray
    v: np.ndarray
    t: int = 0
    ops: int = 0
    indices: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def coupling_residual(self, Q):
        """``||u - Q v||``, zero in exact arithmetic."""
        return float(np.linalg.norm(self.u - Q @ self.v))


@dataclass(frozen=True)
class FactorizedLinearMap:
    """K x K matrix ``W`` applied together with the channel estimate.

    The detector is ``W^H Q^H`` and the precoder ``Q W``; neither is
    ever formed as a dense M x K matrix.
    """

    W: np.ndarray
    index_log: np.ndarray = None
    t: int = 0

    @property
    def K(self):
        return self.W.shape[0]


# -- numba kernels ---------------------------------------------------------
# Qt is Q transposed (K x M, C order) so that column q_r is a contiguous row.


@numba.njit(cache=True)
def _ul_core(Qt, c, xi, rhs, idx, u, v):
    M = Qt.shape[1]
    for t in range(idx.shape[0]):
        r = idx[t]
        acc = 0j
        for m in range(M):
            acc += Qt[r, m].conjugate() * u[m]
        g = (rhs[r] - acc - xi * v[r]) / c[r]
        for m in range(M):
            u[m] += g * Qt[r, m]
        v[r] += g


@numba.njit(cache=True)
def _ul_trace_core(Qt, c, xi, rhs, idx, u, v, u_ref, v_ref, err_u, err_v):
    M = Qt.shape[1]
    K = v.shape[0]
    for t in range(idx.shape[0]):
        r = idx[t]
        acc = 0j
        for m in range(M):
            acc += Qt[r, m].conjugate() * u[m]
        g = (rhs[r] - acc - xi * v[r]) / c[r]
        eu = 0.0
        for m in range(M):
            u[m] += g * Qt[r, m]
            d = u[m] - u_ref[m]
            eu += d.real * d.real + d.imag * d.imag
        v[r] += g
        ev = 0.0
        for k in range(K):
            d = v[k] - v_ref[k]
            ev += d.real * d.real + d.imag * d.imag
        err_u[t] = eu
        err_v[t] = ev


@numba.njit(cache=True)
def _matrix_core(Qt, c, xi, idx, U, V):
    # column j of (U, V) is the run driven by the unit input e_j
    M = Qt.shape[1]
    K = V.shape[0]
    g = np.empty(K, dtype=np.complex128)
    for t in range(idx.shape[0]):
        r = idx[t]
        for j in range(K):
            g[j] = -xi * V[r, j]
        g[r] += 1.0
        for m in range(M):
            qc = Qt[r, m].conjugate()
            for j in range(K):
                g[j] -= qc * U[m, j]
        for j in range(K):
            g[j] /= c[r]
        for m in range(M):
            qm = Qt[r, m]
            for j in range(K):
                U[m, j] += qm * g[j]
        for j in range(K):
            V[r, j] += g[j]


@numba.njit(cache=True)
def _basic_core(A, rn, b, idx, x):
    n = A.shape[1]
    for t in range(idx.shape[0]):
        r = idx[t]
        if rn[r] == 0.0:
            return t
        acc = 0j
        for j in range(n):
            acc += A[r, j] * x[j]
        g = (b[r] - acc) / rn[r]
        for j in range(n):
            x[j] += g * A[r, j].conjugate()
    return -1


def _prepare(Q, xi, dist, build=True):
    Q = check_matrix(Q, "Q")
    xi = check_nonnegative(xi, "xi")
    if dist is None and build:
        dist = build_row_distribution(Q, xi)
    elif dist is not None and len(dist) != Q.shape[1]:
        raise ShapeMismatch(f"distribution has {len(dist)} rows, Q has {Q.shape[1]} columns")
    c = np.sum(Q.real**2 + Q.imag**2, axis=0) + xi
    return Q, xi, dist, np.ascontiguousarray(Q.T), c


def _check_indices(indices, K):
    idx = np.ascontiguousarray(indices, dtype=np.int64).reshape(-1)
    if idx.size and (idx.min() < 0 or idx.max() >= K):
        raise IndexOutOfRange(f"row indices must lie in [0, {K}), got range [{idx.min()}, {idx.max()}]")
    return idx


def _draw_or_check(dist, rng, T, indices, K):
    if indices is not None:
        return _check_indices(indices, K)
    return sample_rows(dist, rng, check_count(T, "T"))


def iteration_cost(M):
    """MACs per Kaczmarz iteration of the uplink/downlink solvers."""
    return 2 * M + ITER_OVERHEAD_OPS


def ka_basic(A, b, T, rng=None, init=None, weights=None):
    """Plain randomized Kaczmarz on ``A x = b``.

    Each step projects the iterate onto the hyperplane of one sampled
    equation, ``x += (b_r - a_r x) / ||a_r||^2 * a_r^H``.

    Parameters
    ----------
    A : (m, n) array_like
    b : (m,) array_like
    T : int
        Number of iterations.
    rng : RngStream, Generator, int or None
    init : (n,) array_like, optional
        Starting point, zero by default.
    weights : (m,) array_like, optional
        Row sampling weights. Defaults to the squared row norms.

    Raises
    ------
    ZeroRowSelected
        If a sampled row has zero norm (only possible with custom weights).
    """
    A = check_matrix(A, "A")
    m, n = A.shape
    b = check_vector(b, "b", m)
    x = np.zeros(n, dtype=np.complex128) if init is None else check_vector(init, "init", n).copy()
    rn = np.sum(A.real**2 + A.imag**2, axis=1)
    dist = RowDistribution.from_weights(rn if weights is None else weights)
    if len(dist) != m:
        raise ShapeMismatch(f"weights has length {len(dist)}, expected {m}")
    idx = sample_rows(dist, rng, check_count(T, "T"))
    bad = _basic_core(A, rn, b, idx, x)
    if bad >= 0:
        raise ZeroRowSelected(f"row {idx[bad]} has zero norm (iteration {bad})")
    return x


def ul_detect(Q, y, xi, T, rng=None, *, indices=None, dist=None):
    """Uplink Kaczmarz detector.

    Approximates ``(Q^H Q + xi I)^{-1} Q^H y``; ``xi = 0`` targets the
    zero-forcing solution.

    Parameters
    ----------
    Q : (M, K) array_like
        Channel estimate.
    y : (M,) array_like
        Received vector.
    xi : float
        Regularization, ``>= 0``.
    T : int
        Iterations. Ignored when ``indices`` is given.
    rng : RngStream, Generator, int or None
        Source of the row indices.
    indices : array_like of int, optional
        Explicit row sequence to replay instead of sampling.
    dist : RowDistribution, optional
        Precomputed distribution for ``(Q, xi)``; its build cost is then
        not charged again.

    Returns
    -------
    s_hat : (K,) ndarray
    state : KaState
    """
    given = dist is not None
    Q, xi, dist, Qt, c = _prepare(Q, xi, dist)
    M, K = Q.shape
    y = check_vector(y, "y", M)
    b = Q.conj().T @ y
    idx = _draw_or_check(dist, rng, T, indices, K)
    u = np.zeros(M, dtype=np.complex128)
    v = np.zeros(K, dtype=np.complex128)
    _ul_core(Qt, c, xi, b, idx, u, v)
    ops = (0 if given else dist.ops) + M * K + idx.size * iteration_cost(M)
    return v.copy(), KaState(u=u, v=v, t=int(idx.size), ops=int(ops), indices=idx)


def dl_precode(Q, s, xi, T, rng=None, *, indices=None, dist=None):
    """Downlink Kaczmarz precoder.

    Approximates ``Q (Q^H Q + xi I)^{-1} s`` (before power scaling).

    Returns
    -------
    x : (M,) ndarray
        Precoded vector ``Q w``.
    w : (K,) ndarray
    state : KaState
    """
    given = dist is not None
    Q, xi, dist, Qt, c = _prepare(Q, xi, dist)
    M, K = Q.shape
    s = check_vector(s, "s", K)
    idx = _draw_or_check(dist, rng, T, indices, K)
    u = np.zeros(M, dtype=np.complex128)
    v = np.zeros(K, dtype=np.complex128)
    _ul_core(Qt, c, xi, s, idx, u, v)
    x = Q @ v
    ops = (0 if given else dist.ops) + idx.size * iteration_cost(M) + M * K
    return x, v.copy(), KaState(u=u, v=v, t=int(idx.size), ops=int(ops), indices=idx)


def ka_error_trace(Q, rhs, xi, indices, u_ref, v_ref):
    """Per-iteration squared errors of the split iterate.

    Runs the uplink/downlink recursion with right-hand side ``rhs``
    (``Q^H y`` or ``s``) along ``indices`` and records, after every step,
    ``||u - u_ref||^2`` and ``||v - v_ref||^2``.

    Returns
    -------
    err_u, err_v : (T,) ndarray
    state : KaState
    """
    Q, xi, _, Qt, c = _prepare(Q, xi, None, build=False)
    M, K = Q.shape
    rhs = check_vector(rhs, "rhs", K)
    u_ref = check_vector(u_ref, "u_ref", M)
    v_ref = check_vector(v_ref, "v_ref", K)
    idx = _check_indices(indices, K)
    u = np.zeros(M, dtype=np.complex128)
    v = np.zeros(K, dtype=np.complex128)
    err_u = np.empty(idx.size)
    err_v = np.empty(idx.size)
    _ul_trace_core(Qt, c, xi, rhs, idx, u, v, u_ref, v_ref, err_u, err_v)
    state = KaState(u=u, v=v, t=int(idx.size), ops=int(idx.size * iteration_cost(M)), indices=idx)
    return err_u, err_v, state


def _normalize_checkpoints(checkpoints, T):
    if checkpoints is None:
        return [T]
    cps = sorted({int(t) for t in checkpoints})
    if cps and (cps[0] < 0 or cps[-1] > T):
        raise IndexOutOfRange(f"checkpoints must lie in [0, {T}]")
    return cps


def _iter_unit_runs(Qt, c, xi, idx, checkpoints):
    # yields (t, V_t) for the K unit-input runs sharing one index sequence
    M = Qt.shape[1]
    K = Qt.shape[0]
    U = np.zeros((M, K), dtype=np.complex128)
    V = np.zeros((K, K), dtype=np.complex128)
    done = 0
    for t in checkpoints:
        _matrix_core(Qt, c, xi, idx[done:t], U, V)
        done = t
        yield t, V


def compute_linear_map(Q, xi, T, rng=None, shared_indices=True, *, indices=None):
    """Precoding map from K Kaczmarz runs with unit inputs ``e_1 .. e_K``.

    ``W`` approximates ``(Q^H Q + xi I)^{-1}``. With ``shared_indices`` one
    row sequence drives all K runs and is kept in ``index_log``; otherwise
    each run draws its own sequence (``index_log`` then has shape (K, T)).
    """
    Q, xi, dist, Qt, c = _prepare(Q, xi, None)
    K = Q.shape[1]
    if shared_indices:
        idx = _draw_or_check(dist, rng, T, indices, K)
        (_, V), = _iter_unit_runs(Qt, c, xi, idx, [idx.size])
        return FactorizedLinearMap(W=V.copy(), index_log=idx, t=int(idx.size))
    gen = as_generator(rng)
    T = check_count(T, "T")
    logs = np.empty((K, T), dtype=np.int64)
    W = np.zeros((K, K), dtype=np.complex128)
    M = Q.shape[0]
    for j in range(K):
        logs[j] = sample_rows(dist, gen, T)
        e = np.zeros(K, dtype=np.complex128)
        e[j] = 1.0
        u = np.zeros(M, dtype=np.complex128)
        _ul_core(Qt, c, xi, e, logs[j], u, W[:, j])
    return FactorizedLinearMap(W=W, index_log=logs, t=T)


def replay_linear_map(Q, xi, indices, checkpoints=None):
    """Linear detector maps ``s_hat_t = L_t (Q^H y)`` along a fixed row sequence.

    The uplink iterate is linear in ``b = Q^H y`` once the indices are
    fixed; ``L_t`` is obtained by running the recursion on the K unit
    vectors. The returned maps store ``W = L_t^H`` so that
    :func:`apply_detector` reproduces the uplink run.

    Parameters
    ----------
    Q : (M, K) array_like
    xi : float
    indices : sequence of int
        Row sequence, each entry in ``[0, K)``.
    checkpoints : iterable of int, optional
        Iteration counts at which to emit a snapshot. Defaults to the
        length of ``indices``.

    Returns
    -------
    list of FactorizedLinearMap
        One snapshot per checkpoint, in increasing order of ``t``.
    """
    Q, xi, _, Qt, c = _prepare(Q, xi, None, build=False)
    idx = _check_indices(indices, Q.shape[1])
    cps = _normalize_checkpoints(checkpoints, idx.size)
    return [
        FactorizedLinearMap(W=V.conj().T.copy(), index_log=idx[:t], t=t)
        for t, V in _iter_unit_runs(Qt, c, xi, idx, cps)
    ]


def _check_map(lmap, Q):
    Q = check_matrix(Q, "Q")
    W = np.asarray(lmap.W)
    K = Q.shape[1]
    if W.shape != (K, K):
        raise ShapeMismatch(f"W has shape {W.shape}, expected ({K}, {K})")
    return Q, W


def apply_detector(lmap, Q, y):
    """``W^H (Q^H y)``, costing ``M K + K^2`` MACs."""
    Q, W = _check_map(lmap, Q)
    y = check_vector(y, "y", Q.shape[0])
    return W.conj().T @ (Q.conj().T @ y)


def apply_precoder(lmap, Q, s):
    """``Q (W s)``, costing ``K^2 + M K`` MACs."""
    Q, W = _check_map(lmap, Q)
    s = check_vector(s, "s", Q.shape[1])
    return Q @ (W @ s)
