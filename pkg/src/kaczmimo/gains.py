"""Convergence gains of randomized Kaczmarz.

For a row distribution ``p`` over the rows ``a_i`` of ``A`` the average
projector is ``P = sum_i p_i a_i^H a_i / ||a_i||^2`` (rows are equation
coefficients, so ``a_i^H`` is a column). Its smallest eigenvalue on the
row space of ``A`` is the expected per-iteration contraction ``kappa``
of the squared error.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from ._validation import check_count, check_matrix, check_nonnegative
from .exceptions import RankDeficient, ShapeMismatch, ZeroRowWithPositiveWeight
from .kaczmarz import RowDistribution
from .numerics import eigh_hermitian, frobenius_sq, gram, min_eig_hermitian

__all__ = [
    "GainReport",
    "average_projector",
    "kappa_suboptimal",
    "kappa_closed_form_ul",
    "kappa_rmt",
    "optimal_row_distribution",
    "theorem1_envelope",
    "markov_tail",
    "gain_report",
]

log = logging.getLogger(__name__)

_RANK_RTOL = 1e-10


def _row_sq(A):
    return np.sum(A.real**2 + A.imag**2, axis=1)


def _probabilities(p, m):
    if isinstance(p, RowDistribution):
        p = p.probabilities
    p = np.asarray(p, dtype=np.float64)
    if p.shape != (m,):
        raise ShapeMismatch(f"p has shape {p.shape}, expected ({m},)")
    if np.any(p < 0) or not np.all(np.isfinite(p)):
        raise ValueError("p must be finite and nonnegative")
    return p / p.sum()


def average_projector(A, p):
    """``sum_i p_i a_i^H a_i / ||a_i||^2`` (n x n, unit trace).

    Parameters
    ----------
    A : (m, n) array_like
    p : RowDistribution or (m,) array_like
        Row probabilities; normalized internally.

    Raises
    ------
    ZeroRowWithPositiveWeight
        If a zero row carries positive probability.
    """
    A = check_matrix(A, "A")
    p = _probabilities(p, A.shape[0])
    rn = _row_sq(A)
    if np.any((rn == 0) & (p > 0)):
        raise ZeroRowWithPositiveWeight("a zero row has positive sampling probability")
    keep = p > 0
    An = A[keep] / np.sqrt(rn[keep])[:, None]
    P = (An.conj().T * p[keep]) @ An
    return 0.5 * (P + P.conj().T)


def _span_spectrum(A):
    # nonzero part of the spectrum of A^H A, from the smaller Gram matrix
    m, n = A.shape
    G = gram(A) if m >= n else gram(A.conj().T)
    w, V = eigh_hermitian(G)
    cut = _RANK_RTOL * max(w[-1], 0.0)
    return w[w > cut], w, V


def kappa_suboptimal(A):
    """Gain of norm-proportional sampling, ``lambda_min^+(A^H A) / ||A||_F^2``.

    The minimum is over the row space of ``A``, i.e. over the nonzero
    eigenvalues; for full column rank this is ``lambda_min(A^H A)``.
    """
    A = check_matrix(A, "A")
    fro = frobenius_sq(A)
    if fro == 0:
        return 0.0
    nz, _, _ = _span_spectrum(A)
    return float(nz[0] / fro) if nz.size else 0.0


def kappa_closed_form_ul(Q, xi):
    """``(lambda_min(Q^H Q) + xi) / (||Q||_F^2 + K xi)``.

    Gain of the uplink/downlink iterations, i.e. of ``[Q; sqrt(xi) I]^H``
    sampled proportionally to its squared row norms.
    """
    Q = check_matrix(Q, "Q")
    xi = check_nonnegative(xi, "xi")
    K = Q.shape[1]
    lam = max(min_eig_hermitian(gram(Q)), 0.0)
    den = frobenius_sq(Q) + K * xi
    return float((lam + xi) / den) if den > 0 else 0.0


def kappa_rmt(M, K):
    """Large-system approximation ``(sqrt(M) - sqrt(K))^2 / (M K)``."""
    M = check_count(M, "M")
    K = check_count(K, "K")
    if not M >= K >= 1:
        raise ValueError(f"need M >= K >= 1, got M={M}, K={K}")
    return (math.sqrt(M) - math.sqrt(K)) ** 2 / (M * K)


def optimal_row_distribution(A, iters=500, eta0=0.3):
    """Row distribution maximizing the gain, by entropic mirror ascent.

    ``kappa(p) = lambda_min(P(p))`` is concave in ``p``; a supergradient
    is ``g_i = |a_i v|^2 / ||a_i||^2`` for a unit min-eigenvector ``v``.
    Each step multiplies ``p`` by ``exp(eta0 * n * g / sqrt(j))`` and
    renormalizes, which keeps ``p`` on the simplex without projection.
    Starts from the norm-proportional distribution and returns the best
    iterate seen, so the result is never worse than that starting point.

    Parameters
    ----------
    A : (m, n) array_like
        Full column rank.
    iters : int
    eta0 : float
        Base step size; the effective step is ``eta0 * n / sqrt(j)``.

    Returns
    -------
    dist : RowDistribution
    kappa : float

    Raises
    ------
    RankDeficient
        If ``A`` does not have full column rank.
    """
    A = check_matrix(A, "A")
    m, n = A.shape
    iters = check_count(iters, "iters")
    rn = _row_sq(A)
    nz, _, _ = _span_spectrum(A)
    if m < n or nz.size < n:
        raise RankDeficient(f"A must have full column rank {n}")
    live = rn > 0
    An = np.zeros_like(A)
    An[live] = A[live] / np.sqrt(rn[live])[:, None]

    p = rn / rn.sum()
    logp = np.full(m, -np.inf)
    logp[live] = np.log(p[live])
    best_p, best_k = p, -np.inf
    V = None
    for j in range(1, iters + 2):
        P = (An.conj().T * p) @ An
        w, V = eigh_hermitian(0.5 * (P + P.conj().T), V0=V)
        if w[0] > best_k:
            best_k, best_p = float(w[0]), p
        if j == iters + 1:
            break
        if n > 1 and w[1] - w[0] < 1e-8:
            log.debug("near-degenerate minimum eigenvalue at step %d (gap %.2e)", j, w[1] - w[0])
        g = np.abs(An @ V[:, 0]) ** 2
        logp = logp + eta0 * n * g / math.sqrt(j)
        p = np.exp(logp - logp[live].max())
        p /= p.sum()
    return RowDistribution.from_weights(best_p), best_k


def theorem1_envelope(kappa, t, init_err):
    """Expected squared-error bound ``(1 - kappa)^t * init_err``."""
    if not 0.0 <= kappa <= 1.0:
        raise ValueError(f"kappa must lie in [0, 1], got {kappa}")
    t = check_count(t, "t")
    return (1.0 - kappa) ** t * float(init_err)


def markov_tail(kappa, t, init_err, zeta):
    """Bound on ``P[||x_t - x*||^2 >= zeta]`` from Markov's inequality, clamped to [0, 1]."""
    if not zeta > 0:
        raise ValueError(f"zeta must be positive, got {zeta}")
    return min(1.0, max(0.0, theorem1_envelope(kappa, t, init_err) / zeta))


@dataclass
class GainReport:
    """Gains of one matrix ``A`` (rows sampled, M x K)."""

    kappa_suboptimal: float
    kappa_closed_form: float
    kappa_rmt: float
    spectrum: list = field(default_factory=list)
    kappa_optimal: float = None
    bound: float = None

    def to_dict(self):
        return {
            "kappa_suboptimal": self.kappa_suboptimal,
            "kappa_optimal": self.kappa_optimal,
            "kappa_closed_form": self.kappa_closed_form,
            "kappa_rmt": self.kappa_rmt,
            "bound": self.bound,
            "spectrum": list(self.spectrum),
        }


def gain_report(A, xi=0.0, optimal=True, iters=500):
    """Collect all gain values for ``A``.

    ``spectrum`` holds the eigenvalues of the norm-proportional average
    projector, ``A^H A / ||A||_F^2``, on the row space.
    """
    A = check_matrix(A, "A")
    m, n = A.shape
    nz, _, _ = _span_spectrum(A)
    fro = frobenius_sq(A)
    report = GainReport(
        kappa_suboptimal=kappa_suboptimal(A),
        kappa_closed_form=kappa_closed_form_ul(A, xi),
        kappa_rmt=kappa_rmt(max(m, n), min(m, n)),
        spectrum=[float(x) for x in nz / fro],
        bound=1.0 / min(m, n),
    )
    if optimal:
        report.kappa_optimal = optimal_row_distribution(A, iters)[1]
    return report
