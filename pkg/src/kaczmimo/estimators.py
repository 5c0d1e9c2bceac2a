"""scikit-learn style wrappers around the matrix-mode Kaczmarz solvers.

``fit`` takes the channel estimate ``Q`` (M x K) in place of a design
matrix: the linear map is learned once per coherence block and then
applied to many received vectors (detector) or symbol vectors
(precoder), given as rows of a 2-D array.
"""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_matrix, check_nonnegative
from .channel import as_generator
from .kaczmarz import (
    apply_detector,
    apply_precoder,
    build_row_distribution,
    compute_linear_map,
    replay_linear_map,
    sample_rows,
)
from .rates import BudgetPolicy, budget_to_iterations

__all__ = ["KaczmarzDetector", "KaczmarzPrecoder"]


class _KaczmarzBase(BaseEstimator, TransformerMixin):
    _scheme = "proposed-ul"

    def __init__(self, xi=0.0, n_iter=None, budget_mk=40.0, random_state=None):
        self.xi = xi
        self.n_iter = n_iter
        self.budget_mk = budget_mk
        self.random_state = random_state

    def _iterations(self, M, K):
        if self.n_iter is not None:
            return int(self.n_iter)
        return budget_to_iterations(BudgetPolicy(self.budget_mk), M, K, self._scheme)

    def _rows(self, X, width):
        X = np.asarray(X, dtype=np.complex128)
        single = X.ndim == 1
        X = check_matrix(np.atleast_2d(X), "X", shape=(None, width))
        return X, single


class KaczmarzDetector(_KaczmarzBase):
    """Uplink detector ``s_hat = L_t Q^H y`` learned by Kaczmarz.

    Parameters
    ----------
    xi : float
        Regularization; 0 targets zero-forcing, ``1 / SNR`` the MMSE detector.
    n_iter : int, optional
        Iteration count. When None, derived from ``budget_mk``.
    budget_mk : float
        Complexity budget in units of ``M K`` MACs.
    random_state : int, Generator, RngStream or None

    Attributes
    ----------
    map_ : FactorizedLinearMap
    Q_ : ndarray of shape (M, K)
    n_iter_ : int
    """

    _scheme = "proposed-ul"

    def fit(self, Q, y=None):
        Q = check_matrix(Q, "Q")
        xi = check_nonnegative(self.xi, "xi")
        T = self._iterations(*Q.shape)
        idx = sample_rows(build_row_distribution(Q, xi), as_generator(self.random_state), T)
        # replaying the indices on unit inputs gives exactly the map of ul_detect
        self.map_ = replay_linear_map(Q, xi, idx)[-1]
        self.Q_ = Q
        self.n_iter_ = T
        return self

    def predict(self, Y):
        """Detect the rows of ``Y`` (received vectors, shape (n, M) or (M,))."""
        check_is_fitted(self, "map_")
        Y, single = self._rows(Y, self.Q_.shape[0])
        S = np.stack([apply_detector(self.map_, self.Q_, y) for y in Y])
        return S[0] if single else S

    def transform(self, Y):
        return self.predict(Y)


class KaczmarzPrecoder(_KaczmarzBase):
    """Downlink precoder ``x = Q W s`` learned by K parallel Kaczmarz runs.

    Parameters are as for :class:`KaczmarzDetector`; ``shared_indices``
    selects one common row sequence for all K runs.
    """

    _scheme = "proposed-dl"

    def __init__(self, xi=0.0, n_iter=None, budget_mk=40.0, shared_indices=True, random_state=None):
        super().__init__(xi=xi, n_iter=n_iter, budget_mk=budget_mk, random_state=random_state)
        self.shared_indices = shared_indices

    def fit(self, Q, y=None):
        Q = check_matrix(Q, "Q")
        xi = check_nonnegative(self.xi, "xi")
        T = self._iterations(*Q.shape)
        self.map_ = compute_linear_map(Q, xi, T, as_generator(self.random_state), self.shared_indices)
        self.Q_ = Q
        self.n_iter_ = T
        return self

    def transform(self, S):
        """Precode the rows of ``S`` (symbol vectors, shape (n, K) or (K,))."""
        check_is_fitted(self, "map_")
        S, single = self._rows(S, self.Q_.shape[1])
        X = np.stack([apply_precoder(self.map_, self.Q_, s) for s in S])
        return X[0] if single else X

    def predict(self, S):
        return self.transform(S)
