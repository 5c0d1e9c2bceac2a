"""Correlated Rayleigh channels, noisy estimates and seeded random streams.

SNR convention
--------------
``ChannelParams.snr_db`` is, by default, the *total* transmit power to
noise ratio, i.e. the SNR per receive antenna with K unit-gain users
(``snr_reference="total"``). Each uplink user then transmits ``P = 1/K``
of that total. With ``snr_reference="per-user"`` the value is read as
the per-user ratio ``P / sigma^2`` instead. Symbols are always drawn with
unit variance and the per-user ratio is folded into the noise variance.
"""

import functools
import math
from dataclasses import dataclass

import numpy as np

from ._validation import check_matrix, check_vector
from .exceptions import InvalidCorrelation
from .numerics import cholesky_lower

__all__ = [
    "STREAM_LABELS",
    "RngStream",
    "as_generator",
    "ChannelParams",
    "ChannelRealization",
    "complex_normal",
    "make_covariance",
    "sample_channel",
    "noisy_estimate",
    "uplink_observation",
    "draw_symbols",
    "realize",
]

STREAM_LABELS = ("channel", "estimate-noise", "rx-noise", "ka-rows", "symbols")


@dataclass(frozen=True)
class RngStream:
    """Identity of a reproducible random stream.

    The child seed is derived from ``(seed, label, trial)`` through
    :class:`numpy.random.SeedSequence` spawn keys, so trials can be drawn in
    any order, on any worker, and still produce the same numbers.
    Every call to :meth:`generator` restarts the stream.
    """

    seed: int
    label: str
    trial: int = 0

    def __post_init__(self):
        if self.label not in STREAM_LABELS:
            raise ValueError(f"unknown stream label {self.label!r}; expected one of {STREAM_LABELS}")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must fit in an unsigned 64-bit integer")
        if int(self.trial) < 0:
            raise ValueError("trial index must be non-negative")

    def generator(self):
        ss = np.random.SeedSequence(
            int(self.seed), spawn_key=(STREAM_LABELS.index(self.label), int(self.trial))
        )
        return np.random.Generator(np.random.PCG64(ss))


def as_generator(rng):
    """Coerce ``RngStream`` / ``Generator`` / int / None into a Generator."""
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


@dataclass(frozen=True)
class ChannelParams:
    """System dimensions and channel/noise parameters.

    Attributes
    ----------
    M, K : int
        Base-station antennas and single-antenna users, ``M >= K >= 1``.
    a : float
        Exponential antenna correlation, ``0 <= a < 1``.
    tau : float
        Estimation quality, ``Q = sqrt(1 - tau^2) H + tau N``.
    snr_db : float
        SNR in dB, read according to ``snr_reference`` (see module doc).
    snr_reference : {"total", "per-user"}
    """

    M: int
    K: int
    a: float = 0.0
    tau: float = 0.0
    snr_db: float = 20.0
    snr_reference: str = "total"

    def __post_init__(self):
        if not (int(self.M) >= int(self.K) >= 1):
            raise ValueError(f"need M >= K >= 1, got M={self.M}, K={self.K}")
        if not 0.0 <= self.a < 1.0:
            raise InvalidCorrelation(f"correlation a must lie in [0, 1), got {self.a}")
        if not 0.0 <= self.tau <= 1.0:
            raise ValueError(f"tau must lie in [0, 1], got {self.tau}")
        if self.snr_reference not in ("total", "per-user"):
            raise ValueError(f"snr_reference must be 'total' or 'per-user', got {self.snr_reference!r}")

    @property
    def snr_linear(self):
        return 10.0 ** (self.snr_db / 10.0)

    @property
    def user_snr(self):
        """Per-user uplink ratio ``P / sigma^2``."""
        if self.snr_reference == "total":
            return self.snr_linear / self.K
        return self.snr_linear

    @property
    def user_snr_db(self):
        return 10.0 * math.log10(self.user_snr) if self.user_snr > 0 else -math.inf

    @property
    def mmse_xi(self):
        """Regularization of the MMSE detector / RZF precoder."""
        return 1.0 / self.user_snr

    @property
    def dl_power(self):
        """Total downlink transmit power; the user noise variance is ``1 / snr_linear``."""
        return 1.0 if self.snr_reference == "total" else float(self.K)

    @property
    def dl_noise_var(self):
        return 1.0 / self.snr_linear


@dataclass(frozen=True)
class ChannelRealization:
    H: np.ndarray
    Q: np.ndarray
    params: ChannelParams


def complex_normal(rng, shape):
    """i.i.d. CN(0, 1) samples: independent real and imaginary parts of variance 1/2."""
    rng = as_generator(rng)
    re = rng.standard_normal(shape)
    im = rng.standard_normal(shape)
    return (re + 1j * im) * math.sqrt(0.5)


def make_covariance(M, a):
    """Exponential correlation matrix ``[Phi]_ij = a^|i-j|``."""
    if not 0.0 <= a < 1.0:
        raise InvalidCorrelation(f"correlation a must lie in [0, 1), got {a}")
    idx = np.arange(M)
    Phi = np.power(float(a), np.abs(idx[:, None] - idx[None, :]))
    return Phi.astype(np.complex128)


@functools.lru_cache(maxsize=16)
def _covariance_factor(M, a):
    L = cholesky_lower(make_covariance(M, a))
    L.setflags(write=False)
    return L


def sample_channel(params, rng):
    """Draw the true M x K channel; column k is ``L z_k`` with ``Phi = L L^H``.

    The Cholesky factor gives the same Gaussian law as the symmetric
    square root of ``Phi`` at a fraction of the cost.
    """
    Z = complex_normal(rng, (params.M, params.K))
    if params.a == 0.0:
        return Z
    return _covariance_factor(params.M, float(params.a)) @ Z


def noisy_estimate(H, tau, rng):
    """Channel estimate ``Q = sqrt(1 - tau^2) H + tau N`` with ``N`` i.i.d. CN(0, 1)."""
    H = check_matrix(H, "H")
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"tau must lie in [0, 1], got {tau}")
    if tau == 0.0:
        return H.copy()
    N = complex_normal(rng, H.shape)
    return math.sqrt(1.0 - tau * tau) * H + tau * N


def uplink_observation(H, s, snr_db, rng):
    """Received vector ``y = H s + n`` with ``n ~ CN(0, 10^(-snr_db/10) I)``.

    ``snr_db`` here is the per-user ratio ``P / sigma^2`` for unit-power
    symbols; pass ``math.inf`` for a noiseless observation.
    """
    H = check_matrix(H, "H")
    s = check_vector(s, "s", H.shape[1])
    y = H @ s
    sigma2 = 10.0 ** (-snr_db / 10.0)
    if sigma2 == 0.0:
        return y
    return y + math.sqrt(sigma2) * complex_normal(rng, H.shape[0])


def draw_symbols(K, rng, n=None):
    """Unit-variance Gaussian symbols, shape ``(K,)`` or ``(n, K)``."""
    shape = (K,) if n is None else (n, K)
    return complex_normal(rng, shape)


def realize(params, seed, trial):
    """Channel and estimate for Monte-Carlo trial ``trial`` of run ``seed``."""
    H = sample_channel(params, RngStream(seed, "channel", trial))
    Q = noisy_estimate(H, params.tau, RngStream(seed, "estimate-noise", trial))
    return ChannelRealization(H=H, Q=Q, params=params)
