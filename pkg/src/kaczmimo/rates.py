"""Ergodic rate bounds and the Monte-Carlo driver.

For a linear detector (or precoder) the effective K x K channel ``T``
and per-user noise powers ``sigma2`` determine two estimates of the
ergodic per-user rate, both in bit/s/Hz:

* upper bound: the average of ``log2(1 + SINR_k)`` over realizations,
  with interference treated as noise;
* lower bound: ``log2(1 + |E T_kk|^2 / (Var T_kk + sum_k' E|T_kk'|^2 + E sigma2_k))``,
  which only needs the first two moments of the effective channel.

Iterative schemes are charged against a budget in units of ``M K``
multiply-accumulates, see :func:`budget_to_iterations`.
"""

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import partial

import numpy as np

from ._validation import check_matrix
from .baselines import direct_map, herman_ka_detector_snapshots, naive_ka_detector_snapshots
from .channel import ChannelParams, RngStream, realize
from .exceptions import (
    BudgetTooSmall,
    DegenerateSINR,
    InsufficientSamples,
    KaczmimoError,
    NonpositiveReference,
    ShapeMismatch,
    TrialFailure,
)
from .kaczmarz import FactorizedLinearMap, build_row_distribution, replay_linear_map, sample_rows
from .numerics import frobenius_sq, gram

__all__ = [
    "SCHEMES",
    "InterferenceSample",
    "RateAccumulators",
    "BudgetPolicy",
    "RateEstimate",
    "SchemeSpec",
    "parse_scheme",
    "interference_ul",
    "interference_dl",
    "interference_from_detector",
    "rate_upper_sample",
    "rate_lower",
    "budget_to_iterations",
    "budget_constants",
    "mc_ergodic_rates",
    "mc_rate_grid",
    "gap_to_capacity",
    "gap_stderr",
]

UL_SCHEMES = ("proposed-ul", "naive-od", "herman", "direct-zf", "direct-mmse", "mrc")
DL_SCHEMES = ("proposed-dl", "direct-zfbf", "direct-rzfbf")
SCHEMES = UL_SCHEMES + DL_SCHEMES
ITERATIVE = ("proposed-ul", "proposed-dl", "naive-od", "herman")

_LN2 = math.log(2.0)


# -- per-realization quantities ------------------------------------------------


@dataclass(frozen=True)
class InterferenceSample:
    """Effective channel ``T`` (K x K) and per-user noise power ``sigma2``."""

    T: np.ndarray
    sigma2: np.ndarray

    def __post_init__(self):
        K = self.T.shape[0]
        if self.T.shape != (K, K) or self.sigma2.shape != (K,):
            raise ShapeMismatch(f"T {self.T.shape} and sigma2 {self.sigma2.shape} are inconsistent")
        if np.any(self.sigma2 < 0):
            raise ValueError("sigma2 must be nonnegative")

    def powers(self):
        """Return ``(|T_kk|^2, sum_{k' != k} |T_kk'|^2)``."""
        P = self.T.real**2 + self.T.imag**2
        d = np.diag(P).copy()
        return d, P.sum(axis=1) - d


def _check_pair(Q, H):
    Q = check_matrix(Q, "Q")
    H = check_matrix(H, "H")
    if Q.shape != H.shape:
        raise ShapeMismatch(f"Q {Q.shape} and H {H.shape} differ")
    return Q, H


def interference_ul(lmap, Q, H, snr):
    """Effective uplink channel of the detector ``W^H Q^H``.

    ``T = W^H (Q^H H)`` and ``sigma2_k = ||g_k||^2 / snr`` with ``g_k`` the
    k-th row of the detector, obtained as ``(W^H Q^H Q W)_kk`` so the
    K x M detector is never formed. ``snr`` is the per-user ratio.
    """
    Q, H = _check_pair(Q, H)
    W = np.asarray(lmap.W if isinstance(lmap, FactorizedLinearMap) else lmap, dtype=np.complex128)
    K = Q.shape[1]
    if W.shape != (K, K):
        raise ShapeMismatch(f"W has shape {W.shape}, expected ({K}, {K})")
    Wh = W.conj().T
    T = Wh @ (Q.conj().T @ H)
    row_sq = np.einsum("kj,jl,lk->k", Wh, gram(Q), W).real
    return InterferenceSample(T=T, sigma2=np.maximum(row_sq, 0.0) / snr)


def interference_from_detector(G, H, snr):
    """Effective uplink channel of an explicit K x M detector ``G``."""
    G = check_matrix(G, "G")
    H = check_matrix(H, "H", shape=(G.shape[1], G.shape[0]))
    row_sq = np.sum(G.real**2 + G.imag**2, axis=1)
    return InterferenceSample(T=G @ H, sigma2=row_sq / snr)


def interference_dl(lmap, Q, H, beta, sigma2):
    """Effective downlink channel ``T = H^H (beta Q W)``; noise ``sigma2`` at every user."""
    Q, H = _check_pair(Q, H)
    W = np.asarray(lmap.W if isinstance(lmap, FactorizedLinearMap) else lmap, dtype=np.complex128)
    K = Q.shape[1]
    if W.shape != (K, K):
        raise ShapeMismatch(f"W has shape {W.shape}, expected ({K}, {K})")
    T = beta * (H.conj().T @ (Q @ W))
    return InterferenceSample(T=T, sigma2=np.full(K, float(sigma2)))


def _safe_ratio(num, den, what):
    out = np.zeros_like(num)
    live = num > 0
    if np.any(live & (den <= 0)):
        k = int(np.flatnonzero(live & (den <= 0))[0])
        raise DegenerateSINR(f"{what}: zero interference-plus-noise for user {k}")
    out[live] = num[live] / den[live]
    return out


def rate_upper_sample(sample):
    """Per-user ``log2(1 + SINR_k)`` of one realization.

    A user with ``T_kk = 0`` gets rate 0 even when its interference and
    noise vanish too (a detector row that was never updated).

    Raises
    ------
    DegenerateSINR
        If ``T_kk != 0`` while interference plus noise is zero.
    """
    d, i = sample.powers()
    return np.log2(1.0 + _safe_ratio(d, i + sample.sigma2, "upper bound"))


# -- accumulated moments -------------------------------------------------------

# per user: Re T_kk, Im T_kk, |T_kk|^2, interference power, noise power
_NFEAT = 5


@dataclass
class RateAccumulators:
    """Running sums for both rate bounds of K users.

    ``sx`` / ``sxx`` hold the sums and outer-product sums of the 5K
    feature vector (Re T_kk, Im T_kk, |T_kk|^2, interference, noise per
    user) behind the lower bound. ``su`` / ``suu`` do the same for the
    K per-sample upper-bound log terms.
    """

    K: int
    n: int = 0
    sx: np.ndarray = None
    sxx: np.ndarray = None
    su: np.ndarray = None
    suu: np.ndarray = None

    def __post_init__(self):
        d = _NFEAT * self.K
        if self.sx is None:
            self.sx = np.zeros(d)
            self.sxx = np.zeros((d, d))
            self.su = np.zeros(self.K)
            self.suu = np.zeros((self.K, self.K))

    @staticmethod
    def features(sample):
        d, i = sample.powers()
        tkk = np.diag(sample.T)
        return np.stack([tkk.real, tkk.imag, d, i, sample.sigma2], axis=1).reshape(-1)

    def add(self, sample, upper=None):
        """Add one realization; ``upper`` defaults to :func:`rate_upper_sample`."""
        if sample.T.shape[0] != self.K:
            raise ShapeMismatch(f"sample has {sample.T.shape[0]} users, expected {self.K}")
        self.add_features(self.features(sample), rate_upper_sample(sample) if upper is None else upper)

    def add_features(self, x, upper):
        x = np.asarray(x, dtype=np.float64)
        upper = np.asarray(upper, dtype=np.float64)
        self.n += 1
        self.sx += x
        self.sxx += np.outer(x, x)
        self.su += upper
        self.suu += np.outer(upper, upper)

    def merge(self, other):
        if other.K != self.K:
            raise ShapeMismatch("cannot merge accumulators of different user counts")
        self.n += other.n
        self.sx += other.sx
        self.sxx += other.sxx
        self.su += other.su
        self.suu += other.suu
        return self

    def _require(self, n):
        if self.n < n:
            raise InsufficientSamples(f"need at least {n} samples, have {self.n}")

    def _cov(self, s, ss):
        m = s / self.n
        return m, (ss / self.n - np.outer(m, m)) * self.n / (self.n - 1)

    def moments(self):
        """Per-user means as a (K, 5) array."""
        self._require(1)
        return (self.sx / self.n).reshape(self.K, _NFEAT)

    def upper(self):
        """Per-user upper bound, its standard error, and the user-average with its error."""
        self._require(2)
        m, C = self._cov(self.su, self.suu)
        se = np.sqrt(np.maximum(np.diag(C), 0.0) / self.n)
        w = np.full(self.K, 1.0 / self.K)
        return m, se, float(m.mean()), math.sqrt(max(w @ C @ w, 0.0) / self.n)

    def lower(self):
        """Per-user lower bound, delta-method errors, and the user-average with its error."""
        self._require(2)
        mean, C = self._cov(self.sx, self.sxx)
        mu = mean.reshape(self.K, _NFEAT)
        re, im, e2, inter, noise = mu.T
        num = re**2 + im**2
        var = np.maximum(e2 - num, 0.0)
        den = var + inter + noise
        R = np.log2(1.0 + _safe_ratio(num, den, "lower bound"))
        # R = log2(S) - log2(S - N) with S = var + N + inter + noise; gradient wrt the means
        S = den + num
        grad = np.zeros((self.K, _NFEAT))
        live = (num > 0) & (den > 0)
        grad[live, 0] = 2.0 * re[live] / den[live]
        grad[live, 1] = 2.0 * im[live] / den[live]
        grad[live, 2:] = (1.0 / S[live] - 1.0 / den[live])[:, None]
        grad /= _LN2
        var_k = np.einsum("ka,kab,kb->k", grad, _blocks(C, self.K), grad)
        se = np.sqrt(np.maximum(var_k, 0.0) / self.n)
        g = grad.reshape(-1) / self.K
        return R, se, float(R.mean()), math.sqrt(max(g @ C @ g, 0.0) / self.n)


def _blocks(C, K):
    idx = np.arange(K)[:, None] * _NFEAT + np.arange(_NFEAT)
    return C[idx[:, :, None], idx[:, None, :]]


def rate_lower(acc):
    """Per-user lower bound from accumulated moments (bit/s/Hz)."""
    return acc.lower()[0]


# -- budgets ---------------------------------------------------------------------


@dataclass(frozen=True)
class BudgetPolicy:
    """Complexity budget in units of ``M K`` MACs.

    ``overhead_mk`` defaults to the scheme's own setup cost (see
    :func:`budget_constants`).
    """

    budget_mk: float
    overhead_mk: float = None


def budget_constants(scheme, M, K):
    """``(cost_per_iteration, overhead_mk)`` for an iterative scheme.

    proposed-ul / proposed-dl: ``2 M`` per iteration, 2 ``MK`` of setup
    (row distribution plus ``Q^H y`` or ``Q w``). naive-od: ``2 K`` per
    iteration over rows of length K, 1 ``MK`` for the row norms.
    herman: ``2 (K + 1)`` per iteration, 1 ``MK`` setup.
    """
    base = scheme.split("/")[0]
    if base in ("proposed-ul", "proposed-dl"):
        return 2 * M, 2.0
    if base == "naive-od":
        return 2 * K, 1.0
    if base == "herman":
        return 2 * (K + 1), 1.0
    raise ValueError(f"scheme {scheme!r} has no iteration budget")


def budget_to_iterations(policy, M, K, scheme="proposed-ul"):
    """Iterations affordable under ``policy``: ``floor((budget - overhead) M K / cost)``.

    Raises
    ------
    BudgetTooSmall
        If the budget does not cover the overhead.
    """
    cost, default_overhead = budget_constants(scheme, M, K)
    overhead = default_overhead if policy.overhead_mk is None else float(policy.overhead_mk)
    spare = float(policy.budget_mk) - overhead
    if spare < 0:
        raise BudgetTooSmall(f"budget {policy.budget_mk} MK is below the overhead {overhead} MK")
    # tiny slack so exact integer results are not lost to rounding
    return int(math.floor(spare * M * K / cost + 1e-9))


# -- schemes -----------------------------------------------------------------------


@dataclass(frozen=True)
class SchemeSpec:
    """A scheme name plus its regularization target.

    ``"proposed-ul/zf"`` selects the zero-forcing target (``xi = 0``) of
    the proposed detector; without a suffix the MMSE/RZF target is used.
    """

    name: str
    target: str

    @property
    def label(self):
        default = _DEFAULT_TARGET[self.name]
        return self.name if self.target == default else f"{self.name}/{self.target}"

    @property
    def downlink(self):
        return self.name in DL_SCHEMES

    @property
    def iterative(self):
        return self.name in ITERATIVE

    def xi(self, params):
        if self.target == "zf":
            return 0.0
        if self.target == "mmse":
            return params.mmse_xi
        return None

    @property
    def reference(self):
        """Exact scheme with the same target, the ``S_max`` of the gap metric."""
        if self.downlink:
            return SchemeSpec("direct-zfbf" if self.target == "zf" else "direct-rzfbf", self.target)
        if self.name == "mrc":
            return self
        return SchemeSpec("direct-zf" if self.target == "zf" else "direct-mmse", self.target)


_DEFAULT_TARGET = {
    "proposed-ul": "mmse",
    "proposed-dl": "mmse",
    "naive-od": "zf",
    "herman": "mmse",
    "direct-zf": "zf",
    "direct-mmse": "mmse",
    "direct-zfbf": "zf",
    "direct-rzfbf": "mmse",
    "mrc": "none",
}


def parse_scheme(spec):
    if isinstance(spec, SchemeSpec):
        return spec
    name, _, target = str(spec).partition("/")
    if name not in SCHEMES:
        raise ValueError(f"unknown scheme {name!r}; expected one of {SCHEMES}")
    target = target or _DEFAULT_TARGET[name]
    allowed = {"proposed-ul": ("zf", "mmse"), "proposed-dl": ("zf", "mmse")}.get(name, (_DEFAULT_TARGET[name],))
    if target not in allowed:
        raise ValueError(f"scheme {name!r} does not support target {target!r}")
    return SchemeSpec(name, target)


def _scheme_samples(scheme, params, real, seed, trial, iterations):
    """InterferenceSamples of one trial, one per entry of ``iterations`` (or one for exact schemes)."""
    Q, H = real.Q, real.H
    xi = scheme.xi(params)
    rows = RngStream(seed, "ka-rows", trial)
    if scheme.downlink:
        if scheme.iterative:
            dist = build_row_distribution(Q, xi)
            idx = sample_rows(dist, rows, max(iterations))
            # replayed maps are stored conjugated (detector convention)
            Ws = [m.W.conj().T for m in replay_linear_map(Q, xi, idx, iterations)]
            Ws = [Ws[sorted(set(iterations)).index(t)] for t in iterations]
        else:
            Ws = [direct_map(Q, xi)]
        out = []
        for W in Ws:
            fro = frobenius_sq(Q @ W)
            beta = math.sqrt(params.dl_power / fro) if fro > 0 else 0.0
            out.append(interference_dl(W, Q, H, beta, params.dl_noise_var))
        return out
    snr = params.user_snr
    if scheme.name in ("direct-zf", "direct-mmse"):
        return [interference_ul(direct_map(Q, xi), Q, H, snr)]
    if scheme.name == "mrc":
        return [interference_from_detector(Q.conj().T, H, snr)]
    order = sorted(set(iterations))
    if scheme.name == "proposed-ul":
        dist = build_row_distribution(Q, xi)
        idx = sample_rows(dist, rows, max(iterations))
        snaps = [interference_ul(m, Q, H, snr) for m in replay_linear_map(Q, xi, idx, order)]
    elif scheme.name == "naive-od":
        snaps = [interference_from_detector(G, H, snr) for G in naive_ka_detector_snapshots(Q, order, rows)]
    else:
        snaps = [interference_from_detector(G, H, snr) for G in herman_ka_detector_snapshots(Q, xi, order, rows)]
    return [snaps[order.index(t)] for t in iterations]


@dataclass
class RateEstimate:
    """Bounds for one (scheme, SNR, budget) point."""

    scheme: str
    snr_db: float
    budget_mk: float
    iterations: int
    trials: int
    upper: np.ndarray
    upper_se: np.ndarray
    lower: np.ndarray
    lower_se: np.ndarray
    upper_mean: float
    upper_mean_se: float
    lower_mean: float
    lower_mean_se: float

    @property
    def sum_upper(self):
        return float(self.upper.sum())

    @property
    def sum_lower(self):
        return float(self.lower.sum())

    @classmethod
    def from_accumulators(cls, acc, scheme, snr_db, budget_mk, iterations):
        u, use, um, umse = acc.upper()
        lo, lse, lm, lmse = acc.lower()
        return cls(scheme, snr_db, budget_mk, iterations, acc.n, u, use, lo, lse, um, umse, lm, lmse)


@dataclass(frozen=True)
class _GridTask:
    params: ChannelParams
    schemes: tuple
    snrs: tuple
    budgets: tuple
    seed: int


def _points(task):
    """(scheme, snr, budget, T) for every output point; exact schemes use budget None."""
    pts = []
    for sch in task.schemes:
        for snr in task.snrs:
            if sch.iterative:
                for b in task.budgets:
                    T = budget_to_iterations(BudgetPolicy(b), task.params.M, task.params.K, sch.name)
                    pts.append((sch, snr, b, T))
            else:
                pts.append((sch, snr, None, None))
    return pts


def _params_at(params, snr_db):
    return ChannelParams(params.M, params.K, params.a, params.tau, snr_db, params.snr_reference)


def _trial_features(task, trial):
    # runs in a worker; returns one (features, upper) pair per output point
    real = realize(task.params, task.seed, trial)
    out = []
    for sch in task.schemes:
        for snr in task.snrs:
            p = _params_at(task.params, snr)
            its = None
            if sch.iterative:
                its = [budget_to_iterations(BudgetPolicy(b), p.M, p.K, sch.name) for b in task.budgets]
            try:
                samples = _scheme_samples(sch, p, real, task.seed, trial, its)
                out.extend((RateAccumulators.features(s), rate_upper_sample(s)) for s in samples)
            except KaczmimoError as exc:
                raise TrialFailure(f"{sch.label} at {snr} dB", trial, exc) from exc
            except (FloatingPointError, ZeroDivisionError, np.linalg.LinAlgError) as exc:
                raise TrialFailure(f"{sch.label} at {snr} dB", trial, exc) from exc
    return out


def _run_trials(fn, trials, workers):
    if workers is None or workers <= 1 or trials < 2:
        for t in range(trials):
            yield fn(t)
        return
    chunk = max(1, trials // (4 * workers))
    with ProcessPoolExecutor(max_workers=workers) as ex:
        # map preserves trial order, so the reduction below is worker-count independent
        yield from ex.map(fn, range(trials), chunksize=chunk)


def mc_rate_grid(params, schemes, snr_db, budgets_mk, trials, master_seed, workers=1):
    """Monte-Carlo rate bounds over a grid of schemes, SNRs and budgets.

    Each trial draws one channel (shared by all grid points, i.e. common
    random numbers) and evaluates every scheme on it. Per-trial results
    are reduced in trial order, so the output does not depend on the
    number of workers.

    Returns
    -------
    list of RateEstimate
    """
    if trials < 2:
        raise InsufficientSamples("need at least 2 trials")
    schemes = tuple(parse_scheme(s) for s in schemes)
    snrs = tuple(float(s) for s in snr_db)
    budgets = tuple(float(b) for b in budgets_mk) if budgets_mk is not None else ()
    if any(s.iterative for s in schemes) and not budgets:
        raise ValueError("iterative schemes need a nonempty budget grid")
    task = _GridTask(params, schemes, snrs, budgets, int(master_seed))
    pts = _points(task)
    accs = [RateAccumulators(params.K) for _ in pts]
    for feats in _run_trials(partial(_trial_features, task), int(trials), workers):
        for acc, (x, u) in zip(accs, feats):
            acc.add_features(x, u)
    return [
        RateEstimate.from_accumulators(acc, sch.label, snr, b, T)
        for acc, (sch, snr, b, T) in zip(accs, pts)
    ]


def mc_ergodic_rates(params, scheme, budget, trials, master_seed, workers=1):
    """Rate bounds of one scheme at ``params.snr_db``.

    ``budget`` is a :class:`BudgetPolicy` (ignored by exact schemes).
    """
    sch = parse_scheme(scheme)
    budgets = None
    if sch.iterative:
        if budget is None:
            raise ValueError(f"{sch.label} needs a budget")
        if budget.overhead_mk is not None:
            _, default = budget_constants(sch.name, params.M, params.K)
            # fold a custom overhead into an equivalent budget with the default overhead
            budget = BudgetPolicy(budget.budget_mk - budget.overhead_mk + default)
        budgets = [budget.budget_mk]
    (est,) = mc_rate_grid(params, [sch], [params.snr_db], budgets, trials, master_seed, workers)
    return est


def gap_to_capacity(s_t, s_max):
    """Normalized gap ``(s_max - s_t) / s_max``; negative when ``s_t`` exceeds ``s_max``.

    Raises
    ------
    NonpositiveReference
        If ``s_max <= 0``.
    """
    if not s_max > 0:
        raise NonpositiveReference(f"reference rate must be positive, got {s_max}")
    return (s_max - s_t) / s_max


def gap_stderr(s_t, se_t, s_max, se_max):
    """First-order standard error of :func:`gap_to_capacity`, treating both terms as independent."""
    return math.sqrt(se_t**2 + (s_t / s_max) ** 2 * se_max**2) / s_max
