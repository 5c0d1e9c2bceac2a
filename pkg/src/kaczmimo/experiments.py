"""Config-driven experiments producing long-format result tables.

Every experiment returns a list of :class:`Record` rows plus a metadata
dict. Rows carry ``(scheme, snr_db, budget_mk, metric, value, stderr,
trials)`` and the system size ``(M, K)``.
"""

import csv
import io
import json
import math
import platform
import time
from dataclasses import asdict, dataclass, field, fields

import numba
import numpy as np
import yaml

from . import __version__
from .baselines import detect_direct, herman_ka_detector_snapshots, naive_ka_detector_snapshots
from .channel import ChannelParams, RngStream, draw_symbols, realize, sample_channel, uplink_observation
from .gains import gain_report
from .kaczmarz import ITER_OVERHEAD_OPS, apply_detector, build_row_distribution, replay_linear_map, sample_rows
from .rates import (
    ITERATIVE,
    BudgetPolicy,
    budget_constants,
    budget_to_iterations,
    gap_stderr,
    gap_to_capacity,
    mc_rate_grid,
    parse_scheme,
)

__all__ = [
    "KINDS",
    "CSV_COLUMNS",
    "ExperimentConfig",
    "ConfigError",
    "Record",
    "load_config",
    "config_from_dict",
    "run_experiment",
    "records_to_csv",
    "records_to_json",
]

KINDS = ("gains", "convergence", "rates-ul", "rates-dl", "gap")
CSV_COLUMNS = ("scheme", "snr_db", "budget_mk", "metric", "value", "stderr", "trials", "M", "K")
CONVERGENCE_SCHEMES = ("proposed", "naive-od", "herman", "direct")

_DEFAULTS = {
    "gains": dict(M=256, K=10, K_values=[10, 15, 25], iters=500, trials=1),
    "convergence": dict(
        M=256, K=32, schemes=list(CONVERGENCE_SCHEMES), snr_db=[0.0, 20.0],
        budgets_mk=[float(b) for b in range(2, 41, 2)], trials=50,
    ),
    "rates-ul": dict(
        M=256, K=32, schemes=["direct-mmse", "proposed-ul", "direct-zf", "proposed-ul/zf"],
        snr_db=[-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0], budgets_mk=[40.0], trials=300,
    ),
    "rates-dl": dict(
        M=256, K=32, schemes=["direct-rzfbf", "proposed-dl", "direct-zfbf", "proposed-dl/zf"],
        snr_db=[-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0], budgets_mk=[40.0], trials=300,
    ),
    "gap": dict(
        M=256, K=32, schemes=["proposed-ul/zf", "proposed-ul"], snr_db=[20.0],
        budgets_mk=[8.0, 16.0, 24.0, 32.0, 40.0], trials=300,
    ),
}


class ConfigError(ValueError):
    """Invalid or unparseable experiment configuration."""


@dataclass
class ExperimentConfig:
    kind: str
    params: ChannelParams
    schemes: list = field(default_factory=list)
    snr_db: list = field(default_factory=list)
    budgets_mk: list = field(default_factory=list)
    trials: int = 1
    seed: int = 0
    workers: int = 1
    K_values: list = field(default_factory=list)
    iters: int = 500
    output: str = None
    format: str = "csv"

    def to_dict(self):
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["params"] = asdict(self.params)
        return d


@dataclass(frozen=True)
class Record:
    scheme: str
    snr_db: float
    budget_mk: float
    metric: str
    value: float
    stderr: float
    trials: int
    M: int
    K: int


_CHANNEL_KEYS = ("M", "K", "a", "tau", "snr_reference")
_TOP_KEYS = {
    "kind", "channel", "schemes", "snr_db", "budgets_mk", "trials", "seed", "workers",
    "K_values", "iters", "output", "format",
}


def _float_list(value, name):
    if isinstance(value, (int, float)):
        value = [value]
    try:
        out = [float(v) for v in value]
    except (TypeError, ValueError):
        raise ConfigError(f"{name} must be a number or a list of numbers") from None
    if not out:
        raise ConfigError(f"{name} must be nonempty")
    return out


def config_from_dict(raw, kind=None):
    """Validate a config mapping (as loaded from YAML) into an :class:`ExperimentConfig`.

    ``kind`` (e.g. from the CLI subcommand) wins over ``raw["kind"]``.
    Missing entries fall back to per-kind defaults.
    """
    raw = dict(raw or {})
    unknown = set(raw) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    kind = kind or raw.get("kind")
    if kind not in KINDS:
        raise ConfigError(f"experiment kind must be one of {KINDS}, got {kind!r}")
    if raw.get("kind") not in (None, kind):
        raise ConfigError(f"config kind {raw['kind']!r} does not match subcommand {kind!r}")
    d = _DEFAULTS[kind]
    channel = dict(raw.get("channel") or {})
    bad = set(channel) - set(_CHANNEL_KEYS)
    if bad:
        raise ConfigError(f"unknown channel keys: {sorted(bad)}")
    try:
        params = ChannelParams(
            M=int(channel.get("M", d["M"])),
            K=int(channel.get("K", d["K"])),
            a=float(channel.get("a", 0.0)),
            tau=float(channel.get("tau", 0.0)),
            snr_db=20.0,
            snr_reference=str(channel.get("snr_reference", "total")),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"channel: {exc}") from None
    try:
        trials = int(raw.get("trials", d["trials"]))
        seed = int(raw.get("seed", 0))
        workers = int(raw.get("workers", 1))
        iters = int(raw.get("iters", d.get("iters", 500)))
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    if trials < 1:
        raise ConfigError("trials must be >= 1")
    if not 0 <= seed < 2**64:
        raise ConfigError("seed must fit in an unsigned 64-bit integer")
    out = raw.get("output")
    fmt = raw.get("format", "csv")
    if fmt not in ("csv", "json"):
        raise ConfigError(f"format must be csv or json, got {fmt!r}")
    cfg = ExperimentConfig(
        kind=kind, params=params, trials=trials, seed=seed, workers=max(1, workers),
        iters=iters, output=None if out is None else str(out), format=fmt,
    )
    if kind == "gains":
        cfg.K_values = [int(k) for k in _float_list(raw.get("K_values", d["K_values"]), "K_values")]
        if any(not params.M >= k >= 1 for k in cfg.K_values):
            raise ConfigError("every K in K_values must satisfy M >= K >= 1")
        return cfg
    cfg.snr_db = _float_list(raw.get("snr_db", d["snr_db"]), "snr_db")
    cfg.budgets_mk = _float_list(raw.get("budgets_mk", d["budgets_mk"]), "budgets_mk")
    schemes = raw.get("schemes", d["schemes"])
    if isinstance(schemes, str):
        schemes = [schemes]
    if not schemes:
        raise ConfigError("schemes must be nonempty")
    schemes = [str(s) for s in schemes]
    if kind == "convergence":
        bad = [s for s in schemes if s not in CONVERGENCE_SCHEMES]
        if bad:
            raise ConfigError(f"convergence schemes must be among {CONVERGENCE_SCHEMES}, got {bad}")
    else:
        try:
            specs = [parse_scheme(s) for s in schemes]
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if kind == "rates-ul" and any(s.downlink for s in specs):
            raise ConfigError("rates-ul takes uplink schemes only")
        if kind == "rates-dl" and any(not s.downlink for s in specs):
            raise ConfigError("rates-dl takes downlink schemes only")
        if kind == "gap" and any(not s.iterative for s in specs):
            raise ConfigError("gap takes iterative schemes; references are added automatically")
    if kind != "convergence" and trials < 2:
        raise ConfigError("rate experiments need trials >= 2")
    cfg.schemes = schemes
    return cfg


def load_config(path, kind=None):
    """Read a YAML config file; any parse or validation problem raises :class:`ConfigError`."""
    try:
        with open(path, encoding="utf-8") as fh:
            raw = yaml.safe_load(fh)
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    if raw is not None and not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    return config_from_dict(raw, kind)


# -- runners -----------------------------------------------------------------------


def _run_gains(cfg):
    M = cfg.params.M
    rows = []
    for i, K in enumerate(cfg.K_values):
        p = ChannelParams(M, K, cfg.params.a)
        A = sample_channel(p, RngStream(cfg.seed, "channel", i))
        rep = gain_report(A, optimal=True, iters=cfg.iters)
        for metric in ("kappa_suboptimal", "kappa_optimal", "kappa_rmt", "bound"):
            rows.append(Record("gains", None, None, metric, getattr(rep, metric), 0.0, 1, M, K))
        rows.extend(
            Record("gains", None, None, f"spectrum[{j}]", lam, 0.0, 1, M, K)
            for j, lam in enumerate(rep.spectrum)
        )
    return rows


def _mean_se(x):
    x = np.asarray(x, dtype=np.float64)
    se = float(x.std(ddof=1) / math.sqrt(x.size)) if x.size > 1 else 0.0
    return float(x.mean()), se


def _run_convergence(cfg):
    """Squared detection error against the transmitted symbols versus budget."""
    M, K = cfg.params.M, cfg.params.K
    points = {}
    for snr in cfg.snr_db:
        p = ChannelParams(M, K, cfg.params.a, cfg.params.tau, snr, cfg.params.snr_reference)
        its = {}
        for sch in cfg.schemes:
            if sch == "direct":
                continue
            name = "proposed-ul" if sch == "proposed" else sch
            ok = [b for b in cfg.budgets_mk if b >= budget_constants(name, M, K)[1]]
            its[sch] = [(b, budget_to_iterations(BudgetPolicy(b), M, K, name)) for b in ok]
        for trial in range(cfg.trials):
            real = realize(p, cfg.seed, trial)
            s = draw_symbols(K, RngStream(cfg.seed, "symbols", trial))
            y = uplink_observation(real.H, s, p.user_snr_db, RngStream(cfg.seed, "rx-noise", trial))
            xi = p.mmse_xi
            rows = RngStream(cfg.seed, "ka-rows", trial)
            for sch in cfg.schemes:
                if sch == "direct":
                    est = [(None, detect_direct(real.Q, y, xi))]
                else:
                    bts = its[sch]
                    Ts = [T for _, T in bts]
                    if sch == "proposed":
                        idx = sample_rows(build_row_distribution(real.Q, xi), rows, max(Ts, default=0))
                        maps = replay_linear_map(real.Q, xi, idx, Ts)
                        by_t = {m.t: apply_detector(m, real.Q, y) for m in maps}
                    elif sch == "naive-od":
                        snaps = naive_ka_detector_snapshots(real.Q, Ts, rows)
                        by_t = dict(zip(sorted(set(Ts)), (G @ y for G in snaps)))
                    else:
                        snaps = herman_ka_detector_snapshots(real.Q, xi, Ts, rows)
                        by_t = dict(zip(sorted(set(Ts)), (G @ y for G in snaps)))
                    est = [(b, by_t[T]) for b, T in bts]
                for b, s_hat in est:
                    err = float(np.sum(np.abs(s_hat - s) ** 2))
                    points.setdefault((sch, snr, b), []).append(err)
    out = []
    for (sch, snr, b), errs in points.items():
        mean, se = _mean_se(errs)
        out.append(Record(sch, snr, b, "error", mean, se, len(errs), M, K))
    return out


def _rate_records(estimates, M, K):
    rows = []
    for e in estimates:
        b = e.budget_mk
        rows += [
            Record(e.scheme, e.snr_db, b, "upper", e.upper_mean, e.upper_mean_se, e.trials, M, K),
            Record(e.scheme, e.snr_db, b, "lower", e.lower_mean, e.lower_mean_se, e.trials, M, K),
            Record(e.scheme, e.snr_db, b, "sum_upper", e.sum_upper, K * e.upper_mean_se, e.trials, M, K),
            Record(e.scheme, e.snr_db, b, "sum_lower", e.sum_lower, K * e.lower_mean_se, e.trials, M, K),
        ]
        if e.iterations is not None:
            rows.append(Record(e.scheme, e.snr_db, b, "iterations", float(e.iterations), 0.0, e.trials, M, K))
    return rows


def _run_rates(cfg):
    est = mc_rate_grid(cfg.params, cfg.schemes, cfg.snr_db, cfg.budgets_mk, cfg.trials, cfg.seed, cfg.workers)
    return _rate_records(est, cfg.params.M, cfg.params.K)


def _run_gap(cfg):
    specs = [parse_scheme(s) for s in cfg.schemes]
    refs = []
    for s in specs:
        if s.reference.label not in refs:
            refs.append(s.reference.label)
    labels = [s.label for s in specs]
    est = mc_rate_grid(cfg.params, labels + refs, cfg.snr_db, cfg.budgets_mk, cfg.trials, cfg.seed, cfg.workers)
    ref_est = {(e.scheme, e.snr_db): e for e in est if e.scheme in refs}
    M, K = cfg.params.M, cfg.params.K
    rows = _rate_records(est, M, K)
    for s in specs:
        for e in (e for e in est if e.scheme == s.label):
            r = ref_est[(s.reference.label, e.snr_db)]
            for bound in ("upper", "lower"):
                st, se_t = getattr(e, f"{bound}_mean"), getattr(e, f"{bound}_mean_se")
                sm, se_m = getattr(r, f"{bound}_mean"), getattr(r, f"{bound}_mean_se")
                rows.append(Record(
                    e.scheme, e.snr_db, e.budget_mk, f"gap_{bound}",
                    gap_to_capacity(st, sm), gap_stderr(st, se_t, sm, se_m), e.trials, M, K,
                ))
    return rows


_RUNNERS = {
    "gains": _run_gains,
    "convergence": _run_convergence,
    "rates-ul": _run_rates,
    "rates-dl": _run_rates,
    "gap": _run_gap,
}


def accounting_constants(M, K):
    out = {"iteration_overhead_ops": ITER_OVERHEAD_OPS, "unit": "complex multiply-accumulate"}
    for name in ITERATIVE:
        cost, overhead = budget_constants(name, M, K)
        out[name] = {"cost_per_iteration": cost, "overhead_mk": overhead}
    return out


def _bound_note(cfg):
    if cfg.kind == "gains" or cfg.kind == "convergence":
        return None
    if any(parse_scheme(s).downlink for s in cfg.schemes):
        return (
            "downlink bounds use the uplink formulas on T = beta H^H Q W with user noise 10^(-snr/10) "
            "and per-realization Frobenius power normalization"
        )
    return "uplink bounds: average log2(1 + SINR) (upper), moment formula (lower)"


def run_experiment(cfg):
    """Run one experiment; returns ``(records, metadata)``."""
    t0 = time.perf_counter()
    records = _RUNNERS[cfg.kind](cfg)
    meta = {
        "kind": cfg.kind,
        "config": cfg.to_dict(),
        "versions": {
            "kaczmimo": __version__,
            "numpy": np.__version__,
            "numba": numba.__version__,
            "python": platform.python_version(),
        },
        "accounting": accounting_constants(cfg.params.M, cfg.params.K),
        "snr_convention": (
            "snr_db is the total transmit power to noise ratio; per-user SNR = snr / K"
            if cfg.params.snr_reference == "total"
            else "snr_db is the per-user transmit SNR"
        ),
        "bounds": _bound_note(cfg),
        "row_sampling": "one index sequence per trial, reused for every symbol vector of the block",
        "rows": len(records),
        "wall_time_s": time.perf_counter() - t0,
    }
    return records, meta


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def records_to_csv(records):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in records:
        w.writerow([_fmt(getattr(r, c)) for c in CSV_COLUMNS])
    return buf.getvalue()


def records_to_json(records, meta=None):
    doc = {"columns": list(CSV_COLUMNS), "records": [asdict(r) for r in records]}
    if meta is not None:
        doc["metadata"] = meta
    return json.dumps(doc, indent=2, default=_json_default) + "\n"


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def metadata_json(meta):
    return json.dumps(meta, indent=2, default=_json_default) + "\n"

