"""Command line interface.

Experiment subcommands (``gains``, ``convergence``, ``rates-ul``,
``rates-dl``, ``gap``) read an optional YAML config and write a
long-format table plus a JSON metadata file. ``detect`` and ``precode``
run one Kaczmarz solve on matrix files and print JSON to stdout.

Exit codes: 0 success, 1 bad config / arguments / input files,
2 numerical failure.
"""

import argparse
import json
import math
import os
import sys

import numpy as np

from . import __version__
from .exceptions import KaczmimoError, ShapeMismatch
from .experiments import (
    KINDS,
    ConfigError,
    config_from_dict,
    load_config,
    metadata_json,
    records_to_csv,
    records_to_json,
    run_experiment,
)
from .io import atomic_write, read_matrix, read_vector
from .kaczmarz import dl_precode, ul_detect

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors; 2 is reserved for numerical failures here
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser():
    parser = _Parser(prog="kaczmimo", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    for kind in KINDS:
        p = sub.add_parser(kind, help=f"run the {kind} experiment")
        p.add_argument("--config", metavar="PATH", help="YAML experiment config")
        p.add_argument("--seed", type=int, help="master seed (overrides the config)")
        p.add_argument("--workers", type=int, help="parallel worker processes")
        p.add_argument("--trials", type=int, help="Monte-Carlo trials (overrides the config)")
        p.add_argument("--out", metavar="PATH", help="output file")
        p.add_argument("--format", choices=("csv", "json"), help="output format")

    for name, vec, desc in (("detect", "y", "received vector"), ("precode", "s", "symbol vector")):
        p = sub.add_parser(name, help=f"single Kaczmarz {name} solve")
        p.add_argument("--Q", dest="Q", required=True, metavar="PATH", help="channel estimate (M x K matrix file)")
        p.add_argument(f"--{vec}", dest="vec", required=True, metavar="PATH", help=f"{desc} file")
        p.add_argument("--xi", type=float, default=0.0, help="regularization (0 = zero-forcing)")
        p.add_argument("--iters", type=int, required=True, help="Kaczmarz iterations")
        p.add_argument("--seed", type=int, default=0, help="seed for the row sampling")
    return parser


def _pairs(z):
    return [[float(c.real), float(c.imag)] for c in np.asarray(z).ravel()]


def _solve_once(args):
    try:
        Q = read_matrix(args.Q)
        vec = read_vector(args.vec)
        if args.iters < 0:
            raise ValueError("--iters must be >= 0")
        if not (args.xi >= 0 and math.isfinite(args.xi)):
            raise ValueError("--xi must be a finite value >= 0")
        want = Q.shape[0] if args.command == "detect" else Q.shape[1]
        if vec.size != want:
            raise ShapeMismatch(f"vector has length {vec.size}, expected {want}")
    except (OSError, ValueError) as exc:
        print(f"kaczmimo {args.command}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if args.command == "detect":
            s_hat, state = ul_detect(Q, vec, args.xi, args.iters, args.seed)
            doc = {"estimate": _pairs(s_hat)}
        else:
            x, w, state = dl_precode(Q, vec, args.xi, args.iters, args.seed)
            doc = {"estimate": _pairs(x), "w": _pairs(w)}
    except (KaczmimoError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"kaczmimo {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    doc["state"] = {
        "iterations": state.t,
        "ops": state.ops,
        "consistency_residual": state.coupling_residual(Q),
    }
    sys.stdout.write(json.dumps(doc) + "\n")
    return EXIT_OK


def _metadata_path(out):
    root, _ = os.path.splitext(out)
    return root + ".meta.json"


def _run(args):
    try:
        cfg = load_config(args.config, args.command) if args.config else config_from_dict({}, args.command)
        if args.seed is not None:
            if not 0 <= args.seed < 2**64:
                raise ConfigError("--seed must fit in an unsigned 64-bit integer")
            cfg.seed = args.seed
        if args.workers is not None:
            cfg.workers = max(1, args.workers)
        if args.trials is not None:
            if args.trials < (1 if cfg.kind in ("gains", "convergence") else 2):
                raise ConfigError("--trials is too small for this experiment")
            cfg.trials = args.trials
        if args.format is not None:
            cfg.format = args.format
        if args.out is not None:
            cfg.output = args.out
        out = cfg.output or f"{cfg.kind}.{cfg.format}"
    except ConfigError as exc:
        print(f"kaczmimo {args.command}: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        records, meta = run_experiment(cfg)
    except (KaczmimoError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"kaczmimo {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    if cfg.format == "json":
        atomic_write(out, records_to_json(records, meta))
    else:
        atomic_write(out, records_to_csv(records))
        atomic_write(_metadata_path(out), metadata_json(meta))
    print(f"wrote {len(records)} rows to {out}", file=sys.stderr)
    return EXIT_OK


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.command in ("detect", "precode"):
        return _solve_once(args)
    return _run(args)


if __name__ == "__main__":
    sys.exit(main())
