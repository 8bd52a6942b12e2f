"""Command-line front end.

Exit status: 0 on success, 2 for a malformed config (the offending key is
printed), 3 for unreadable inputs or unwritable outputs, 1 for any other
error raised by the library.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import logging
import math
import sys

import numpy as np

from . import __version__, bench
from . import dictionary as dct
from .config import load_config, parse_scheme, preset, require_seed
from .errors import ConfigError, FormatError
from .estimators import estimate
from .measurement import load_batch, save_batch

log = logging.getLogger("fdmimo")

EXIT_MODULE, EXIT_CONFIG, EXIT_IO = 1, 2, 3


class _InputError(Exception):
    """Wraps failures to read or write a named file."""


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="TOML experiment config")
    common.add_argument("--preset", choices=("desk", "paper"), default="desk",
                        help="base settings the config file overlays (default: desk)")
    common.add_argument("--seed", type=int, help="override sweep.seed")
    common.add_argument("--out", metavar="PATH", help="output file (default: stdout where allowed)")
    common.add_argument("--quiet", action="store_true", help="only log warnings and errors")

    parser = argparse.ArgumentParser(prog="fdmimo", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("gen-dict", parents=[common], help="write a direction grid file")
    p.add_argument("--method", default="SFG", type=str.upper, choices=dct.METHODS)
    _grid_args(p)

    p = sub.add_parser("analyze-dict", parents=[common],
                       help="minimal-angle CDFs of the three grids (CSV)")
    _grid_args(p)
    p.add_argument("--samples", type=int, help="hemisphere samples (default: sweep.cdf_samples)")
    p.add_argument("--points", type=int, default=201, help="radius axis resolution")

    p = sub.add_parser("simulate", parents=[common], help="write one measurement batch")
    p.add_argument("--trial", type=int, default=0)
    p.add_argument("--snr", type=float, help="SNR in dB (default: sweep.fixed_snr_db)")
    p.add_argument("--pilots", type=int, help="pilot count M (default: measurement.pilots)")

    p = sub.add_parser("estimate", parents=[common], help="run one scheme on a saved batch")
    p.add_argument("batch", metavar="BATCH", help="file written by 'simulate'")
    p.add_argument("--scheme", default="SFG+BSOMP", help="DICT+EST, e.g. SFG+BSOMP")

    sub.add_parser("sweep-snr", parents=[common], help="NMSE versus SNR (CSV)")
    sub.add_parser("sweep-pilots", parents=[common], help="NMSE versus pilot count (CSV)")
    return parser


def _grid_args(p):
    p.add_argument("--gv", type=int, help="G_v (default: dictionary.G_v)")
    p.add_argument("--gh", type=int, help="G_h (default: dictionary.G_h)")
    p.add_argument("--xi", type=float, help="SFG angle range in radians (default: dictionary.xi)")


def resolve_config(args):
    cfg = preset(args.preset)
    if args.config:
        try:
            cfg = load_config(args.config, cfg)
        except OSError as exc:
            raise _InputError(f"cannot read config {args.config}: {exc.strerror or exc}")
    if args.seed is not None:
        cfg = cfg.replace(sweep={"seed": args.seed})
    return cfg


@contextlib.contextmanager
def _output(path, binary=False):
    if path is None:
        if binary:
            raise ConfigError("binary output needs a file path", "--out")
        yield sys.stdout
        return
    try:
        fh = open(path, "wb" if binary else "w", **({} if binary else
                                                    {"encoding": "utf-8", "newline": ""}))
    except OSError as exc:
        raise _InputError(f"cannot write {path}: {exc.strerror or exc}")
    with fh:
        yield fh


def _grid_params(args, cfg):
    d = cfg.dictionary
    G_v = d.G_v if args.gv is None else args.gv
    G_h = d.G_h if args.gh is None else args.gh
    xi = d.xi if args.xi is None else args.xi
    for key, value in (("--gv", G_v), ("--gh", G_h)):
        if value < 1:
            raise ConfigError(f"must be positive, got {value}", key)
    return G_v, G_h, xi


def cmd_gen_dict(args, cfg):
    G_v, G_h, xi = _grid_params(args, cfg)
    grid = dct.make_grid(args.method, G_v, G_h, xi)
    with _output(args.out) as fh:
        dct.save_grid(grid, fh)
    log.info("wrote %d %s directions", len(grid), args.method)


def cmd_analyze_dict(args, cfg):
    G_v, G_h, xi = _grid_params(args, cfg)
    samples = cfg.sweep.cdf_samples if args.samples is None else args.samples
    table = bench.dict_cdf_experiment(G_v, G_h, xi, samples, require_seed(cfg), args.points)
    with _output(args.out) as fh:
        fh.write(table.to_csv())
    for method, ks in table.ks.items():
        log.info("KS distance %s: %.4f", method, ks)


def cmd_simulate(args, cfg):
    snr = cfg.sweep.fixed_snr_db if args.snr is None else args.snr
    pilots = cfg.measurement.pilots if args.pilots is None else args.pilots
    if pilots < 1:
        raise ConfigError("must be positive", "--pilots")
    channel, _, batch, _ = bench.simulate_trial(cfg, args.trial, snr, pilots)
    with _output(args.out, binary=True) as fh:
        save_batch(fh, batch, truth=channel.matrix)
    log.info("wrote batch: ML=%d, K=%d, noise_var=%.6g, %d paths",
             batch.n_measurements, batch.n_subcarriers, batch.noise_var, len(channel.paths))


def cmd_estimate(args, cfg):
    method, kind = parse_scheme(args.scheme)
    try:
        with open(args.batch, "rb") as fh:
            batch, truth = load_batch(fh)
    except OSError as exc:
        raise _InputError(f"cannot read {args.batch}: {exc.strerror or exc}")
    except FormatError as exc:
        raise _InputError(f"{args.batch}: {exc}")
    if batch.sensing.shape[1] != cfg.geometry.n_elements:
        raise ConfigError(f"batch has {batch.sensing.shape[1]} antennas, config has "
                          f"{cfg.geometry.n_elements}", "array")
    est = cfg.estimator
    rng = np.random.default_rng([require_seed(cfg), 0, 1, 0])
    result = estimate(kind, batch.observations, batch.sensing,
                      bench.config_dictionary(cfg, method),
                      max(batch.noise_var, est.noise_floor), rng,
                      V=est.V, max_support=est.max_support, prior_var=est.prior_var,
                      score_on=est.score_on, omp_mode=est.omp_mode)
    support = sorted({i for run in result.runs for i in run.support})
    value = bench.nmse(result.channel, truth) if truth is not None else math.nan
    with _output(args.out) as fh:
        fh.write("scheme,nmse,support_size\n")
        fh.write(f"{method}+{kind},{value:.17g},{len(support)}\n")


def cmd_sweep(args, cfg):
    run = bench.sweep_snr if args.command == "sweep-snr" else bench.sweep_pilots
    result = run(cfg)
    with _output(args.out) as fh:
        fh.write(result.to_csv())


COMMANDS = {
    "gen-dict": cmd_gen_dict,
    "analyze-dict": cmd_analyze_dict,
    "simulate": cmd_simulate,
    "estimate": cmd_estimate,
    "sweep-snr": cmd_sweep,
    "sweep-pilots": cmd_sweep,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr,
                        force=True)
    try:
        cfg = resolve_config(args)
        log.info("resolved config: %s", json.dumps(cfg.to_dict(), sort_keys=True))
        COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        print(f"fdmimo: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (_InputError, OSError) as exc:
        print(f"fdmimo: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"fdmimo: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_MODULE
    return 0


if __name__ == "__main__":
    sys.exit(main())
