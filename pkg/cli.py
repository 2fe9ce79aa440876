#!/usr/bin/env python3
"""
Command-line front end for mdporder.

Subcommands: simulate, estimate, mc, curve, table, serve.
Exit codes: 0 success, 1 validation error (bad flags, input or parameters),
2 runtime error.
"""

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Any, Dict, Optional, Sequence, Tuple

from experiment import (DEFAULT_REPS, DEFAULT_TABLE_SETTINGS, StageError, run_estimate,
                        run_mc, run_table, write_mc_outputs, write_table_csv)
from gamma_engine import write_gamma_grid
from order_config import EstimatorConfig, load_config_file, resolve_threads
from signal_order import RIDGE_MODES, estimate_to_dict, write_curve_csv
from simulators import DEFAULT_BURN_IN, MODELS, SimSpec, simulate
from trajectory import SUPPORTED_FORMATS, read_dataset, write_dataset

LOG_LEVEL_ENV = 'MDPORDER_LOG_LEVEL'

# argparse dest -> EstimatorConfig.from_mapping key
ESTIMATOR_FLAGS = ('K', 'Q', 'B', 'eta', 'tau', 'c0', 'a', 'ridge_mode', 'seed', 'threads',
                   'backend', 'trees', 'min_leaf', 'knn_k')


class _Parser(argparse.ArgumentParser):
    """Usage errors exit with status 1 instead of argparse's 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _settings(value: str) -> Tuple[Tuple[int, int], ...]:
    pairs = []
    for item in value.split(','):
        try:
            n, t = item.lower().split('x')
            pairs.append((int(n), int(t)))
        except ValueError:
            raise argparse.ArgumentTypeError(f"settings must look like 6x450,12x450; got '{item}'")
    return tuple(pairs)


def _add_logging_flags(parser: argparse.ArgumentParser):
    group = parser.add_mutually_exclusive_group()
    group.add_argument('-v', '--verbose', action='store_true', help='log at DEBUG level')
    group.add_argument('-q', '--quiet', action='store_true', help='log warnings and errors only')


def _add_simulation_flags(parser: argparse.ArgumentParser, with_size: bool = True):
    parser.add_argument('--model', required=True, choices=MODELS, help='data-generating model')
    if with_size:
        parser.add_argument('--n', type=int, required=True, help='number of trajectories N')
        parser.add_argument('--t', type=int, required=True, help='trajectory length T')
    parser.add_argument('--p', type=int, default=3, help='state dimension (default: 3; ohio requires 3)')
    parser.add_argument('--burn-in', type=int, default=DEFAULT_BURN_IN,
                        help=f"discarded warm-up steps (default: {DEFAULT_BURN_IN})")
    parser.add_argument('--noise-scale', type=float, default=None,
                        help='override the model noise standard deviation')


def _add_estimator_flags(parser: argparse.ArgumentParser):
    defaults = EstimatorConfig()
    group = parser.add_argument_group('estimator')
    group.add_argument('--config', default=None, help='YAML parameter file; flags override its values')
    group.add_argument('--K', dest='K', type=int, default=None, help=f"largest order considered (default: {defaults.K})")
    group.add_argument('--Q', dest='Q', type=int, default=None, help=f"largest lag gap q (default: {defaults.Q})")
    group.add_argument('--B', dest='B', type=int, default=None,
                       help='number of random directions (default: floor((NT)^(1/4)))')
    group.add_argument('--eta', type=float, default=None, help=f"signal exponent (default: {defaults.eta})")
    group.add_argument('--tau', type=float, default=None, help=f"decision threshold in (0, 1) (default: {defaults.tau})")
    group.add_argument('--c0', type=float, default=None, help=f"ridge constant (default: {defaults.c0})")
    group.add_argument('--a', dest='a', type=float, default=None, help=f"ridge rate exponent (default: {defaults.a})")
    group.add_argument('--ridge-mode', dest='ridge_mode', choices=RIDGE_MODES, default=None,
                       help=f"semi scales the ridge by max Pi, plain adds it raw (default: {defaults.ridge_mode})")
    group.add_argument('--backend', choices=('forest', 'knn'), default=None,
                       help=f"regression backend (default: {defaults.backend.kind})")
    group.add_argument('--trees', type=int, default=None, help=f"forest size (default: {defaults.backend.trees})")
    group.add_argument('--min-leaf', dest='min_leaf', type=int, default=None,
                       help=f"forest minimum leaf size (default: {defaults.backend.min_leaf})")
    group.add_argument('--knn-k', dest='knn_k', type=int, default=None,
                       help='nearest neighbours (default: ceil(n^(2/3)) of the training rows)')
    group.add_argument('--seed', type=int, default=None, help=f"master seed (default: {defaults.seed})")
    group.add_argument('--threads', type=int, default=None,
                       help='worker count (default: all cores; MDPORDER_THREADS overrides)')


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog='mdporder', description='Estimate the order of a Markov decision process from trajectories.')
    _add_logging_flags(parser)
    sub = parser.add_subparsers(dest='command', metavar='command')
    sub.required = True

    p_sim = sub.add_parser('simulate', help='write a synthetic dataset')
    _add_simulation_flags(p_sim)
    p_sim.add_argument('--seed', type=int, default=0, help='simulation seed (default: 0)')
    p_sim.add_argument('--out', required=True, help='output file (.csv or .jsonl)')
    p_sim.add_argument('--format', choices=SUPPORTED_FORMATS, default=None, help='override the suffix-based format')

    p_est = sub.add_parser('estimate', help='estimate the order of a dataset')
    p_est.add_argument('--data', required=True, help='input dataset (.csv or .jsonl)')
    p_est.add_argument('--format', choices=SUPPORTED_FORMATS, default=None, help='override the suffix-based format')
    p_est.add_argument('--out', default=None, help='result JSON (default: stdout)')
    p_est.add_argument('--dump-gamma', default=None, help='also write the k,q,b,value,count grid CSV')
    _add_estimator_flags(p_est)

    p_mc = sub.add_parser('mc', help='Monte Carlo: repeated simulate + estimate')
    _add_simulation_flags(p_mc)
    p_mc.add_argument('--reps', type=int, default=DEFAULT_REPS, help=f"repetitions (default: {DEFAULT_REPS})")
    p_mc.add_argument('--k0', type=int, default=None, help='true order (default: 1 for iid, else 2)')
    p_mc.add_argument('--out', required=True, help='per-rep CSV; the JSON summary goes next to it')
    p_mc.add_argument('--json', default=None, help='summary JSON path (default: --out with .json suffix)')
    p_mc.add_argument('--curve-out', default=None, help='also write the mean k,omega curve CSV')
    p_mc.add_argument('--timings', action='store_true',
                      help='record wall-clock seconds (outputs then differ between runs)')
    _add_estimator_flags(p_mc)

    p_curve = sub.add_parser('curve', help='write the k,omega signal curve CSV')
    source = p_curve.add_mutually_exclusive_group(required=True)
    source.add_argument('--result', default=None, help='estimate JSON to re-emit')
    source.add_argument('--data', default=None, help='dataset to estimate first')
    p_curve.add_argument('--format', choices=SUPPORTED_FORMATS, default=None, help='dataset format override')
    p_curve.add_argument('--out', required=True, help='output CSV')
    _add_estimator_flags(p_curve)

    p_table = sub.add_parser('table', help='Monte Carlo over several (N, T) settings')
    _add_simulation_flags(p_table, with_size=False)
    p_table.add_argument('--settings', type=_settings, default=DEFAULT_TABLE_SETTINGS,
                         help='comma-separated NxT pairs (default: 6x450,12x450,18x450)')
    p_table.add_argument('--reps', type=int, default=DEFAULT_REPS, help=f"repetitions per setting (default: {DEFAULT_REPS})")
    p_table.add_argument('--k0', type=int, default=None, help='true order (default: 1 for iid, else 2)')
    p_table.add_argument('--out', required=True, help='output CSV, one row per setting')
    _add_estimator_flags(p_table)

    p_serve = sub.add_parser('serve', help='run the HTTP service')
    p_serve.add_argument('--host', default='0.0.0.0', help='bind address (default: 0.0.0.0)')
    p_serve.add_argument('--port', type=int, default=5000, help='port (default: 5000)')
    return parser


def configure_logging(verbose: bool = False, quiet: bool = False):
    level = os.environ.get(LOG_LEVEL_ENV, 'INFO').upper()
    if verbose:
        level = 'DEBUG'
    elif quiet:
        level = 'WARNING'
    logging.basicConfig(level=level, format='%(asctime)s %(levelname)s %(message)s')


def estimator_config(args: argparse.Namespace) -> EstimatorConfig:
    """File values first, then explicit flags, then the thread-count environment override."""
    values: Dict[str, Any] = load_config_file(args.config) if args.config else {}
    for key in ESTIMATOR_FLAGS:
        flag_value = getattr(args, key, None)
        if flag_value is not None:
            values[key] = flag_value
    values['threads'] = resolve_threads(values.get('threads'))
    return EstimatorConfig.from_mapping(values)


def _sim_spec(args: argparse.Namespace, seed: int, N: int, T: int) -> SimSpec:
    return SimSpec(model=args.model, N=N, T=T, p=args.p, seed=seed, burn_in=args.burn_in,
                   noise_scale_override=args.noise_scale)


def cmd_simulate(args: argparse.Namespace) -> int:
    spec = _sim_spec(args, args.seed, args.n, args.t)
    dataset = simulate(spec, n_jobs=resolve_threads(None))
    write_dataset(dataset, args.out, args.format)
    return 0


def cmd_estimate(args: argparse.Namespace) -> int:
    config = estimator_config(args)
    dataset = read_dataset(args.data, args.format)
    estimate = run_estimate(dataset, config)
    payload = json.dumps(estimate_to_dict(estimate), indent=2)
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(payload + '\n')
        logging.info(f"Estimate saved to {out}")
    else:
        print(payload)
    if args.dump_gamma:
        write_gamma_grid(estimate.pi.cells, args.dump_gamma)
    return 0


def cmd_mc(args: argparse.Namespace) -> int:
    config = estimator_config(args)
    spec = _sim_spec(args, config.seed, args.n, args.t)
    report = run_mc(spec, config, args.reps, k0=args.k0, threads=config.threads)
    write_mc_outputs(report, args.out, args.json, config=config, include_timings=args.timings)
    if args.curve_out and report.mean_omega:
        write_curve_csv(report.mean_omega, args.curve_out)
    return 0


def cmd_curve(args: argparse.Namespace) -> int:
    if args.result:
        with open(args.result, 'r') as f:
            try:
                result = json.load(f)
            except json.JSONDecodeError as e:
                raise ValueError(f"{args.result} is not valid JSON: {e.msg}")
        if not isinstance(result, dict) or not isinstance(result.get('omega'), list):
            raise ValueError(f"{args.result} holds no omega curve")
        omega = [float(w) for w in result['omega']]
    else:
        config = estimator_config(args)
        omega = list(run_estimate(read_dataset(args.data, args.format), config).curve.omega)
    write_curve_csv(omega, args.out)
    logging.info(f"Signal curve saved to {args.out}")
    return 0


def cmd_table(args: argparse.Namespace) -> int:
    config = estimator_config(args)
    first_n, first_t = args.settings[0]
    spec = _sim_spec(args, config.seed, first_n, first_t)
    reports = run_table(spec, config, args.reps, settings=args.settings, k0=args.k0,
                        threads=config.threads)
    write_table_csv(reports, args.out)
    logging.info(f"Table saved to {args.out}")
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    from app import app
    app.run(host=args.host, port=args.port, debug=False)
    return 0


COMMANDS = {
    'simulate': cmd_simulate,
    'estimate': cmd_estimate,
    'mc': cmd_mc,
    'curve': cmd_curve,
    'table': cmd_table,
    'serve': cmd_serve,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    configure_logging(args.verbose, args.quiet)

    try:
        return COMMANDS[args.command](args)
    except StageError as e:
        if e.is_validation:
            logging.error(f"Validation error in {e.stage} stage: {e.cause}")
            return 1
        logging.error(f"Runtime error in {e.stage} stage: {e.cause}", exc_info=True)
        return 2
    except (ValueError, FileNotFoundError) as e:
        logging.error(f"Validation error: {e}")
        return 1
    except Exception as e:
        logging.error(f"Runtime error: {e}", exc_info=True)
        return 2


if __name__ == '__main__':
    sys.exit(main())
