"""Command-line interface.

    pkf demo <name> [--n N] [--seed S] [--out DIR]
    pkf run <config>
    pkf optimize <config> [--gains PATH]
    pkf filter <config> <gains>

Exit status: 0 on success, 2 for configuration or validation errors,
3 for numerical failures.
"""

import argparse
import os
import sys

from .config import ExperimentConfig, load_config
from .demos import DEFAULT_N, DEMOS, get_demo
from .errors import (ConfigError, DimensionMismatch, InfeasibleSchedule, NoConvergence, NotPSD, PKFError, SchemaError,
                     ScaleExceeded, StaleGains, UnknownDemo, UnstableA)
from .io import load_gains, save_gains
from .kalman import kalman_gains
from .optimizer import OptimizerOptions
from .pipeline import compute_schedules, run_pipeline

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3

VALIDATION_ERRORS = (ConfigError, SchemaError, StaleGains, InfeasibleSchedule, UnknownDemo, DimensionMismatch)
NUMERIC_ERRORS = (NoConvergence, UnstableA, NotPSD, ScaleExceeded)

DEMO_FILTERS = {
    "harmonic-oscillator": ("kalman", "tic", "pkf_auc", "pkf_minT", "recursive_opt"),
    "pendulums": ("kalman", "tic", "pkf_auc", "pkf_minT", "stationary"),
    "example1": ("kalman", "tic", "pkf_minT"),
}


def print_summary(reports, out=None):
    out = out or sys.stdout
    width = max(len(n) for n in reports)
    print(f"{'filter':<{width}}  {'k':>5}  {'empirical MSE':>14}  {'+/- se':>10}  {'analytic MSE':>13}", file=out)
    for name, rep in reports.items():
        print(f"{name:<{width}}  {int(rep.k[-1]):>5}  {rep.empirical_mse[-1]:>14.6g}  {rep.mc_stderr[-1]:>10.3g}  "
              f"{rep.analytic_mse[-1]:>13.6g}", file=out)


def cmd_demo(args):
    model = get_demo(args.name)
    n = args.n if args.n is not None else DEFAULT_N[args.name]
    if n < 2:
        raise ConfigError("--n must be at least 2")
    out = args.out or os.path.join("out", args.name)
    cfg = ExperimentConfig(model=model, filters=DEMO_FILTERS[args.name], n_trajectories=n, master_seed=args.seed,
                           window=16, output_dir=out, optimizer=OptimizerOptions(), plots=not args.no_plots)
    reports, _, _ = run_pipeline(cfg)
    print(f"{args.name}: N = {n}, seed = {args.seed}, outputs in {out}")
    print_summary(reports)
    return EXIT_OK


def cmd_run(args):
    cfg = load_config(args.config)
    reports, _, _ = run_pipeline(cfg)
    print_summary(reports)
    return EXIT_OK


def cmd_optimize(args):
    cfg = load_config(args.config)
    model = cfg.model
    schedules = compute_schedules(model, kalman_gains(model), cfg.filters, cfg.optimizer)
    path = args.gains or os.path.join(cfg.output_dir, "gains.json")
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    save_gains(schedules, model, path)
    for name, s in schedules.items():
        print(f"{name}: objective {s.objective_value:.6g}")
    print(f"gains written to {path}")
    return EXIT_OK


def cmd_filter(args):
    cfg = load_config(args.config)
    kgains = kalman_gains(cfg.model)
    schedules = load_gains(args.gains, cfg.model, kgains)
    reports, _, _ = run_pipeline(cfg, schedules=schedules)
    print_summary(reports)
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="pkf", description="Perfect-perception Kalman filtering experiments.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("demo", help="run a built-in demo")
    p.add_argument("name", choices=sorted(DEMOS))
    p.add_argument("--n", type=int, default=None, help="number of trajectories")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="output directory (default out/<name>)")
    p.add_argument("--no-plots", action="store_true")
    p.set_defaults(func=cmd_demo)

    p = sub.add_parser("run", help="optimize, simulate and evaluate from a config file")
    p.add_argument("config")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("optimize", help="compute gain schedules and write a gains file")
    p.add_argument("config")
    p.add_argument("--gains", default=None, help="gains file path (default <output_dir>/gains.json)")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("filter", help="simulate and evaluate with precomputed gains")
    p.add_argument("config")
    p.add_argument("gains")
    p.set_defaults(func=cmd_filter)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except VALIDATION_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NUMERIC_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except PKFError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
