import argparse
import logging
import sys
from typing import List, Optional

from asghf.sparse_filter.adaptive_quadrature import AdaptConfig, adapt
from asghf.sparse_filter.benchmark_models import load_scenario, problem1_exact, problem1_integrand
from asghf.sparse_filter.cache import CACHE_STRATEGIES, configure_grid_cache
from asghf.sparse_filter.errors import ConfigError, FailureThresholdError, InvalidArgumentError
from asghf.sparse_filter.experiments import (
    RUN_CLOCK, ExperimentConfig, FilterSpec, adapt_pair, run_sinusoids, run_table1, run_tracking,
)
from asghf.sparse_filter.monitor import CLOCKS
from asghf.sparse_filter.tensor_smolyak import apply_grid, full_tensor_grid, smolyak_grid

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_FAILURES = 3

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


# -------------------------------------------------------------
# Helpers
# -------------------------------------------------------------

def configure_logging(verbose: bool, quiet: bool):
    level = logging.WARNING
    if verbose:
        level = logging.DEBUG
    elif quiet:
        level = logging.ERROR
    logging.basicConfig(level=level, format=LOG_FORMAT)


def build_filters(args, scenario_data) -> tuple:
    kinds = args.filter or ["ghf", "sghf", "asghf"]
    process, measurement = adapt_pair(scenario_data["asghf"], args.psi, args.tol)
    specs = []
    for kind in dict.fromkeys(kinds):
        specs.append(FilterSpec(
            kind,
            points=args.points,
            level=args.level,
            process=process,
            measurement=measurement,
            readapt_every=args.readapt_every,
        ))
    return tuple(specs)


def experiment_config(args, problem: str) -> ExperimentConfig:
    data = load_scenario(f"{problem}_scenario{args.scenario}")
    return ExperimentConfig(
        problem=problem,
        scenario=args.scenario,
        runs=args.runs,
        steps=args.steps,
        seed=args.seed,
        omega_deg=getattr(args, "omega_deg", 3.0),
        filters=build_filters(args, data),
        out_dir=args.out,
        threads=args.threads,
        clock=args.clock,
    )


def print_study(title: str, result):
    report = result.report
    print(f"=== {title} ===")
    for label, info in report["filters"].items():
        points = info["points"]
        relative = report["timing"]["relative"].get(label)
        print(f"{label:<10} points/step: {points['per_step']:<6} "
              f"(process {points['process']}, measurement {points['measurement']})  "
              f"failed: {info['failed']}")
        if relative is not None:
            print(f"{'':<10} relative time: {relative:.3f}")
        for name, value in report["steady_state"].get(label, {}).items():
            print(f"{'':<10} steady-state {name}: {value:.6g}")
    for path in result.paths:
        print(f"wrote {path}")


# -------------------------------------------------------------
# Command handlers
# -------------------------------------------------------------

def cmd_table1(args):
    report = run_table1(n=args.dim, out_dir=args.out)
    print(f"=== QUADRATURE COMPARISON (n={args.dim}) ===")
    print(f"exact value: {report['exact']:.6f}")
    print(f"{'variant':<16}{'points':>8}{'value':>18}{'%error':>12}{'pub. %err':>12}{'pub. pts':>10}")
    for row in report["rows"]:
        published_err = "" if row["published_error_pct"] is None else f"{row['published_error_pct']:.4f}"
        published_pts = "" if row["published_points"] is None else str(row["published_points"])
        print(f"{row['variant']:<16}{row['points']:>8}{row['value']:>18.6f}"
              f"{row['error_pct']:>12.4f}{published_err:>12}{published_pts:>10}")


def cmd_sinusoids(args):
    result = run_sinusoids(experiment_config(args, "sinusoids"))
    print_study(f"SINUSOIDS (scenario {args.scenario})", result)


def cmd_tracking(args):
    result = run_tracking(experiment_config(args, "tracking"))
    print_study(f"TRACKING (scenario {args.scenario}, omega {args.omega_deg} deg/s)", result)


def cmd_quad(args):
    n = args.dim
    if args.rule == "gh":
        grid = full_tensor_grid(n, args.points)
        label = f"GH_{args.points}"
        compiled = None
    elif args.rule == "sgh":
        grid = smolyak_grid(n, args.level)
        label = f"SGH_{args.level}"
        compiled = None
    else:
        psi = args.psi[0] if args.psi else 0.4
        tol = args.tol[0] if args.tol else 1.6
        try:
            cfg = AdaptConfig(psi=psi, tol=tol)
        except InvalidArgumentError as e:
            raise ConfigError(str(e)) from e
        compiled, _, _ = adapt(problem1_integrand, n, cfg)
        grid = compiled.grid
        label = f"ASGH_{{{psi:g},{tol:g}}}"

    value = float(apply_grid(grid, problem1_integrand)[0])
    exact = problem1_exact(n)
    print(f"=== QUAD {label} (n={n}) ===")
    print(f"points:  {grid.size}")
    print(f"value:   {value:.10g}")
    print(f"exact:   {exact:.10g}")
    print(f"%error:  {100.0 * abs(value - exact) / exact:.6f}")

    if args.dump:
        if compiled is not None:
            paths = compiled.save(args.dump)
        else:
            paths = (grid.to_csv(f"{args.dump}.csv"),)
        for path in paths:
            print(f"wrote {path}")


# -------------------------------------------------------------
# Main parser builder
# -------------------------------------------------------------

def add_filter_arguments(p: argparse.ArgumentParser, default_steps_note: str):
    p.add_argument("--filter", nargs="+", choices=["ghf", "sghf", "asghf"],
                   help="Filters to compare (default: all three)")
    p.add_argument("--points", type=int, default=3, help="GHF points per dimension (default: 3)")
    p.add_argument("--level", type=int, default=3, help="SGHF accuracy level (default: 3)")
    p.add_argument("--psi", type=float, nargs="+",
                   help="ASGHF psi: one value, or process and measurement values")
    p.add_argument("--tol", type=float, nargs="+",
                   help="ASGHF TOL: one value, or process and measurement values")
    p.add_argument("--readapt-every", type=int, default=None,
                   help="Rebuild ASGHF grids every K steps (default: never)")
    p.add_argument("--runs", type=int, default=50, help="Monte Carlo runs (default: 50)")
    p.add_argument("--steps", type=int, default=None, help=f"Steps per run ({default_steps_note})")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--scenario", type=int, choices=[1, 2], default=1)
    p.add_argument("--threads", type=int, default=None,
                   help="Worker threads (default: ASGHF_THREADS or min(4, cpus))")
    p.add_argument("--clock", choices=sorted(CLOCKS), default=RUN_CLOCK,
                   help=f"Run timer: per-thread CPU time or wall clock (default: {RUN_CLOCK})")
    p.add_argument("--out", default=None, help="Output directory for CSV/JSON")


def build_cli():
    parser = argparse.ArgumentParser(
        prog="asghf",
        description="Gauss-Hermite / sparse-grid / adaptive sparse-grid quadrature and filters"
    )

    parser.add_argument(
        "--cache",
        choices=sorted(CACHE_STRATEGIES),
        default="lru",
        help="Grid cache strategy (default: lru)"
    )
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true")
    verbosity.add_argument("-q", "--quiet", action="store_true")

    subparsers = parser.add_subparsers(dest="command")

    # table1
    p = subparsers.add_parser("table1", help="Problem 1 integral with GH / SGH / ASGH rules")
    p.add_argument("--dim", type=int, default=6)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_table1)

    # sinusoids
    p = subparsers.add_parser("sinusoids", help="Superimposed sinusoids Monte Carlo study")
    add_filter_arguments(p, "default: 500")
    p.set_defaults(func=cmd_sinusoids)

    # tracking
    p = subparsers.add_parser("tracking", help="Coordinated-turn tracking Monte Carlo study")
    add_filter_arguments(p, "default: 200")
    p.add_argument("--omega-deg", type=float, default=3.0, help="Turn rate in deg/s (default: 3)")
    p.set_defaults(func=cmd_tracking)

    # quad
    p = subparsers.add_parser("quad", help="Integrate sum x_i^(2i) against N(0, I)")
    p.add_argument("--rule", choices=["gh", "sgh", "asgh"], default="sgh")
    p.add_argument("--dim", type=int, default=6)
    p.add_argument("--points", type=int, default=3)
    p.add_argument("--level", type=int, default=3)
    p.add_argument("--psi", type=float, nargs=1)
    p.add_argument("--tol", type=float, nargs=1)
    p.add_argument("--dump", metavar="PREFIX", default=None,
                   help="Write the grid to PREFIX.csv (+ PREFIX.json for asgh)")
    p.set_defaults(func=cmd_quad)

    return parser


# -------------------------------------------------------------
# Entry point
# -------------------------------------------------------------

def main(argv: Optional[List[str]] = None) -> int:
    parser = build_cli()
    args = parser.parse_args(argv)
    configure_logging(args.verbose, args.quiet)

    if not hasattr(args, "func"):
        parser.print_help()
        return EXIT_OK

    try:
        configure_grid_cache(args.cache)
        args.func(args)
    except (ConfigError, InvalidArgumentError) as e:
        print(f"[ERROR] {e}", file=sys.stderr)
        return EXIT_CONFIG
    except FailureThresholdError as e:
        print(f"[ERROR] {e}", file=sys.stderr)
        for label, failures in e.failures.items():
            for run_index, message in failures.items():
                print(f"  {label} run {run_index}: {message}", file=sys.stderr)
        return EXIT_FAILURES
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
