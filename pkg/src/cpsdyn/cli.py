"""Command-line front end: ``cpsdyn {exact,simulate,solve-f,sweep,validate}``.

Exit codes: 0 success, 1 usage or configuration error, 2 numerical validation
failure, 3 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import estimator as est
from . import io as cio
from . import representations as reps
from .propagator import exact_population_matrix, propagator_angles

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_IO = 0, 1, 2, 3
DEFAULT_LAMBDAS = "0.02,0.2,2,20"
DEFAULT_SWEEP_METHODS = "sqz,case1"
SWEEP_TOLERANCE = 0.01

log = logging.getLogger("cpsdyn")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# flag name -> (type, help); defaults live in RunConfig so that the config file can fill gaps
_RUN_FLAGS = {
    "h11": (float, "diagonal element H11 (default 10)"),
    "h22": (float, "diagonal element H22 (default 2)"),
    "lambda": (float, "real coupling H12 (default 2); shorthand for --h12-re with --h12-im 0"),
    "h12-re": (float, "real part of H12"),
    "h12-im": (float, "imaginary part of H12"),
    "method": (str, "sqz, case1, case2, sqc-twf, covariant or custom (default sqz)"),
    "gamma": (float, "zero-point parameter, > -1/2 (default 0.5)"),
    "ntraj": (str, "trajectories per initial state (default 100000)"),
    "seed": (int, "master seed (default 42)"),
    "tmax": (float, "final time (default 3 Rabi periods)"),
    "dt": (float, "grid spacing (default Rabi period / 200)"),
    "out": (str, "output path (default: stdout; a directory for sweep)"),
    "xi-table": (str, "CSV with columns xi,value (method=custom)"),
    "f-table": (str, "CSV with columns y,f (method=custom)"),
    "threads": (int, "worker threads (default 1); results do not depend on it"),
}


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value file; flags override its entries")
    for name, (typ, help_) in _RUN_FLAGS.items():
        p.add_argument(f"--{name}", dest=name.replace("-", "_"), type=typ, default=argparse.SUPPRESS, help=help_)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cpsdyn", description="Population dynamics of a two-level system by phase-space trajectories.")
    parser.add_argument("--version", action="version", version=f"cpsdyn {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("exact", help="exact populations |U_mn(t)|^2 on the grid")
    _add_run_flags(p)
    p = sub.add_parser("simulate", help="trajectory estimate of the populations from state 1")
    _add_run_flags(p)
    p = sub.add_parser("solve-f", help="tabulate the weight generator for a normalisation profile")
    _add_run_flags(p)
    p.add_argument("--xi", default=None, help="built-in profile: sqz, case1, case2 or constant-one")
    p = sub.add_parser("sweep", help="simulate over several couplings and methods")
    _add_run_flags(p)
    p.add_argument("--lambdas", default=DEFAULT_LAMBDAS, help=f"comma-separated couplings (default {DEFAULT_LAMBDAS})")
    p.add_argument("--methods", default=DEFAULT_SWEEP_METHODS,
                   help=f"comma-separated methods (default {DEFAULT_SWEEP_METHODS})")
    p = sub.add_parser("validate", help="run the invariant suite and print a JSON report")
    p.add_argument("--out", default=None, help="also write the JSON report here")
    p.add_argument("--ntraj", type=int, default=20_000, help="trajectories for the Monte Carlo checks")
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--groups", default=None, help="comma-separated subset of groups")
    return parser


def _config(args, drop=()) -> cio.RunConfig:
    flags = {k: cio.convert_value(k, v) for k, v in vars(args).items() if k in _flag_keys() and k not in drop}
    file_values = cio.read_config_file(args.config) if getattr(args, "config", None) else {}
    file_values = {k: v for k, v in file_values.items() if k not in drop}
    return cio.build_config(file_values, flags)


def _flag_keys() -> set:
    return {cio.normalise_key(k) for k in _RUN_FLAGS}


# --- representation dispatch ---------------------------------------------------

def resolve_rep(cfg: cio.RunConfig) -> reps.IsomorphismRep | None:
    """The (f, Xi) pair for novel-class methods; None for sqc-twf and covariant."""
    if cfg.method in ("sqz", "case1", "case2"):
        return reps.builtin_rep(cfg.method)
    if cfg.method != "custom":
        return None
    if cfg.xi_table is not None:
        xi = reps.read_xi_table(cfg.xi_table)
        return reps.IsomorphismRep(reps.abel_solve_f(xi), xi, f"custom[{xi.name}]")
    f = reps.read_f_table(cfg.f_table)
    return reps.IsomorphismRep(f, None, f"custom[{f.name}]")


def simulate_series(cfg: cio.RunConfig, states=(1,)) -> est.PopulationSeries:
    ens = est.EnsembleConfig(cfg.ntraj, cfg.seed, cfg.gamma, cfg.time_grid(), cfg.threads)
    h = cfg.hamiltonian
    if cfg.method == "sqc-twf":
        return est.run_sqc_twf(h, ens, states)
    if cfg.method == "covariant":
        return est.run_covariant(h, cfg.gamma, ens, states)
    return est.run_novel(h, resolve_rep(cfg), ens, states)


def simulate_columns(cfg: cio.RunConfig, series: est.PopulationSeries) -> dict:
    exact = exact_population_matrix(cfg.hamiltonian, series.times)
    p1, p2 = series.pop[:, 0, 0], series.pop[:, 0, 1]
    return {
        "t": series.times, "P1": p1, "P2": p2, "P1mP2": p1 - p2,
        "P1_exact": exact[:, 0, 0], "P2_exact": exact[:, 1, 0],
        "stderr_P1": series.stderr[:, 0, 0], "cbar": series.cbar[:, 0], "xi": series.xi,
    }


def _comments(command: str, cfg: cio.RunConfig, extra=()) -> list[str]:
    return [f"cpsdyn {__version__} {command} {cfg.describe()}", *extra]


def _emit(text: str, out) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        with open(out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


# --- commands ------------------------------------------------------------------

def cmd_exact(cfg: cio.RunConfig) -> int:
    t = cfg.time_grid()
    pm = exact_population_matrix(cfg.hamiltonian, t)
    xi = propagator_angles(cfg.hamiltonian, t).xi
    cols = {"t": t, "P11": pm[:, 0, 0], "P12": pm[:, 0, 1], "P21": pm[:, 1, 0], "P22": pm[:, 1, 1], "xi": xi}
    _emit(cio.csv_text(cols, _comments("exact", cfg)), cfg.out)
    return EXIT_OK


def cmd_simulate(cfg: cio.RunConfig) -> int:
    series = simulate_series(cfg)
    _emit(cio.csv_text(simulate_columns(cfg, series), _comments("simulate", cfg)), cfg.out)
    return EXIT_OK


def cmd_solve_f(cfg: cio.RunConfig, xi_name: str | None, xi_table: str | None) -> int:
    if (xi_name is None) == (xi_table is None):
        raise UsageError("solve-f needs exactly one of --xi NAME or --xi-table PATH")
    if xi_name is not None:
        if xi_name not in reps.BUILTIN_XI:
            raise UsageError(f"unknown profile {xi_name!r}; choose from {', '.join(reps.BUILTIN_XI)}")
        xi = reps.BUILTIN_XI[xi_name]
    else:
        xi = reps.read_xi_table(xi_table)
    f = reps.abel_solve_f(xi)
    rep = reps.IsomorphismRep(f, xi, xi.name)
    grid = np.linspace(0.0, reps.HALF_PI, 32)
    residual = max(reps.residual_integral_equation(rep, x) for x in grid)
    comments = [f"cpsdyn {__version__} solve-f xi={xi.name} rows={len(f.y_table)}",
                f"integral-equation residual max over 32 xi points: {residual:.3e}"]
    _emit(cio.csv_text({"y": f.y_table, "f": f.f_table}, comments), cfg.out)
    return EXIT_OK


def _parse_list(text: str, kind, name: str) -> list:
    items = [s.strip() for s in text.split(",") if s.strip()]
    if not items:
        raise UsageError(f"--{name} must not be empty")
    try:
        return [kind(s) for s in items]
    except ValueError as exc:
        raise UsageError(f"bad --{name}: {exc}") from None


def cmd_sweep(cfg: cio.RunConfig, lambdas_text: str, methods_text: str) -> int:
    lambdas = _parse_list(lambdas_text, float, "lambdas")
    methods = _parse_list(methods_text, str, "methods")
    bad = [m for m in methods if m not in cio.METHODS or m == "custom"]
    if bad:
        raise UsageError(f"sweep methods must be built-in; got {', '.join(bad)}")
    if cfg.out is None:
        raise UsageError("sweep needs --out DIRECTORY")
    outdir = Path(cfg.out)
    outdir.mkdir(parents=True, exist_ok=True)
    rows = {"lambda": [], "method": [], "max_abs_dev": [], "max_stderr_P1": [], "status": []}
    failed = False
    for lam in lambdas:
        for method in methods:
            status, dev, err = "ok", math.nan, math.nan
            try:
                run = cio.build_config({}, {**_base_values(cfg), "lambda": lam, "method": method})
                series = simulate_series(run)
                cols = simulate_columns(run, series)
                dev = float(np.max(np.abs(cols["P1mP2"] - (cols["P1_exact"] - cols["P2_exact"]))))
                err = float(np.max(cols["stderr_P1"]))
                cio.write_csv(outdir / f"simulate_lambda{lam:g}_{method}.csv", cols, _comments("simulate", run))
                if dev > SWEEP_TOLERANCE:
                    status = f"deviation above {SWEEP_TOLERANCE:g}"
            except (ArithmeticError, ValueError) as exc:
                status = f"error: {exc}".replace(",", ";").replace("\n", " ")
                failed = True
            log.info("lambda=%g method=%s status=%s", lam, method, status)
            for k, v in zip(rows, (lam, method, dev, err, status)):
                rows[k].append(v)
    cio.write_csv(outdir / "summary.csv", rows, _comments("sweep", cfg, [f"lambdas={lambdas_text} methods={methods_text}"]))
    return EXIT_NUMERIC if failed else EXIT_OK


def _base_values(cfg: cio.RunConfig) -> dict:
    keep = ("h11", "h22", "gamma", "ntraj", "seed", "tmax", "dt", "threads")
    return {k: getattr(cfg, k) for k in keep}


def cmd_validate(out: str | None, ntraj: int, seed: int, groups: str | None) -> int:
    from .validation import GROUPS, run_validation

    names = _parse_list(groups, str, "groups") if groups else None
    if names and any(n not in GROUPS for n in names):
        raise UsageError(f"groups must be among {', '.join(GROUPS)}")
    report = run_validation(names, n_traj=ntraj, seed=seed)
    text = json.dumps(report, indent=2) + "\n"
    sys.stdout.write(text)
    if out is not None:
        with open(out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    return EXIT_OK if report["passed"] else EXIT_NUMERIC


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # usage errors, --help and --version
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        if args.command == "validate":
            return cmd_validate(args.out, args.ntraj, args.seed, args.groups)
        if args.command == "solve-f":
            cfg = _config(args, drop=("xi_table", "method"))
            return cmd_solve_f(cfg, args.xi, getattr(args, "xi_table", None))
        cfg = _config(args)
        if args.command == "exact":
            return cmd_exact(cfg)
        if args.command == "simulate":
            return cmd_simulate(cfg)
        return cmd_sweep(cfg, args.lambdas, args.methods)
    except (UsageError, cio.ConfigError) as exc:
        print(f"cpsdyn: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except reps.AdmissibilityError as exc:
        print(f"cpsdyn: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ArithmeticError as exc:
        print(f"cpsdyn: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except BrokenPipeError:
        # reader went away (e.g. piped into head); silence the flush at interpreter exit
        os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
        return EXIT_OK
    except OSError as exc:
        print(f"cpsdyn: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        # malformed tables and out-of-domain inputs
        print(f"cpsdyn: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
