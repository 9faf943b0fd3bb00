"""Command-line frontend: ``triad <subcommand> [options]``.

Every option can also be given in a JSON file passed with ``--config``; keys
are the long option names with dashes replaced by underscores.  Flags given
on the command line override the file, which overrides the defaults.
Component, variable and axis indices are 1-based on the command line.

Exit status: 0 on success, 2 when the rank condition fails, 1 on any input,
parse or runtime error.  Outputs are written to a temporary file and renamed
on success, so failures leave no partial files behind.
"""
from __future__ import annotations

import argparse
import io
import json
import logging
import os
import sys
import tempfile
import warnings

import numpy as np

from . import __version__, jointdiag, models, multiway, simulate
from .basis import get_basis
from .decompose import DeficientRankError, decomposition_provider, recover_all_factors, table_provider
from .density import confidence_interval, pointwise_se

log = logging.getLogger("triad")

EXIT_OK, EXIT_ERROR, EXIT_RANK = 0, 1, 2


class UsageError(Exception):
    """Invalid configuration; reported with exit status 1."""


def _atomic_write(path: str, text: str) -> None:
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".triad-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _emit(path, text):
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        _atomic_write(path, text)


def _read(path: str) -> str:
    with open(path) as fh:
        return fh.read()


def _int_list(text):
    return [int(t) for t in str(text).split(",") if t.strip()]


def _float_list(text):
    return [float(t) for t in str(text).split(",") if t.strip()]


def _seed(value):
    if value is not None:
        return int(value)
    env = os.environ.get("TRIAD_SEED")
    return int(env) if env not in (None, "") else 0


def _read_sample(path):
    """Numeric CSV (comment lines with '#', optional header) or count-table JSON."""
    text = _read(path)
    if text.lstrip().startswith("{"):
        d = json.loads(text)
        return multiway.array_from_json(json.dumps(d)) if "dims" in d else np.asarray(d["values"]), True
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    try:
        float(lines[0].split(",")[0])
    except ValueError:
        lines = lines[1:]
    return np.loadtxt(io.StringIO("\n".join(lines)), delimiter=",", ndmin=2), False


def _jd_options(a):
    return {"tol": a.tol, "max_sweeps": a.max_sweeps, "restarts": a.restarts, "seed": a.seed}


# ---------------------------------------------------------------- commands


def cmd_decompose(a):
    d = json.loads(_read(a.input))
    if "factors" in d:
        dec = multiway.QadDecomposition.from_dict(d)
        x, provider = multiway.compose(dec), decomposition_provider(dec)
    else:
        x = multiway.array_from_json(json.dumps(d))
        provider = table_provider(x)
    partitions = None
    if a.partition:
        # "pivot:g1:g2" with comma-separated 1-based axes
        partitions = {}
        for item in a.partition:
            pv, g1, g2 = item.split(":")
            partitions[int(pv) - 1] = (tuple(i - 1 for i in _int_list(g1)), tuple(i - 1 for i in _int_list(g2)))
    report = recover_all_factors(x, provider, a.r, partitions=partitions, rank_tol=a.rank_tol,
                                 jd_options=_jd_options(a), residual_bound=a.residual_bound)
    _emit(a.output, report.to_json() + "\n")


def cmd_jadiag(a):
    problem = jointdiag.JointDiagProblem.from_dict(json.loads(_read(a.input)))
    result = jointdiag.solve(problem, tol=a.tol, max_sweeps=a.max_sweeps, restarts=a.restarts,
                             seed=a.seed, strict=False)
    _emit(a.output, result.to_json() + "\n")


def _grid(spec):
    lo, hi, m = _float_list(spec)
    return np.linspace(lo, hi, int(m))


def _grid_csv(rows):
    out = ["# triad grid csv v1", "variable,component,y,fhat,se,lo,hi"]
    for v, c, y, f, s, lo, hi in rows:
        out.append(f"{v},{c},{y!r},{f!r},{s!r},{lo!r},{hi!r}")
    return "\n".join(out) + "\n"


def _grid_rows(variable, component, w, y, est, grid):
    se = pointwise_se(w, y, est, grid) / np.sqrt(y.size)
    lo, hi = confidence_interval(w, y, est, grid)
    f = est(grid)
    return [(variable, component, float(g), float(fv), float(s), float(l), float(h))
            for g, fv, s, l, h in zip(grid, f, se, lo, hi)]


def cmd_fit_mixture(a):
    data, is_table = _read_sample(a.input)
    if is_table:
        est = models.fit_discrete_mixture(data, a.r, mass_bound=a.mass_bound, jd_options=_jd_options(a))
    else:
        est = models.fit_continuous_mixture(data, a.r, get_basis(a.basis), a.kappas, kappa_max=a.kappa_max,
                                            kappa=a.kappa, jd_options=_jd_options(a))
        if a.grid_out:
            rows = []
            for i, row in enumerate(est.densities):
                for j, e in enumerate(row):
                    rows += _grid_rows(i + 1, j + 1, est.weights[i][:, j], data[:, i], e, _grid(a.grid))
            _atomic_write(a.grid_out, _grid_csv(rows))
    _emit(a.output, json.dumps(est.to_dict(), indent=1) + "\n")


def cmd_fit_hmm(a):
    data, is_table = _read_sample(a.input)
    if is_table:
        est = models.fit_hmm(data, a.r, mass_bound=a.mass_bound, jd_options=_jd_options(a))
    elif a.discrete:
        est = models.fit_hmm(data.astype(int) - 1, a.r, kappa=a.kappa, mass_bound=a.mass_bound,
                             jd_options=_jd_options(a))
    else:
        est = models.fit_hmm(data, a.r, basis=get_basis(a.basis), kappas=a.kappas, kappa_max=a.kappa_max,
                             series_kappa=a.kappa, mass_bound=a.mass_bound, jd_options=_jd_options(a))
        if a.grid_out:
            rows = []
            for j, e in enumerate(est.emissions):
                rows += _grid_rows(2, j + 1, est.weights[:, j], data[:, 1], e, _grid(a.grid))
            _atomic_write(a.grid_out, _grid_csv(rows))
    _emit(a.output, json.dumps(est.to_dict(), indent=1) + "\n")


def _design(a):
    d = dict(a.design_params or {})
    d.setdefault("kind", a.design)
    if a.pi is not None:
        d["pi"] = _float_list(a.pi)
    return simulate.design_from_dict(d)


def cmd_gen(a):
    design = _design(a)
    if isinstance(design, simulate.DiscreteDesign):
        counts = design.draw_counts(a.n, a.seed)
        _emit(a.output, multiway.array_to_json(counts) + "\n")
        return
    if isinstance(design, simulate.HmmSkewNormal):
        y, z = simulate.draw_hmm(design, a.n, a.seed)
    else:
        y, z = simulate.draw_mixture(design, a.n, a.seed)
    header = ",".join(f"y{i + 1}" for i in range(y.shape[1]))
    buf = io.StringIO()
    np.savetxt(buf, y, delimiter=",", header=header, comments="", fmt="%.17g")
    _emit(a.output, buf.getvalue())
    if a.labels_out:
        lab = io.StringIO()
        np.savetxt(lab, np.atleast_2d((z + 1).T).T, delimiter=",", fmt="%d")
        _atomic_write(a.labels_out, lab.getvalue())


def cmd_experiment(a):
    workers = a.workers or os.cpu_count() or 1
    if a.kind == "rmise":
        design = _design(a)
        if not isinstance(design, simulate.GaussianMixture):
            raise UsageError("rmise experiments need a gaussian-mixture or t-mixture design")
        pis = _float_list(a.pis)
        report = simulate.run_rmise(design, pis, reps=a.reps, n=a.n, seed=a.seed, workers=workers,
                                    basis=get_basis(a.basis), kappas=a.kappas, kappa_max=a.kappa_max,
                                    kappa=a.kappa)
    else:
        d = dict(a.design_params or {})
        d["kind"] = "hmm-skew-normal"
        report = simulate.run_coverage(simulate.design_from_dict(d), reps=a.reps, n=a.n, level=a.level,
                                       seed=a.seed, workers=workers, basis=get_basis(a.basis),
                                       kappas=a.kappas, kappa_max=a.kappa_max, series_kappa=a.kappa)
    if a.csv:
        _atomic_write(a.csv, report.to_csv())
    _emit(a.output, report.to_json() + "\n")


# ---------------------------------------------------------------- parser

DEFAULTS = {
    "r": 2, "tol": 1e-12, "max_sweeps": 200, "restarts": 5, "rank_tol": 1e-10,
    "residual_bound": None, "partition": None, "basis": "hermite", "kappas": 10,
    "kappa_max": 10, "kappa": None, "mass_bound": 0.05, "grid": "-6,6,121",
    "grid_out": None, "discrete": False, "design": "gaussian-mixture", "design_params": None,
    "pi": None, "n": 500, "labels_out": None, "reps": 100, "pis": "0.2,0.3,0.4,0.5",
    "level": 0.95, "workers": None, "csv": None, "output": "-",
}


def _common(p, *, jd=True):
    p.add_argument("--config", help="JSON file of option values; flags override it")
    p.add_argument("--seed", type=int, help="master seed (default: $TRIAD_SEED, else 0)")
    p.add_argument("-o", "--output", help="output file, '-' for stdout (default)")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    if jd:
        p.add_argument("--tol", type=float, help="relative criterion decrease that stops the solver")
        p.add_argument("--max-sweeps", type=int, help="sweep limit of the joint diagonalizer")
        p.add_argument("--restarts", type=int, help="random restarts of the joint diagonalizer")


def _fit_args(p):
    p.add_argument("input", nargs="?", help="CSV sample (n rows, one column per variable) or JSON count table")
    p.add_argument("-r", type=int, help="number of latent components")
    p.add_argument("--basis", choices=["hermite", "legendre"], help="orthonormal basis")
    p.add_argument("--kappas", type=int, help="basis truncation of the moment array")
    p.add_argument("--kappa-max", type=int, help="largest series truncation tried by cross-validation")
    p.add_argument("--kappa", type=int, help="fixed series truncation (skips cross-validation)")
    p.add_argument("--mass-bound", type=float, help="warn when probability repair moves more mass")
    p.add_argument("--grid", help="evaluation grid 'lo,hi,m' for --grid-out")
    p.add_argument("--grid-out", help="CSV of estimates with standard errors and 95%% intervals on the grid")


def _design_args(p):
    p.add_argument("--design", choices=["gaussian-mixture", "t-mixture", "hmm-skew-normal", "discrete-mixture"],
                   help="data-generating design")
    p.add_argument("--design-params", type=json.loads, help="JSON object of design parameters")
    p.add_argument("--pi", help="comma-separated mixing proportions")
    p.add_argument("-n", type=int, help="sample size")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="triad", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"triad {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("decompose", help="recover the factors and weights of a q-ad")
    p.add_argument("input", nargs="?", help="array JSON {dims, values} or decomposition JSON {factors, weights}")
    p.add_argument("-r", type=int, help="number of components")
    p.add_argument("--partition", action="append",
                   help="unfolding 'pivot:g1:g2', e.g. '1:2:3,4' (1-based; repeatable)")
    p.add_argument("--rank-tol", type=float, help="relative singular-value threshold of the rank check")
    p.add_argument("--residual-bound", type=float, help="fail if the relative residual exceeds this")
    _common(p)
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("jadiag", help="jointly diagonalize a stack of matrices")
    p.add_argument("input", nargs="?", help="problem JSON {matrices: [...]}")
    _common(p)
    p.set_defaults(func=cmd_jadiag)

    p = sub.add_parser("fit-mixture", help="estimate a discrete or continuous multivariate mixture")
    _fit_args(p)
    _common(p)
    p.set_defaults(func=cmd_fit_mixture)

    p = sub.add_parser("fit-hmm", help="estimate a hidden Markov model from three consecutive outcomes")
    _fit_args(p)
    p.add_argument("--discrete", action="store_true",
                   help="treat the CSV as 1-based category codes; --kappa gives the number of categories")
    _common(p)
    p.set_defaults(func=cmd_fit_hmm)

    p = sub.add_parser("gen", help="draw a sample from a design")
    _design_args(p)
    p.add_argument("--labels-out", help="CSV of the latent labels (1-based)")
    _common(p, jd=False)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("experiment", help="Monte Carlo experiments")
    p.add_argument("kind", choices=["rmise", "coverage"])
    _design_args(p)
    p.add_argument("--reps", type=int, help="Monte Carlo replications")
    p.add_argument("--pis", help="comma-separated grid of first mixing proportions (rmise)")
    p.add_argument("--level", type=float, help="confidence level (coverage)")
    p.add_argument("--workers", type=int, help="parallel worker processes (default: available cores)")
    p.add_argument("--csv", help="tidy CSV of the report")
    p.add_argument("--basis", choices=["hermite", "legendre"], help="orthonormal basis")
    p.add_argument("--kappas", type=int, help="basis truncation of the moment array")
    p.add_argument("--kappa-max", type=int, help="largest series truncation tried by cross-validation")
    p.add_argument("--kappa", type=int, help="fixed series truncation")
    _common(p, jd=False)
    p.set_defaults(func=cmd_experiment)
    return parser


def _merge_config(parser, args):
    """Fill unset options from ``--config`` and then the defaults."""
    dests = {a.dest for a in parser._subparsers._group_actions[0].choices[args.command]._actions}
    dests -= {"help", "config"}
    cfg = {}
    if args.config:
        cfg = json.loads(_read(args.config))
        if not isinstance(cfg, dict):
            raise UsageError("config must be a JSON object")
        unknown = sorted(set(cfg) - dests)
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(unknown)}")
    for dest in dests:
        if getattr(args, dest, None) in (None, False) and dest in cfg:
            setattr(args, dest, cfg[dest])
        if getattr(args, dest, None) is None and dest in DEFAULTS:
            setattr(args, dest, DEFAULTS[dest])
    if "input" in dests and not args.input:
        raise UsageError("an input file is required")
    if hasattr(args, "kappas") and isinstance(args.kappas, str):
        args.kappas = _int_list(args.kappas)
    args.seed = _seed(args.seed)
    return args


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args = _merge_config(parser, args)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="triad: %(message)s")
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            args.func(args)
    except DeficientRankError as exc:
        print(f"triad: {exc}", file=sys.stderr)
        return EXIT_RANK
    except (UsageError, OSError, ValueError, KeyError, TypeError, RuntimeError, np.linalg.LinAlgError) as exc:
        print(f"triad: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    return EXIT_OK


def main_exit() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_exit()
