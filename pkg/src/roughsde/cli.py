"""Command-line front end: ``rough-sde <subcommand> [flags]``.

Every subcommand writes ``<subcommand>-<timestamp>.csv`` (plus named
companions for multi-table outputs) into ``--out`` and a ``manifest.txt``
recording the full configuration.

Exit codes: 0 success, 2 bad flags, 3 failed precondition, 4 failed
numerical audit.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import sys
from pathlib import Path

import numpy as np

from . import bv_function as bv
from . import frac_calc as fc
from . import lamperti as lp
from . import variability as vb
from . import zaehle_integral as zi
from ._parallel import ordered_map
from .errors import (
    DomainError,
    EmbeddingError,
    InfeasibleIntegrandError,
    InvalidArgumentError,
    NonIntegrableCoefficientError,
    RangeExhaustedError,
)
from .grid_path import FbmSpec, Grid, derive_seeds, sample_fbm, write_path_csv

EXIT_OK, EXIT_USAGE, EXIT_PRECONDITION, EXIT_AUDIT = 0, 2, 3, 4

PRECONDITION_ERRORS = (InvalidArgumentError, DomainError, RangeExhaustedError, NonIntegrableCoefficientError)
AUDIT_ERRORS = (InfeasibleIntegrandError, zi.BoundViolationError, EmbeddingError)


class AuditFailure(Exception):
    """A verification subcommand found its property violated."""


# -- parsing ----------------------------------------------------------------------


def parse_sigma(text: str) -> bv.BVFunction:
    """``name:arg1,arg2,...`` for name in step, power, cantor, const."""
    name, _, rest = text.partition(":")
    try:
        args = [float(a) for a in rest.split(",") if a.strip()] if rest else []
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad sigma arguments in {text!r}") from None
    try:
        if name == "step":
            if len(args) not in (2, 3):
                raise argparse.ArgumentTypeError("step takes beta_plus,beta_minus[,a]")
            return bv.step_sigma(*args)
        if name == "power":
            if not 1 <= len(args) <= 3:
                raise argparse.ArgumentTypeError("power takes gamma[,scale[,center]]")
            return bv.power_sigma(*args)
        if name == "cantor":
            if not 1 <= len(args) <= 2:
                raise argparse.ArgumentTypeError("cantor takes eps0[,depth]")
            return bv.cantor_sigma(args[0], int(args[1]) if len(args) == 2 else bv.DEFAULT_CANTOR_DEPTH)
        if name == "const":
            if len(args) != 1:
                raise argparse.ArgumentTypeError("const takes one value")
            return bv.constant_sigma(args[0])
    except InvalidArgumentError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None
    raise argparse.ArgumentTypeError(f"unknown sigma preset {name!r} (step, power, cantor, const)")


def _float_list(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _int_list(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--sigma", type=parse_sigma, default=None, help="coefficient, e.g. step:4,1.3333 or power:0.5")
    common.add_argument("--H", type=float, default=0.75, help="Hurst index of the fBm driver")
    common.add_argument("--T", type=float, default=1.0)
    common.add_argument("--n", type=int, default=1024, help="grid steps")
    common.add_argument("--n-list", type=_int_list, default=None, help="grid sizes for convergence studies")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--seeds", type=int, default=20, help="number of replica paths")
    common.add_argument("--x0", type=float, default=None)
    common.add_argument("--eps-list", type=_float_list, default=[0.1])
    common.add_argument("--theta", type=float, default=None, help="fractional order (default: from the driver)")
    common.add_argument("--beta", type=float, default=zi.DEFAULT_BETA)
    common.add_argument("--var-eps", type=float, default=0.05)
    common.add_argument("--M", type=int, default=2000, help="Monte Carlo replicas")
    common.add_argument("--out", type=Path, default=Path("."))

    p = argparse.ArgumentParser(prog="rough-sde", description="Pathwise SDEs with discontinuous coefficients.")
    sub = p.add_subparsers(dest="command", required=True)

    sub.add_parser("gen-path", parents=[common], help="sample one fBm path")
    t = sub.add_parser("transform", parents=[common], help="dump a Lambda table")
    t.add_argument("--lo", type=float, default=None)
    t.add_argument("--hi", type=float, default=None)
    t.add_argument("--points", type=int, default=1001)
    sub.add_parser("solve", parents=[common], help="solve on one fBm path")
    v = sub.add_parser("verify-ito", parents=[common], help="chain-rule residual study")
    v.add_argument("--F", choices=["square", "linear"], default="square")
    b = sub.add_parser("verify-bound", parents=[common], help="composite Gagliardo bound ensemble")
    b.add_argument("--holder", type=float, default=None, help="Hölder order of the path (default H - 0.01)")
    b.add_argument("--p", type=float, default=1.0)
    sub.add_parser("verify-mollifier", parents=[common], help="mollifier convergence table")
    c = sub.add_parser("check-variability", parents=[common], help="variability audit")
    c.add_argument("--alpha", type=float, default=None, help="Hölder order (default H - 0.01)")
    c.add_argument("--y-points", type=int, default=vb.DEFAULT_Y_POINTS)
    e = sub.add_parser("experiment", parents=[common], help="preset end-to-end runs")
    e.add_argument("preset", choices=["step", "power", "cantor"])
    e.add_argument("--alpha", type=float, default=0.25, help="step preset: levels 1/alpha and 1/(1-alpha)")
    e.add_argument("--gamma", type=float, default=0.5, help="power preset exponent")
    e.add_argument("--eps0", type=float, default=0.5, help="cantor preset floor")
    return p


# -- output -----------------------------------------------------------------------


class Output:
    def __init__(self, directory: Path, command: str, argv):
        self.dir = Path(directory)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.stamp = _dt.datetime.now().strftime("%Y%m%dT%H%M%S%f")
        self.command = command
        self.argv = list(argv)
        self.files = []

    def path(self, suffix: str = "") -> Path:
        name = f"{self.command}-{self.stamp}{('-' + suffix) if suffix else ''}.csv"
        out = self.dir / name
        self.files.append(out.name)
        return out

    def table(self, header, rows, suffix: str = "") -> Path:
        out = self.path(suffix)
        with open(out, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for r in rows:
                w.writerow([_fmt(v) for v in r])
        return out

    def manifest(self, args):
        lines = [f"command: {self.command}", f"argv: {' '.join(self.argv)}", f"timestamp: {self.stamp}"]
        for k, v in sorted(vars(args).items()):
            if k == "sigma" and v is not None:
                v = v.name
            lines.append(f"{k}: {v}")
        lines.append(f"files: {', '.join(self.files)}")
        (self.dir / "manifest.txt").write_text("\n".join(lines) + "\n")


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


# -- helpers ---------------------------------------------------------------------


def _driver(args, n=None, seed=None):
    grid = Grid(args.T, n or args.n)
    return sample_fbm(FbmSpec(args.H, args.seed if seed is None else seed), grid)


def _sigma(args, fallback):
    return args.sigma if args.sigma is not None else fallback


def _nested(args, n_list, seed):
    """Driver at the finest size and its nested coarsenings."""
    finest = max(n_list)
    if any(finest % n for n in n_list):
        raise InvalidArgumentError(f"grid sizes {n_list} must divide the finest one")
    Y = _driver(args, finest, seed)
    return {n: Y.coarsen(finest // n) for n in n_list}


# -- subcommands -------------------------------------------------------------------


def cmd_gen_path(args, out: Output):
    Y = _driver(args)
    write_path_csv(Y, out.path())
    return f"wrote {Y.grid.n + 1} nodes"


def cmd_transform(args, out: Output):
    sigma = _sigma(args, bv.two_level_step(0.25))
    x0 = 0.0 if args.x0 is None else args.x0
    lam = lp.LampertiTransform(sigma, lp.default_base_point(sigma, x0))
    lo, hi = sigma.audit_interval()
    lo = lo if args.lo is None else args.lo
    hi = hi if args.hi is None else args.hi
    x, y = lam.table(lo, hi, args.points)
    out.table(["x", "lambda"], zip(x, y))
    return f"Lambda ({lam.strategy}) with base point {lam.a:g} on [{lo:g}, {hi:g}]"


def _write_solution(out: Output, res: lp.SolveResult, suffix=""):
    out.table(
        ["t", "Y", "X", "beyond_tau"],
        zip(res.Y.times, res.Y.values, res.X.values, res.beyond_tau),
        suffix,
    )
    out.table(["eps", "tau", "reached"], [(s.eps, s.time, s.reached) for s in res.taus], "tau" if not suffix else suffix + "-tau")


def cmd_solve(args, out: Output):
    sigma = _sigma(args, bv.two_level_step(0.25))
    Y = _driver(args)
    x0 = 0.0 if args.x0 is None else args.x0
    res = lp.solve(sigma, Y, x0, eps_list=args.eps_list, residual_theta=args.theta if args.theta is not None else "auto")
    _write_solution(out, res)
    return f"Lambda defect {res.lambda_defect:.3e}, sde residual {res.residual:.3e}"


def cmd_verify_ito(args, out: Output):
    F = lp.square_F() if args.F == "square" else lp.linear_F(1.0)
    n_list = args.n_list or [1024, 4096]
    seeds = derive_seeds(args.seed, args.seeds)

    def one(seed):
        paths = _nested(args, n_list, seed)
        return [lp.ito_residual(F, paths[n], args.theta) for n in n_list]

    table = np.array(ordered_map(one, seeds))
    med = np.median(table, axis=0)
    out.table(["n", "median_residual", "min_residual", "max_residual"],
              zip(n_list, med, table.min(axis=0), table.max(axis=0)))
    out.table(["seed"] + [f"n{n}" for n in n_list], [[s, *row] for s, row in zip(seeds, table)], "per-seed")
    return "medians " + ", ".join(f"n={n}: {m:.3e}" for n, m in zip(n_list, med))


def cmd_verify_bound(args, out: Output):
    sigma = _sigma(args, bv.two_level_step(0.25))
    theta = 0.3 if args.theta is None else args.theta
    holder = args.holder if args.holder is not None else args.H - 0.01
    seeds = derive_seeds(args.seed, args.seeds)

    def one(seed):
        X = _driver(args, seed=seed)
        lhs = fc.gagliardo(X.map(sigma), theta, args.p).grid_value
        rhs = fc.composite_bound_rhs(sigma, X, theta, args.p, holder)
        return seed, lhs, rhs, lhs <= rhs

    rows = ordered_map(one, seeds)
    out.table(["seed", "gagliardo", "bound", "holds"], rows)
    held = sum(r[3] for r in rows)
    if held < len(rows):
        raise AuditFailure(f"composite bound violated on {len(rows) - held} of {len(rows)} paths")
    return f"bound held on {held}/{len(rows)} paths"


def cmd_verify_mollifier(args, out: Output):
    sigma = _sigma(args, bv.two_level_step(0.25))
    theta = 0.3 if args.theta is None else args.theta
    n_list = args.n_list or [4, 16, 64, 256]
    seeds = derive_seeds(args.seed, args.seeds)
    audit = sigma.audit_grid()
    base = sigma(audit)
    molls = {m: bv.mollify(sigma, m) for m in n_list}
    dominates = {m: bool(np.all(molls[m](audit) >= base - 1e-12)) for m in n_list}

    x0 = 0.0 if args.x0 is None else args.x0

    def one(seed):
        X = lp.solve(sigma, _driver(args, seed=seed), x0).X
        sx = X.map(sigma)
        return [fc.gagliardo(X.map(molls[m]) - sx, theta, 1.0).grid_value for m in n_list]

    table = np.array(ordered_map(one, seeds))
    med = np.median(table, axis=0)
    out.table(["n", "median_seminorm", "dominates"], [(m, v, dominates[m]) for m, v in zip(n_list, med)])
    out.table(["seed"] + [f"n{m}" for m in n_list], [[s, *row] for s, row in zip(seeds, table)], "per-seed")
    if not all(dominates.values()):
        raise AuditFailure("mollified coefficient fell below sigma on the audit grid")
    return "medians " + ", ".join(f"n={m}: {v:.3e}" for m, v in zip(n_list, med))


def cmd_check_variability(args, out: Output):
    alpha = args.alpha if args.alpha is not None else args.H - 0.01
    params = vb.VariabilityParams(alpha, args.beta, args.var_eps)
    rep = vb.estimate_assumption(FbmSpec(args.H), params, None, args.M, Grid(args.T, args.n), args.seed, args.y_points)
    vb.write_report_csv(rep, out.path())
    if not rep.stable:
        raise AuditFailure(f"sup estimate not stable under doubling M: {rep.sup:.4g} vs {rep.sup_doubled:.4g}")
    return f"sup {rep.sup:.4g} (q={rep.q:.4f}), stable; swapped order {rep.mean_of_sup:.4g}"


def cmd_experiment(args, out: Output):
    if args.preset == "step":
        sigma, x0, T = bv.two_level_step(args.alpha), 0.0, args.T
    elif args.preset == "power":
        sigma, x0, T = bv.power_sigma(args.gamma), 1.0, min(args.T, 0.25)
    else:
        sigma, x0, T = bv.cantor_sigma(args.eps0), 0.5, args.T
    if args.sigma is not None:
        sigma = args.sigma
    if args.x0 is not None:
        x0 = args.x0
    args.T = T
    n = args.n
    n_list = args.n_list or [n // 8, n // 4, n // 2, n]
    paths = _nested(args, n_list, args.seed)
    rows = []
    for m in n_list:
        res = lp.solve(sigma, paths[m], x0, eps_list=args.eps_list)
        rows.append((m, lp.sde_residual(sigma, res.X, paths[m], args.theta), res.lambda_defect))
        if m == max(n_list):
            _write_solution(out, res, "path")
    out.table(["n", "sde_residual", "lambda_defect"], rows)
    return "residuals " + ", ".join(f"n={m}: {r:.3e}" for m, r, _ in rows)


COMMANDS = {
    "gen-path": cmd_gen_path,
    "transform": cmd_transform,
    "solve": cmd_solve,
    "verify-ito": cmd_verify_ito,
    "verify-bound": cmd_verify_bound,
    "verify-mollifier": cmd_verify_mollifier,
    "check-variability": cmd_check_variability,
    "experiment": cmd_experiment,
}


def run(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    out = Output(args.out, args.command, argv)
    try:
        message = COMMANDS[args.command](args, out)
    except PRECONDITION_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    except AUDIT_ERRORS + (AuditFailure,) as exc:
        print(f"audit failed: {exc}", file=sys.stderr)
        out.manifest(args)
        return EXIT_AUDIT
    out.manifest(args)
    print(f"{args.command}: {message}")
    for f in out.files:
        print(f"  {out.dir / f}")
    return EXIT_OK


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
