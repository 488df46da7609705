"""Command-line entry point: ``gw-dual <command> ...``.

Single solves print a JSON report, sweeps print CSV. Exit codes: 0 success,
1 input error, 2 solver non-convergence.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from . import experiments as ex
from .gen_dual import build_quadratic_form, diagonalize, dumps_json as gen_dual_json
from .measures import MeasureFormatError, center, load_measure
from .one_dim import XI_VARIANTS, make_xi_datasets
from .oracle import brute_force_gw_uniform
from .procrustes import ISOMETRY, ORTHOGONAL, check_lemma_lower, check_lemma_upper, wasserstein_procrustes

EXIT_OK, EXIT_INPUT, EXIT_NONCONVERGED = 0, 1, 2

# per-command defaults, overridden by --config and then by explicit flags
DEFAULTS = {
    "gap-sweep": {"epsilon_grid": [2.0**-k for k in range(11)], "n_grid": [6]},
    "plan-sweep": {"epsilon_grid": [2.0**-k for k in range(11)]},
    "rate-sweep": {},
    "scaling-identity": {"n_grid": [3, 4, 5, 6, 7], "trials": 10, "dims": (2, 2)},
}


class NotConverged(Exception):
    pass


def _config(args, command) -> ex.SweepConfig:
    doc = dict(DEFAULTS.get(command, {}))
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            doc.update(json.load(fh))
    if args.seed is not None:
        doc["seed"] = args.seed
    if args.threads is not None:
        doc["threads"] = args.threads
    if args.out is not None:
        doc["output_path"] = args.out
    return ex.SweepConfig.from_dict(doc)


def _emit(text: str, path: str | None):
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text if text.endswith("\n") else text + "\n")
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


def _pair(args):
    return load_measure(args.mu, args.format), load_measure(args.nu, args.format)


def _solve_opts(args) -> dict:
    opts = {}
    if args.starts is not None:
        opts["n_starts"] = args.starts
    if args.seed is not None:
        opts["seed"] = args.seed
    if args.threads:
        opts["workers"] = args.threads
    return opts


def cmd_solve(args, argv):
    mu, nu = _pair(args)
    eps = getattr(args, "epsilon", 0.0)
    report = ex.solve_report(mu, nu, eps, command=argv, **_solve_opts(args))
    _emit(report.to_json(), args.out)
    if not report.converged:
        raise NotConverged("outer loop did not converge")


def cmd_oracle(args, argv):
    mu, nu = _pair(args)
    res = brute_force_gw_uniform(mu, nu, workers=args.threads or 1)
    doc = {
        "command": argv,
        "value": res.value,
        "sqrt_value": float(np.sqrt(max(res.value, 0.0))),
        "argmin": [list(map(int, p.sigma)) for p in res.argmin],
        "tolerance": res.tolerance,
        "evaluated": res.evaluated,
    }
    _emit(json.dumps(doc, indent=2), args.out)


def _maybe_pair(args, fallback):
    if args.mu and args.nu:
        return _pair(args)
    if args.mu or args.nu:
        raise ValueError("give both measures or neither")
    return fallback()


def cmd_gap_sweep(args, argv):
    cfg = _config(args, "gap-sweep")
    mu, nu = _maybe_pair(args, lambda: ex.gap_instance(cfg.seed, cfg.n_grid[0], cfg.dims[0]))
    gw_value, rows = ex.gap_sweep(mu, nu, cfg.epsilon_grid, cfg.threads)
    _emit(ex.gap_sweep_csv(gw_value, rows, {"seed": cfg.seed}), cfg.output_path)
    if not all(r.converged for r in rows):
        raise NotConverged("some EGW solves did not converge")


def cmd_plan_sweep(args, argv):
    cfg = _config(args, "plan-sweep")

    def default():
        mu, nu = make_xi_datasets(args.n, args.xi, args.variant)
        return center(mu)[0], center(nu)[0]

    mu, nu = _maybe_pair(args, default)
    oracle, rows = ex.plan_sweep(mu, nu, cfg.epsilon_grid, cfg.threads)
    meta = {"uniqueArgmin": len(oracle.argmin) == 1}
    _emit(ex.plan_sweep_csv(oracle, rows, meta), cfg.output_path)
    if not all(r.converged for r in rows):
        raise NotConverged("some EGW solves did not converge")


def cmd_rate_sweep(args, argv):
    cfg = _config(args, "rate-sweep")
    res = ex.rate_sweep(cfg, args.mode, args.estimator)
    _emit(ex.rate_sweep_csv(res, {"mode": args.mode, "estimator": args.estimator, "seed": cfg.seed}), cfg.output_path)
    print(f"slope={res.slope}", file=sys.stderr)


def cmd_scaling_identity(args, argv):
    cfg = _config(args, "scaling-identity")
    rows = ex.scaling_identity(cfg, tol=cfg.tol("identity", 1e-8))
    _emit(ex.scaling_identity_csv(rows, {"seed": cfg.seed}), cfg.output_path)
    if not all(r.holds for r in rows):
        print("scaling identity violated on some trials", file=sys.stderr)


def cmd_one_dim(args, argv):
    outcomes = ex.one_dim_study(args.n, args.xi, args.grid, args.variant, args.threads or 1)
    text = ex.one_dim_summary_csv(outcomes, {"n": args.n, "variant": args.variant})
    if args.profiles:
        text += "".join(o.csv() for o in outcomes)
    _emit(text, args.out)


def cmd_procrustes(args, argv):
    mu, nu = _pair(args)
    pr = wasserstein_procrustes(mu, nu, args.group, seed=args.seed or 0)
    doc = {"command": argv, "value": pr.value, "rotation": pr.rotation.tolist(), "certified": pr.certified}
    if args.lemma:
        up, lo = check_lemma_upper(mu, nu), check_lemma_lower(mu, nu)
        doc["lemma"] = {
            "upper": {"lhs": up.lhs, "rhs": up.rhs, "holds": up.holds},
            "lower": {"lhs": lo.lhs, "rhs": lo.rhs, "holds": lo.holds, "note": lo.note},
        }
    _emit(json.dumps(doc, indent=2), args.out)


def cmd_gen_dual(args, argv):
    exp = build_quadratic_form(args.k, args.dx, args.dy)
    _emit(gen_dual_json(exp, diagonalize(exp)), args.out)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with SweepConfig fields")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="write output here instead of stdout")
    common.add_argument("--threads", type=int)
    common.add_argument("-v", "--verbose", action="store_true")

    def pair(p, optional=False):
        nargs = "?" if optional else None
        p.add_argument("mu", nargs=nargs, help="measure file (.csv or .json)")
        p.add_argument("nu", nargs=nargs, help="measure file (.csv or .json)")
        p.add_argument("--format", choices=("csv", "json"))

    parser = argparse.ArgumentParser(prog="gw-dual", description="Gromov-Wasserstein distances via the dual formulation")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gw", parents=[common], help="squared GW distance")
    pair(p)
    p.add_argument("--starts", type=int, help="random multistarts (default 32)")
    p.set_defaults(fn=cmd_solve)

    p = sub.add_parser("egw", parents=[common], help="entropic GW cost")
    pair(p)
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--starts", type=int, help="random multistarts (default 32)")
    p.set_defaults(fn=cmd_solve)

    p = sub.add_parser("oracle", parents=[common], help="GW by enumerating permutations (n <= 9)")
    pair(p)
    p.set_defaults(fn=cmd_oracle)

    p = sub.add_parser("gap-sweep", parents=[common], help="S_eps - D^2 along an epsilon grid")
    pair(p, optional=True)
    p.set_defaults(fn=cmd_gap_sweep)

    p = sub.add_parser("plan-sweep", parents=[common], help="distance of EGW plans to optimal permutations")
    pair(p, optional=True)
    p.add_argument("--n", type=int, default=7, help="size of the xi dataset used when no measures are given")
    p.add_argument("--xi", type=float, default=0.01)
    p.add_argument("--variant", choices=XI_VARIANTS, default="figure")
    p.set_defaults(fn=cmd_plan_sweep)

    p = sub.add_parser("rate-sweep", parents=[common], help="empirical convergence rate")
    p.add_argument("--mode", type=str.upper, choices=("ONE_SAMPLE", "TWO_SAMPLE"), default="TWO_SAMPLE")
    p.add_argument("--estimator", type=str.upper, choices=("GW", "EGW"), default="EGW")
    p.set_defaults(fn=cmd_rate_sweep)

    p = sub.add_parser("scaling-identity", parents=[common], help="check D(m, 2#m')^2 against its expansion")
    p.set_defaults(fn=cmd_scaling_identity)

    p = sub.add_parser("one-dim", parents=[common], help="f + g profile on the xi datasets")
    p.add_argument("--n", type=int, default=7)
    p.add_argument("--xi", type=float, nargs="+", default=[0.01, 0.03, 0.06])
    p.add_argument("--variant", choices=XI_VARIANTS, default="figure")
    p.add_argument("--grid", type=int, default=4097)
    p.add_argument("--profiles", action="store_true", help="append the full profile CSV per xi")
    p.set_defaults(fn=cmd_one_dim)

    p = sub.add_parser("procrustes", parents=[common], help="W2 procrustes value")
    pair(p)
    p.add_argument("--group", choices=(ISOMETRY, ORTHOGONAL), default=ISOMETRY)
    p.add_argument("--lemma", action="store_true", help="also check both GW comparison bounds")
    p.set_defaults(fn=cmd_procrustes)

    p = sub.add_parser("gen-dual", parents=[common], help="quadratic form and signed squares for |x-x'|^(2k)")
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--dx", type=int, default=1)
    p.add_argument("--dy", type=int, default=1)
    p.set_defaults(fn=cmd_gen_dual)
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        args.fn(args, ["gw-dual", *argv])
    except NotConverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED
    except (ValueError, MeasureFormatError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
