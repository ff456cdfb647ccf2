"""Command-line interface: ``countcopula {measure,simulate,fit,analyze,gof}``.

Exit status is 0 on success, 1 when a computation fails (e.g. an optimizer
does not converge) and 2 for usage or input-validation errors. Failures
print a JSON object ``{"error": {"type": ..., "message": ...}}`` to stderr.
Numbers are printed to 6 significant digits.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Sequence

import numpy as np

from countcopula.copulas import CopulaSpec, Family
from countcopula.dependence import (
    BivariateCountModel,
    concordance_probabilities,
    dependence,
    jittered_rho_estimate,
    kendall_concordance,
)
from countcopula.estimation import chi_square_gof, fit_nb2_simple, ifm_fit
from countcopula.exceptions import ConvergenceError, DataError
from countcopula.margins import Bernoulli, parse_margin
from countcopula.pipeline import (
    _copula_row,
    emit_report,
    encode_covariates,
    load_dataset,
    load_schema,
    run_analysis,
)
from countcopula.simulation import StudyFailure, load_study_configs, run_study

EXIT_OK = 0
EXIT_COMPUTE = 1
EXIT_USAGE = 2


class UsageError(Exception):
    """Invalid flags or inputs detected before any computation."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        _emit_error("usage", message)
        self.print_usage(sys.stderr)
        sys.exit(EXIT_USAGE)


def _emit_error(kind: str, message: str) -> None:
    print(json.dumps({"error": {"type": kind, "message": message}}), file=sys.stderr)


def fmt(x) -> str:
    """6 significant digits; ``NA`` for undefined values."""
    if x is None:
        return "NA"
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.6g}"


def _round6(obj):
    if isinstance(obj, dict):
        return {k: _round6(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round6(v) for v in obj]
    if isinstance(obj, float):
        return float(f"{obj:.6g}")
    return obj


def _threads(value: str) -> int:
    n = int(value)
    if n < 1:
        raise argparse.ArgumentTypeError("--threads must be at least 1")
    return n


def _family(value: str) -> Family:
    try:
        return Family.parse(value)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _margin(value: str):
    try:
        return parse_margin(value)
    except (ValueError, TypeError) as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="countcopula", description="Copula dependence measures and models for bivariate count data.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    m = sub.add_parser("measure", help="population Kendall's tau and Spearman's rho")
    m.add_argument("--family", type=_family, required=True)
    m.add_argument("--theta", type=float, help="copula parameter (omit for parameter-free families)")
    m.add_argument("--margin-x", type=_margin, required=True, help="e.g. poisson:0.5, negbin:3,0.4, nb2:0.15,0.14")
    m.add_argument("--margin-y", type=_margin, required=True)
    m.add_argument("--oracle", action="store_true", help="also run the brute-force and jittered-sample cross-checks")
    m.add_argument("--jitter-n", type=int, default=20000, help="sample size of the jittered estimate")
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--json", action="store_true", help="print a JSON object instead of text")

    s = sub.add_parser("simulate", help="Monte Carlo replication study from a TOML config")
    s.add_argument("--config", type=Path, required=True)
    s.add_argument("--out", type=Path, required=True)
    s.add_argument("--replications", type=int, help="override the replication count of every study")
    s.add_argument("--threads", type=_threads, default=os.cpu_count() or 1)

    for name, help_ in (("fit", "two-step IFM fit of a dataset"), ("analyze", "full analysis report of a dataset")):
        f = sub.add_parser(name, help=help_)
        f.add_argument("--data", type=Path, required=True)
        f.add_argument("--schema", type=Path, required=True)
        f.add_argument("--family", type=_family, action="append", help="repeatable; default: schema families")
        f.add_argument("--out", type=Path, required=(name == "analyze"))
        if name == "analyze":
            f.add_argument("--df-rule", choices=["cells-1", "cells-1-params"], default="cells-1")
            f.add_argument("--expectation-support", choices=["tail", "capped"], default="tail")
        f.add_argument("--threads", type=_threads, default=os.cpu_count() or 1)

    g = sub.add_parser("gof", help="NB2 chi-square goodness of fit of a frequency table")
    g.add_argument("--counts", required=True, help="comma-separated frequencies of the values 0, 1, 2, ...")
    g.add_argument("--df-rule", choices=["cells-1", "cells-1-params"], default="cells-1")
    return p


def _cmd_measure(args) -> int:
    if args.family.has_parameter and args.theta is None:
        raise UsageError(f"--theta is required for {args.family.value}")
    if not args.family.has_parameter and args.theta is not None:
        raise UsageError(f"{args.family.value} takes no --theta")
    if args.jitter_n < 1000:
        raise UsageError("--jitter-n must be at least 1000")
    try:
        cop = CopulaSpec(args.family, args.theta)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    model = BivariateCountModel(cop, args.margin_x, args.margin_y)
    res = dependence(model)
    both_binary = isinstance(args.margin_x, Bernoulli) and isinstance(args.margin_y, Bernoulli)
    out = {
        "family": cop.family.value,
        "theta": cop.theta,
        "tau": res.tau,
        "rho": res.rho,
        "ratio": res.ratio,
        "rho_bounds": [-0.75, 0.75] if both_binary else [-1.0, 1.0],
        "tau_bounds": [-0.5, 0.5] if both_binary else [-1.0, 1.0],
    }
    if args.oracle:
        spear = concordance_probabilities(model)
        kend = kendall_concordance(model)
        jit = jittered_rho_estimate(model, args.jitter_n, np.random.default_rng(args.seed))
        out["oracle"] = {
            "rho_concordance": 3.0 * spear.difference,
            "rho_concordance_deviation": 3.0 * spear.difference - res.rho,
            "tau_concordance": kend.difference,
            "tau_concordance_deviation": kend.difference - res.tau,
            "rho_jitter": jit,
            "rho_jitter_deviation": jit - res.rho,
            "p_concordance": spear.p_c,
            "p_discordance": spear.p_d,
            "p_tie": spear.p_t,
        }
    if args.json:
        print(json.dumps(_round6(out), indent=2))
    else:
        for k, v in out.items():
            if k == "oracle":
                for kk, vv in v.items():
                    print(f"{kk}: {fmt(vv)}")
            elif isinstance(v, list):
                print(f"{k}: [{fmt(v[0])}, {fmt(v[1])}]")
            else:
                print(f"{k}: {v if isinstance(v, str) else fmt(v)}")
    return EXIT_OK


def _cmd_simulate(args) -> int:
    if args.replications is not None and args.replications < 1:
        raise UsageError("--replications must be at least 1")
    try:
        configs = load_study_configs(args.config, args.replications)
    except (ValueError, KeyError, TypeError) as exc:
        raise UsageError(f"{args.config}: {exc}") from None
    except OSError as exc:
        raise UsageError(str(exc)) from None
    args.out.mkdir(parents=True, exist_ok=True)
    for cfg in configs:
        result = run_study(cfg, workers=args.threads)
        result.write_csv(args.out / f"{cfg.name}.csv")
        result.write_json(args.out / f"{cfg.name}.json")
        print(result.format_table())
        print()
    return EXIT_OK


def _load(args):
    try:
        schema = load_schema(args.schema)
    except (ValueError, KeyError, TypeError) as exc:
        raise UsageError(f"{args.schema}: {exc}") from None
    dataset = load_dataset(args.data, schema)
    families = list(dict.fromkeys(f.value for f in args.family)) if args.family else list(schema.families)
    for f in families:
        if not Family(f).has_parameter:
            raise UsageError(f"{f} has no parameter to fit")
    return schema, dataset, families


def _cmd_fit(args) -> int:
    schema, dataset, families = _load(args)
    Zx, cx = encode_covariates(dataset, schema.x_covariates)
    Zy, cy = encode_covariates(dataset, schema.y_covariates)
    jobs = [(dataset.x, dataset.y, Zx, Zy, fam, cx, cy) for fam in families]
    if args.threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(args.threads, len(jobs))) as pool:
            fits = [f.result() for f in [pool.submit(ifm_fit, *j) for j in jobs]]
    else:
        fits = [ifm_fit(*j) for j in jobs]
    rows = [_copula_row(res) for res in fits]
    if not fits[0].converged:
        msgs = "; ".join(m for m in (fits[0].report_x.message, fits[0].report_y.message) if m)
        raise ConvergenceError(f"marginal regression did not converge: {msgs}")
    print(f"rows used: {dataset.n} (dropped {dataset.n_dropped})")
    print(f"{'family':<10} {'theta':>10} {'-2loglik':>10} {'tau':>10} {'rho':>10}")
    for r in rows:
        print(f"{r['family']:<10} {fmt(r['theta']):>10} {fmt(r['minus2loglik']):>10} {fmt(r['tau']):>10} {fmt(r['rho']):>10}")
    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
        payload = {
            "ingestion": dataset.ingestion_report(),
            "margins": {"x": fits[0].report_x.to_dict(), "y": fits[0].report_y.to_dict()},
            "copulas": rows,
        }
        (args.out / "fit.json").write_text(json.dumps(payload, indent=2))
    return EXIT_OK


def _cmd_analyze(args) -> int:
    schema, dataset, families = _load(args)
    report = run_analysis(
        dataset, families, df_rule=args.df_rule, expectation_support=args.expectation_support, workers=args.threads
    )
    bad = [f for f, r in report.fits.items() if not r.converged]
    files = emit_report(report, args.out)
    data = report.to_dict()
    for name, g in data["goodness_of_fit"].items():
        print(f"{name}: mu={fmt(g['mu'])} psi={fmt(g['psi'])} chi_square={fmt(g['chi_square'])} df={g['df']} p={fmt(g['p_value'])}")
    for r in data["copulas"]:
        print(f"{r['family']}: theta={fmt(r['theta'])} -2loglik={fmt(r['minus2loglik'])} tau={fmt(r['tau'])} rho={fmt(r['rho'])}")
    print("wrote " + ", ".join(str(p) for p in files))
    if bad:
        raise ConvergenceError(f"marginal regression did not converge for {bad}")
    return EXIT_OK


def _cmd_gof(args) -> int:
    try:
        counts = np.array([int(c) for c in args.counts.split(",")])
    except ValueError:
        raise UsageError(f"malformed --counts {args.counts!r}") from None
    fit = fit_nb2_simple(counts)
    g = chi_square_gof(counts, fit.margin, df_rule=args.df_rule, n_fitted=1)
    print(f"mu: {fmt(fit.mu)}")
    print(f"psi: {fmt(fit.psi)}")
    print("expected: " + ", ".join(fmt(e) for e in g.expected))
    print(f"chi_square: {fmt(g.statistic)}")
    print(f"df: {g.df}")
    print(f"p_value: {fmt(g.p_value)}")
    return EXIT_OK


_COMMANDS = {
    "measure": _cmd_measure,
    "simulate": _cmd_simulate,
    "fit": _cmd_fit,
    "analyze": _cmd_analyze,
    "gof": _cmd_gof,
}


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            return _COMMANDS[args.command](args)
    except UsageError as exc:
        _emit_error("usage", str(exc))
        return EXIT_USAGE
    except (DataError, FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        _emit_error("data", str(exc))
        return EXIT_USAGE
    except (ConvergenceError, StudyFailure, ArithmeticError) as exc:
        _emit_error("computation", str(exc))
        return EXIT_COMPUTE


if __name__ == "__main__":
    sys.exit(main())
