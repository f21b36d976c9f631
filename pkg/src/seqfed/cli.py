"""Command line entry points.

Subcommands:

* ``simulate`` — run a replicated simulation grid described by a config file.
* ``analyze``  — run the sequential procedure over a recorded multi-site CSV.
* ``selftest`` — fast built-in checks for an installed copy.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 too many failed replications.
"""
from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .config import load_config
from .datasets import DataSource, load_dataset
from .errors import (
    ConfigError,
    DataFormatError,
    DegenerateClassesError,
    EstimationError,
    ExhaustedSiteError,
    InitInfeasibleError,
)
from .experiment import _write_csv, run_experiment, write_outputs
from .federation import FederationPlan, combine
from .glm import CommonSelector
from .quantiles import normal_quantile
from .sequential import SiteConfig, run_site

_SAMPLER_CHOICES = ("random", "aopt", "a_optimal")


class _Parser(argparse.ArgumentParser):
    """argparse that exits 1 on usage errors and suggests the fix."""

    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        sys.stderr.write(f"fix: see '{self.prog} --help' for the flag list\n")
        raise SystemExit(1)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="seqfed", description=__doc__)
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=_Parser)

    sim = sub.add_parser(
        "simulate", help="run a replicated simulation grid from a config file"
    )
    sim.add_argument("--config", required=True, help="path to a key=value config file")
    sim.add_argument("--seed", type=int, default=None, help="override the master seed")
    sim.add_argument("--reps", type=int, default=None, help="override the replication count")
    sim.add_argument("--out", default=None, help="directory for summary.csv and reps.csv")
    sim.add_argument(
        "--trace", action="store_true", help="also write per-step site logs to trace.csv"
    )

    ana = sub.add_parser("analyze", help="run the sequential procedure on a CSV dataset")
    ana.add_argument("--data", required=True, help="path to the input CSV")
    ana.add_argument("--response", required=True, help="name of the binary response column")
    ana.add_argument("--site", required=True, help="name of the site label column")
    ana.add_argument(
        "--common",
        required=True,
        help="comma-separated names of the columns shared by every site",
    )
    ana.add_argument("--d1", type=float, required=True, help="confidence set size bound")
    ana.add_argument("--d2", type=float, required=True, help="criterion precision bound")
    ana.add_argument(
        "--sampler",
        default="random",
        choices=_SAMPLER_CHOICES,
        help="recruitment rule (default: random)",
    )
    ana.add_argument(
        "--budget",
        default=None,
        help="comma-separated per-site budget weights (default: equal)",
    )
    ana.add_argument("--alpha", type=float, default=0.05, help="confidence level is 1-alpha")
    ana.add_argument(
        "--family",
        default="logistic",
        choices=("logistic", "linear"),
        help="response model (default: logistic)",
    )
    ana.add_argument(
        "--seed",
        type=int,
        default=20260817,
        help="seed for the recruitment order (recorded in the output)",
    )
    ana.add_argument("--out", default="analysis", help="output directory")
    ana.add_argument(
        "--trace", action="store_true", help="also write per-step site logs to trace.csv"
    )

    sub.add_parser("selftest", help="run the built-in fast checks")
    return parser


def _cmd_simulate(args) -> int:
    overrides = {
        "seed": args.seed,
        "replications": args.reps,
        "out": args.out,
        "trace": "true" if args.trace else None,
    }
    try:
        config = load_config(args.config, overrides)
    except ConfigError as exc:
        print(f"seqfed simulate: config error: {exc}", file=sys.stderr)
        print("fix: correct the named key in the config file", file=sys.stderr)
        return 1
    result = run_experiment(config)
    print(result.summary_text())
    if config.output_dir is not None:
        paths = write_outputs(result, config.output_dir)
        for name, path in paths.items():
            print(f"wrote {name}: {path}")
    if result.failure_threshold_exceeded:
        print(
            "seqfed simulate: failed replication fraction exceeded "
            f"{config.max_failure_fraction}",
            file=sys.stderr,
        )
        return 3
    return 0


def _parse_budget(raw: str, n_sites: int):
    parts = [p.strip() for p in raw.split(",") if p.strip()]
    try:
        weights = tuple(float(p) for p in parts)
    except ValueError:
        raise ConfigError(f"--budget: expected numbers, got {raw!r}") from None
    if len(weights) != n_sites:
        raise ConfigError(
            f"--budget: got {len(weights)} weights for {n_sites} sites"
        )
    if any(w <= 0 for w in weights):
        raise ConfigError("--budget: weights must be positive")
    return weights


def _cmd_analyze(args) -> int:
    common_cols = tuple(c.strip() for c in args.common.split(",") if c.strip())
    if not common_cols:
        print("seqfed analyze: error: --common needs at least one column name", file=sys.stderr)
        print("fix: pass --common col1,col2,...", file=sys.stderr)
        return 1
    source = DataSource(
        path=args.data,
        response=args.response,
        site_col=args.site,
        common_cols=common_cols,
        family=args.family,
    )
    try:
        sites = load_dataset(source)
    except DataFormatError as exc:
        print(f"seqfed analyze: data error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"seqfed analyze: data error: cannot read {args.data}: {exc}", file=sys.stderr)
        return 2

    sampler = "a_optimal" if args.sampler in ("aopt", "a_optimal") else args.sampler
    p0 = len(common_cols)
    try:
        weights = _parse_budget(args.budget, len(sites)) if args.budget else None
        plan = FederationPlan(
            n_sites=len(sites), p0=p0, alpha=args.alpha, budget_weights=weights
        )
    except (ConfigError, ValueError) as exc:
        print(f"seqfed analyze: error: {exc}", file=sys.stderr)
        print("fix: adjust the flag named above", file=sys.stderr)
        return 1
    budgets = plan.site_budgets()
    selector = CommonSelector(tuple(range(1, 1 + p0)))
    criterion = "auc" if args.family == "logistic" else "mse"

    results = []
    trace_rows = []
    for idx, site in enumerate(sites):
        rng = np.random.Generator(
            np.random.Philox(np.random.SeedSequence(entropy=args.seed, spawn_key=(idx,)))
        )
        config = SiteConfig(
            d1=args.d1,
            d2=args.d2,
            budget_sq=float(budgets[idx]),
            alpha=args.alpha,
            family=args.family,
            selector=selector,
            sampler=sampler,
            criterion=criterion,
            record_trace=args.trace,
        )
        try:
            result = run_site(site.X, site.y, config, rng)
        except (InitInfeasibleError, DegenerateClassesError, EstimationError) as exc:
            print(
                f"seqfed analyze: data error at site {site.label}: {exc}", file=sys.stderr
            )
            return 2
        if result.exhausted:
            print(
                f"warning: site {site.label} ran out of rows before reaching the "
                "precision targets; it is reported below but left out of the "
                "combined estimate",
                file=sys.stderr,
            )
        if args.trace and result.trace:
            for t in result.trace:
                trace_rows.append(
                    (site.label, t.step, t.k, t.precision_stat, t.criterion_variance, t.stopped)
                )
        results.append(result)

    try:
        combined = combine(results, allow_exhausted=True)
    except ExhaustedSiteError as exc:
        print(f"seqfed analyze: data error: {exc}", file=sys.stderr)
        return 2
    z = normal_quantile(1.0 - args.alpha / 2.0)
    se = np.sqrt(np.clip(np.diag(combined.theta_cov), 0.0, None))

    os.makedirs(args.out, exist_ok=True)
    combined_header = ["N_hat", "seed", "precision_stat"]
    combined_row = [combined.total_n, args.seed, combined.precision_stat]
    for c, name in enumerate(common_cols):
        combined_header += [f"theta_{name}", f"se_{name}", f"ci_low_{name}", f"ci_high_{name}"]
        combined_row += [
            combined.theta[c],
            float(se[c]),
            float(combined.theta[c] - z * se[c]),
            float(combined.theta[c] + z * se[c]),
        ]
    for i in range(p0):
        for j in range(p0):
            combined_header.append(f"cov_{i + 1}_{j + 1}")
            combined_row.append(float(combined.theta_cov[i, j]))
    combined_path = os.path.join(args.out, "combined.csv")
    _write_csv(combined_path, combined_header, [combined_row])

    sites_header = (
        ["site", "n_pool", "n_dropped", "n_used", "weight", "criterion", "criterion_value",
         "criterion_variance", "converged", "exhausted"]
        + [f"theta_{name}" for name in common_cols]
    )
    sites_rows = []
    for site, result, weight in zip(sites, results, combined.weights):
        sites_rows.append(
            [site.label, site.X.shape[0], site.n_dropped, result.stopping_time,
             float(weight), result.criterion, result.criterion_value,
             result.criterion_variance, result.converged, result.exhausted]
            + [float(v) for v in result.theta]
        )
    sites_path = os.path.join(args.out, "sites.csv")
    _write_csv(sites_path, sites_header, sites_rows)

    if args.trace:
        _write_csv(
            os.path.join(args.out, "trace.csv"),
            ["site", "step", "k", "mu_jk", "v_A", "stopped"],
            trace_rows,
        )

    print(f"combined over {len(sites)} sites: N_hat={combined.total_n} (seed {args.seed})")
    for c, name in enumerate(common_cols):
        print(
            f"  {name}: {combined.theta[c]:.3f} "
            f"[{combined.theta[c] - z * se[c]:.3f}, {combined.theta[c] + z * se[c]:.3f}]"
        )
    for site, result in zip(sites, results):
        print(
            f"  site {site.label}: n_used={result.stopping_time} "
            f"{result.criterion}={result.criterion_value:.3f}"
        )
    print(f"wrote {combined_path} and {sites_path}")
    return 0


def _cmd_selftest(_args) -> int:
    from .selftest import run_selftest

    return 0 if run_selftest() else 1


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_usage(sys.stderr)
        sys.stderr.write("seqfed: error: a command is required\n")
        sys.stderr.write("fix: use one of: simulate, analyze, selftest\n")
        return 1
    if args.command == "simulate":
        return _cmd_simulate(args)
    if args.command == "analyze":
        return _cmd_analyze(args)
    if args.command == "selftest":
        return _cmd_selftest(args)
    raise AssertionError(f"unhandled command {args.command}")


if __name__ == "__main__":
    raise SystemExit(main())
