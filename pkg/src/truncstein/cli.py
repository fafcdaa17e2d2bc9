"""Command-line front end: sample / estimate / simulate / report.

Exit codes are part of the interface and stay stable:
0 success (an ineligible estimate is still a successful run; NE is a
measured outcome, not an error), 2 invalid input or config, 3 sampler
abort, 4 observations outside the declared domain.
"""

import argparse
import json
import sys

import numpy as np

from . import asymcov, competitors, mcbench, stein
from .domains import domain_from_spec
from .errors import ConfigError, DataDomainMismatchError, SamplerAbort, TruncsteinError
from .models import NORMAL_BETA, NORMAL_GAMMA, TN, NormalBetaParams, NormalGammaParams, TNParams
from .sampling import RngStream, read_sample_csv, sample_truncated, write_sample_csv

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SAMPLER = 3
EXIT_DATA = 4


def _parse_domain(text):
    if text.startswith("@"):
        try:
            with open(text[1:]) as fh:
                spec = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read domain file: {exc}") from None
    else:
        try:
            spec = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"domain must be JSON or @file: {exc}") from None
    return domain_from_spec(spec)


def _parse_vector(text):
    try:
        return np.array([float(v) for v in text.split(",")], dtype=float)
    except ValueError as exc:
        raise ConfigError(f"bad vector {text!r}: {exc}") from None


def _parse_matrix(text):
    try:
        rows = [[float(v) for v in row.split(",")] for row in text.split(";")]
        return np.array(rows, dtype=float)
    except ValueError as exc:
        raise ConfigError(f"bad matrix {text!r}: {exc}") from None


def _parse_theta(args):
    if args.model == TN:
        if args.mu is None or args.sigma is None:
            raise ConfigError("tn needs --mu and --sigma")
        return TNParams(mu=_parse_vector(args.mu), sigma=_parse_matrix(args.sigma))
    if args.theta is None:
        raise ConfigError(f"{args.model} needs --theta mu,sigma2,alpha,beta")
    vals = _parse_vector(args.theta)
    if vals.size != 4:
        raise ConfigError("--theta needs exactly four values")
    cls = NormalGammaParams if args.model == NORMAL_GAMMA else NormalBetaParams
    return cls(*vals)


def _to_jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, dict):
        return {k: _to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_to_jsonable(v) for v in obj]
    return obj


def _theta_record(model, theta):
    if theta is None:
        return None
    if model == TN:
        return {"mu": theta.mu.tolist(), "sigma": theta.sigma.tolist()}
    return {
        "mu": theta.mu,
        "sigma2": theta.sigma2,
        "alpha": theta.alpha,
        "beta": theta.beta,
    }


def cmd_sample(args):
    theta = _parse_theta(args)
    domain = _parse_domain(args.domain)
    if args.n < 1:
        raise ConfigError("--n must be >= 1")
    sample = sample_truncated(
        args.model, theta, domain, args.n, RngStream(args.seed, args.stream)
    )
    write_sample_csv(args.out, sample.x)
    print(
        f"wrote {sample.n} observations to {args.out} "
        f"(acceptance rate {sample.acceptance_rate:.4g})"
    )
    return EXIT_OK


def cmd_estimate(args):
    domain = _parse_domain(args.domain)
    x = read_sample_csv(args.input)
    if x.shape[1] != domain.dim:
        raise ConfigError(
            f"sample dimension {x.shape[1]} does not match domain dimension {domain.dim}"
        )
    inside = domain.contains(x)
    if not np.all(inside):
        first = int(np.argmax(~inside))
        raise DataDomainMismatchError(
            f"row {first} = {x[first].tolist()} lies outside the domain"
        )
    if args.method == "stein":
        result = stein.stein_estimate(args.model, x, domain)
    elif args.method == "mle":
        if args.model == TN:
            result = competitors.tn_mle(x, domain)
        else:
            result = competitors.product_mle(x, args.model, domain)
    else:
        result = competitors.score_matching_estimate(x, args.model, domain)

    record = {
        "method": args.method,
        "model": args.model,
        "n": int(x.shape[0]),
        "eligible": result.eligible,
        "reason": result.reason.value,
        "theta_hat": _theta_record(args.model, result.theta_hat),
        "diagnostics": _to_jsonable(result.diagnostics),
    }
    if args.with_cov:
        if args.model != TN or args.method != "stein":
            raise ConfigError("--with-cov is supported for the tn stein method only")
        if result.eligible:
            cov = asymcov.sandwich_cov(x, domain)
            ci = asymcov.confidence_intervals(result, cov, level=args.level)
            record["covariance"] = {
                "level": ci.level,
                "names": ci.names,
                "estimate": ci.estimate.tolist(),
                "se": ci.se.tolist(),
                "lower": ci.lower.tolist(),
                "upper": ci.upper.tolist(),
            }
        else:
            record["covariance"] = None
    print(json.dumps(_to_jsonable(record), indent=2))
    return EXIT_OK


def cmd_simulate(args):
    config = mcbench.load_config(args.config, out_dir=args.out_dir)
    if config.out_dir is None:
        raise ConfigError("config needs [output] dir (or pass --out-dir)")
    report = mcbench.run_experiment(config, workers=args.workers)
    print(mcbench.summary_to_markdown(report))
    print(f"reports written to {config.out_dir}")
    return EXIT_OK


def cmd_report(args):
    config = mcbench.load_config(args.config)
    log_path = args.log
    if log_path is None:
        if config.out_dir is None:
            raise ConfigError("pass --log or configure [output] dir")
        import os

        log_path = os.path.join(config.out_dir, "reps.csv")
    records = mcbench.records_from_csv(log_path)
    report = mcbench.summarize_records(
        records, config.model, config.theta0,
        label=config.label, n=config.n, reps=config.reps,
    )
    print(mcbench.summary_to_csv(report))
    print(mcbench.summary_to_markdown(report))
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="truncstein",
        description="Estimators and benchmarks for truncated multivariate distributions",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    models = (TN, NORMAL_GAMMA, NORMAL_BETA)

    p = sub.add_parser("sample", help="draw a truncated sample and write CSV")
    p.add_argument("--model", choices=models, required=True)
    p.add_argument("--mu", help="tn mean, comma separated")
    p.add_argument("--sigma", help="tn covariance, rows separated by ';'")
    p.add_argument("--theta", help="product models: mu,sigma2,alpha,beta")
    p.add_argument("--domain", required=True, help="JSON domain spec or @file")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--stream", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("estimate", help="estimate parameters from a CSV sample")
    p.add_argument("--method", choices=("stein", "mle", "score-matching"),
                   default="stein")
    p.add_argument("--model", choices=models, required=True)
    p.add_argument("--domain", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--with-cov", action="store_true", dest="with_cov",
                   help="attach sandwich standard errors and intervals (tn+stein)")
    p.add_argument("--level", type=float, default=0.95)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("simulate", help="run a Monte Carlo experiment from a config")
    p.add_argument("--config", required=True)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out-dir", default=None, help="override [output] dir")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("report", help="recompute summary tables from a reps.csv log")
    p.add_argument("--config", required=True)
    p.add_argument("--log", default=None)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SamplerAbort as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SAMPLER
    except DataDomainMismatchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ConfigError, TruncsteinError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
