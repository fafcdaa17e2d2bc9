"""Monte Carlo benchmark harness: repeated sampling + estimation + metrics.

Error conventions follow the benchmark tables this reproduces:

* truncated normal blocks: "MSE" is the mean Euclidean distance
  ||mu_0 - mu_hat|| resp. the mean Frobenius distance ||Sigma_0 - Sigma_hat||
  over the eligible repetitions (the table text mentions a spectral norm
  once, but the notation section defines ||A|| = ||vec A||, i.e. Frobenius,
  which is what is used here and documented in the output metadata);
* product-model scalars: bias is mean(estimate) - theta_0 and "MSE" is the
  mean squared scalar error, per parameter;
* NE is 100 * (ineligible repetitions) / reps.

Determinism: repetition r always draws from RngStream(base_seed, r), and
aggregation runs in repetition order, so reports are bit-identical for any
worker count.
"""

import csv
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib

from . import competitors, stein
from .domains import domain_from_spec
from .errors import ConfigError
from .matkit import vec
from .models import (
    MODELS,
    NORMAL_BETA,
    NORMAL_GAMMA,
    TN,
    NormalBetaParams,
    NormalGammaParams,
    TNParams,
)
from .sampling import RngStream, sample_truncated

ESTIMATORS = ("stein", "mle", "score-matching")
_SCALAR_PARAMS = ("mu", "sigma2", "alpha", "beta")


@dataclass(frozen=True)
class ExperimentConfig:
    model: str
    theta0: object
    domain_spec: dict
    n: int
    reps: int
    estimators: tuple = ("stein",)
    base_seed: int = 0
    label: str = "experiment"
    out_dir: str = None
    mle_options: competitors.OptimizerOptions = None

    def __post_init__(self):
        if self.model not in MODELS:
            raise ConfigError(f"unknown model {self.model!r}")
        if self.reps < 1 or self.n < 1:
            raise ConfigError("n and reps must be >= 1")
        for e in self.estimators:
            if e not in ESTIMATORS:
                raise ConfigError(f"unknown estimator {e!r}")


def metric_mu_error(mu0, mu_hat):
    """Euclidean distance between true and estimated mean vectors."""
    return float(np.linalg.norm(np.asarray(mu0, float) - np.asarray(mu_hat, float)))


def metric_sigma_error(sigma0, sigma_hat):
    """Frobenius distance ||vec(Sigma_0 - Sigma_hat)||."""
    return float(np.linalg.norm(vec(np.asarray(sigma0) - np.asarray(sigma_hat))))


def metric_bias(theta0, estimates):
    """mean(estimates) - theta0 for one scalar parameter."""
    if len(estimates) == 0:
        raise ConfigError("bias needs at least one eligible estimate")
    return float(np.mean(estimates) - theta0)


def metric_scalar_mse(theta0, estimates):
    """mean((estimate - theta0)^2) for one scalar parameter."""
    if len(estimates) == 0:
        raise ConfigError("mse needs at least one eligible estimate")
    return float(np.mean((np.asarray(estimates, float) - theta0) ** 2))


def metric_ne(results):
    """Ineligible repetitions per 100."""
    if len(results) == 0:
        raise ConfigError("metric_ne needs at least one result")
    bad = sum(1 for r in results if not r["eligible"])
    return 100.0 * bad / len(results)


@dataclass(frozen=True)
class MetricsReport:
    label: str
    model: str
    theta0: object
    n: int
    reps: int
    per_estimator: dict = field(default_factory=dict)
    # per_estimator[name] is a dict:
    #   tn:       {"mu_mse", "sigma_mse", "ne_per_100", "eligible_count"}
    #   products: {"bias": {...}, "mse": {...}, "ne_per_100", "eligible_count"}


def _estimate(model, estimator, x, domain, mle_options):
    try:
        if estimator == "stein":
            return stein.stein_estimate(model, x, domain)
        if estimator == "mle":
            if model == TN:
                return competitors.tn_mle(x, domain, mle_options)
            return competitors.product_mle(x, model, domain, mle_options)
        return competitors.score_matching_estimate(x, model, domain)
    except Exception as exc:  # noqa: BLE001 - one bad rep must not kill the run
        return stein.EstimationResult(
            model, None, False, stein.Reason.OPTIMIZER_FAILURE, {"error": str(exc)}
        )


def _record(model, rep, estimator, result):
    rec = {
        "rep": rep,
        "estimator": estimator,
        "eligible": result.eligible,
        "reason": result.reason.value,
    }
    if result.eligible:
        theta = result.theta_hat
        if model == TN:
            d = theta.dim
            for i in range(d):
                rec[f"mu_{i + 1}"] = theta.mu[i]
            for i in range(d):
                for j in range(d):
                    rec[f"sigma_{i + 1}_{j + 1}"] = theta.sigma[i, j]
        else:
            for name in _SCALAR_PARAMS:
                rec[name] = getattr(theta, name)
    return rec


def run_repetition(config, rep, domain=None):
    """Sample one repetition and run every requested estimator on it."""
    domain = domain if domain is not None else domain_from_spec(config.domain_spec)
    stream = RngStream(config.base_seed, rep)
    sample = sample_truncated(config.model, config.theta0, domain, config.n, stream)
    return [
        _record(
            config.model,
            rep,
            est,
            _estimate(config.model, est, sample.x, domain, config.mle_options),
        )
        for est in config.estimators
    ]


def _worker(args):
    config, rep = args
    return run_repetition(config, rep)


def summarize_records(records, model, theta0, label="experiment", n=0, reps=None):
    """Aggregate per-rep records into a MetricsReport (replayable from the log)."""
    by_est = {}
    for rec in records:
        by_est.setdefault(rec["estimator"], []).append(rec)
    per_estimator = {}
    for est, recs in sorted(by_est.items()):
        recs = sorted(recs, key=lambda r: r["rep"])
        total = len(recs)
        eligible = [r for r in recs if r["eligible"]]
        entry = {
            "ne_per_100": metric_ne(recs),
            "eligible_count": len(eligible),
        }
        if model == TN:
            if eligible:
                d = theta0.dim
                mu_err = [
                    metric_mu_error(
                        theta0.mu, [r[f"mu_{i + 1}"] for i in range(d)]
                    )
                    for r in eligible
                ]
                sig_err = [
                    metric_sigma_error(
                        theta0.sigma,
                        np.array(
                            [
                                [r[f"sigma_{i + 1}_{j + 1}"] for j in range(d)]
                                for i in range(d)
                            ]
                        ),
                    )
                    for r in eligible
                ]
                entry["mu_mse"] = float(np.mean(mu_err))
                entry["sigma_mse"] = float(np.mean(sig_err))
            else:
                entry["mu_mse"] = None
                entry["sigma_mse"] = None
        else:
            theta_arr = theta0.as_array()
            bias = {}
            mse = {}
            for k, name in enumerate(_SCALAR_PARAMS):
                if eligible:
                    vals = [r[name] for r in eligible]
                    bias[name] = metric_bias(theta_arr[k], vals)
                    mse[name] = metric_scalar_mse(theta_arr[k], vals)
                else:
                    bias[name] = None
                    mse[name] = None
            entry["bias"] = bias
            entry["mse"] = mse
        per_estimator[est] = entry
    return MetricsReport(
        label=label,
        model=model,
        theta0=theta0,
        n=n,
        reps=reps if reps is not None else (max(r["rep"] for r in records) + 1),
        per_estimator=per_estimator,
    )


def run_experiment(config, workers=1):
    """Run all repetitions, aggregate metrics, optionally persist reports."""
    domain = domain_from_spec(config.domain_spec)  # validate before spawning
    if workers is None or workers < 1:
        workers = 1
    if workers == 1:
        batches = [run_repetition(config, r, domain) for r in range(config.reps)]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            batches = list(
                pool.map(
                    _worker,
                    ((config, r) for r in range(config.reps)),
                    chunksize=max(1, config.reps // (8 * workers)),
                )
            )
    records = [rec for batch in batches for rec in batch]
    report = summarize_records(
        records, config.model, config.theta0,
        label=config.label, n=config.n, reps=config.reps,
    )
    if config.out_dir:
        write_reports(config, report, records)
    return report


# ---------------------------------------------------------------------------
# persistence


def _atomic_write(path, text):
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def _log_columns(model, theta0):
    cols = ["rep", "estimator", "eligible", "reason"]
    if model == TN:
        d = theta0.dim
        cols += [f"mu_{i + 1}" for i in range(d)]
        cols += [f"sigma_{i + 1}_{j + 1}" for i in range(d) for j in range(d)]
    else:
        cols += list(_SCALAR_PARAMS)
    return cols


def records_to_csv(records, model, theta0):
    cols = _log_columns(model, theta0)
    lines = [",".join(cols)]
    for rec in records:
        lines.append(",".join(_fmt(rec.get(c)) for c in cols))
    return "\n".join(lines) + "\n"


def records_from_csv(path):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        records = []
        for row in reader:
            rec = {
                "rep": int(row["rep"]),
                "estimator": row["estimator"],
                "eligible": row["eligible"] == "true",
                "reason": row["reason"],
            }
            for key, val in row.items():
                if key in rec or val in ("", None):
                    continue
                rec[key] = float(val)
            records.append(rec)
    if not records:
        raise ConfigError(f"{path}: empty repetition log")
    return records


def summary_to_csv(report):
    lines = [
        "# mu_mse: mean Euclidean distance ||mu0 - mu_hat|| over eligible reps",
        "# sigma_mse: mean Frobenius distance ||vec(Sigma0 - Sigma_hat)|| over eligible reps",
        "# scalar bias: mean(estimate) - theta0; scalar mse: mean((estimate - theta0)^2)",
        "# ne_per_100: ineligible repetitions per 100",
        "estimator,parameter,bias,mse,ne_per_100,eligible_count",
    ]
    for est, entry in report.per_estimator.items():
        ne = _fmt(entry["ne_per_100"])
        cnt = _fmt(entry["eligible_count"])
        if report.model == TN:
            lines.append(f"{est},mu,,{_fmt(entry['mu_mse'])},{ne},{cnt}")
            lines.append(f"{est},sigma,,{_fmt(entry['sigma_mse'])},{ne},{cnt}")
        else:
            for name in _SCALAR_PARAMS:
                lines.append(
                    f"{est},{name},{_fmt(entry['bias'][name])},"
                    f"{_fmt(entry['mse'][name])},{ne},{cnt}"
                )
    return "\n".join(lines) + "\n"


def _md_num(value):
    return "-" if value is None else f"{value:.3g}"


def summary_to_markdown(report):
    est_names = list(report.per_estimator)
    lines = [
        f"### {report.label}: model={report.model}, n={report.n}, reps={report.reps}",
        "",
    ]
    if report.model == TN:
        header = "| parameter | " + " | ".join(f"MSE {e}" for e in est_names)
        header += " | " + " | ".join(f"NE {e}" for e in est_names) + " |"
        lines.append(header)
        lines.append("|" + "---|" * (1 + 2 * len(est_names)))
        for param, key in (("mu", "mu_mse"), ("sigma", "sigma_mse")):
            row = [param]
            row += [_md_num(report.per_estimator[e][key]) for e in est_names]
            row += [_md_num(report.per_estimator[e]["ne_per_100"]) for e in est_names]
            lines.append("| " + " | ".join(row) + " |")
    else:
        header = "| parameter | " + " | ".join(f"Bias {e}" for e in est_names)
        header += " | " + " | ".join(f"MSE {e}" for e in est_names)
        header += " | " + " | ".join(f"NE {e}" for e in est_names) + " |"
        lines.append(header)
        lines.append("|" + "---|" * (1 + 3 * len(est_names)))
        for name in _SCALAR_PARAMS:
            row = [name]
            row += [_md_num(report.per_estimator[e]["bias"][name]) for e in est_names]
            row += [_md_num(report.per_estimator[e]["mse"][name]) for e in est_names]
            row += [_md_num(report.per_estimator[e]["ne_per_100"]) for e in est_names]
            lines.append("| " + " | ".join(row) + " |")
    return "\n".join(lines) + "\n"


def write_reports(config, report, records):
    out = config.out_dir
    _atomic_write(
        os.path.join(out, "reps.csv"),
        records_to_csv(records, config.model, config.theta0),
    )
    _atomic_write(os.path.join(out, "summary.csv"), summary_to_csv(report))
    _atomic_write(os.path.join(out, "summary.md"), summary_to_markdown(report))


# ---------------------------------------------------------------------------
# config files


def _theta_from_table(model, table):
    try:
        if model == TN:
            return TNParams(mu=np.asarray(table["mu"], float),
                            sigma=np.asarray(table["sigma"], float))
        cls = NormalGammaParams if model == NORMAL_GAMMA else NormalBetaParams
        return cls(
            mu=float(table["mu"]),
            sigma2=float(table["sigma2"]),
            alpha=float(table["alpha"]),
            beta=float(table["beta"]),
        )
    except KeyError as exc:
        raise ConfigError(f"theta0 missing field {exc.args[0]!r}") from None


def load_config(path, out_dir=None):
    """Read an experiment description from a TOML file.

    Schema: top-level ``model``, ``n``, ``reps``, ``base_seed``,
    ``estimators`` (list), optional ``label``; tables ``[theta0]`` (model
    parameters), ``[domain]`` (the domain spec grammar), optional
    ``[output] dir = ...`` and ``[mle]`` optimizer options.
    """
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML in {path}: {exc}") from None
    try:
        model = raw["model"]
        theta0 = _theta_from_table(model, raw["theta0"])
        mle_opts = None
        if "mle" in raw:
            base = (
                competitors.PRODUCT_MLE_DEFAULTS
                if model != TN
                else competitors.OptimizerOptions()
            )
            mle_opts = competitors.OptimizerOptions(
                max_iterations=int(
                    raw["mle"].get("max_iterations", base.max_iterations)
                ),
                gradient_tolerance=float(
                    raw["mle"].get("gradient_tolerance", base.gradient_tolerance)
                ),
                step_tolerance=float(
                    raw["mle"].get("step_tolerance", base.step_tolerance)
                ),
            )
        return ExperimentConfig(
            model=model,
            theta0=theta0,
            domain_spec=raw["domain"],
            n=int(raw["n"]),
            reps=int(raw["reps"]),
            estimators=tuple(raw.get("estimators", ["stein"])),
            base_seed=int(raw.get("base_seed", 0)),
            label=str(raw.get("label", os.path.basename(path))),
            out_dir=out_dir or raw.get("output", {}).get("dir"),
            mle_options=mle_opts,
        )
    except KeyError as exc:
        raise ConfigError(f"config missing field {exc.args[0]!r}") from None
