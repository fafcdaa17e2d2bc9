"""Explicit moment-type estimators for truncated multivariate distributions.

The package covers three model families (truncated multivariate normal and
truncated products normal x gamma / normal x beta), their closed-form Stein
estimators with plug-in asymptotic covariances, two comparison estimators
(truncated MLE, truncated score matching) and a deterministic Monte Carlo
benchmark harness.
"""

from .asymcov import (
    ConfidenceIntervals,
    MomentVector,
    SandwichCovariance,
    confidence_intervals,
    eval_G,
    jacobian_G,
    sandwich_cov,
)
from .competitors import (
    OptimizerOptions,
    product_mle,
    score_matching_divergence,
    score_matching_estimate,
    tn_mle,
)
from .domains import (
    Domain,
    ball_domain,
    domain_from_spec,
    rectangle_domain,
    union_of_balls_domain,
)
from .errors import (
    ConfigError,
    DataDomainMismatchError,
    EmptyDomainError,
    SamplerAbort,
    SingularSystemError,
    TruncsteinError,
)
from .mcbench import (
    ExperimentConfig,
    MetricsReport,
    load_config,
    metric_bias,
    metric_mu_error,
    metric_ne,
    metric_scalar_mse,
    metric_sigma_error,
    run_experiment,
    summarize_records,
)
from .models import (
    MODELS,
    NORMAL_BETA,
    NORMAL_GAMMA,
    TN,
    NormalBetaParams,
    NormalGammaParams,
    TNParams,
    log_kernel,
    score,
)
from .quadrature import QuadResult, integrate, log_normalizing_constant
from .sampling import (
    RngStream,
    TruncatedSample,
    read_sample_csv,
    sample_beta,
    sample_gamma,
    sample_mvn,
    sample_truncated,
    write_sample_csv,
)
from .stein import (
    EstimationResult,
    Reason,
    SteinResidual,
    TestFunctionPair,
    nb_stein_estimate,
    ng_stein_estimate,
    product_test_functions,
    stein_estimate,
    stein_residual,
    tn_stein_estimate,
    tn_test_functions,
    untruncated_test_functions,
)

__version__ = "0.1.0"
