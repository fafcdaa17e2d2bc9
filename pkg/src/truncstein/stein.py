"""Boundary-adapted test functions and the explicit Stein estimators.

The moment conditions come from Stein operators built on the unnormalised
densities: for the truncated normal, ``A f(x) = grad f(x) + s(x) f(x)``
with score ``s(x) = -Sigma^{-1}(x - mu)``; for the product models the
operator carries an extra weight tau (x2 for the gamma factor,
x2*(1 - x2) for the beta factor) that absorbs the support edges.

Test functions multiply the domain's boundary function kappa so that they
vanish on the curved boundary: ``f1 = kappa`` and ``f2 = x * kappa`` for
the truncated normal, ``f2 = kappa * (x1 + x2)`` for the products. Solving
the empirical moment conditions in closed form gives every estimator below;
no numerical optimisation is involved.

Conventions for the truncated normal: the exact root of the empirical
system is the *unsymmetrised* pair (mu_tilde, sigma_tilde); the reported
estimate symmetrises sigma first and recomputes the mean with it. Both
pairs sit in the result diagnostics.
"""

import enum
from dataclasses import dataclass, field

import numpy as np

from .domains import BallDomain, _rows
from .errors import ConfigError, SingularSystemError
from .matkit import is_positive_definite, solve_linear, symmetrize
from .models import (
    NORMAL_BETA,
    NORMAL_GAMMA,
    TN,
    NormalBetaParams,
    NormalGammaParams,
    TNParams,
    score,
)

# |mean f1| below this multiple of mean |f1| makes the mean equation unusable
ZERO_MEAN_F1_RTOL = 1e-10
# determinant of a 2x2 moment system below this multiple of its entry scale
DET_RTOL = 1e-12


class Reason(str, enum.Enum):
    OK = "ok"
    NON_PD_SIGMA = "non_pd_sigma"
    SINGULAR_SYSTEM = "singular_system"
    ZERO_MEAN_F1 = "zero_mean_f1"
    NEGATIVE_SCALAR_PARAM = "negative_scalar_param"
    OPTIMIZER_FAILURE = "optimizer_failure"


@dataclass(frozen=True)
class EstimationResult:
    model: str
    theta_hat: object          # params instance when eligible, else None
    eligible: bool
    reason: Reason
    diagnostics: dict = field(default_factory=dict)


@dataclass(frozen=True)
class TestFunctionPair:
    """f1 scalar; f2 vector-valued (TN) or scalar (products).

    All callables are vectorised over an (n, d) array of points. ``grad_f2``
    returns (n, d, d) Jacobians for the TN pair and (n, d) gradients for the
    product pair.
    """

    __test__ = False           # keep pytest from collecting this as a test class

    f1: callable
    grad_f1: callable
    f2: callable
    grad_f2: callable
    vector_f2: bool


def tn_test_functions(domain):
    """f1 = kappa, f2 = x * kappa, with analytic derivatives."""

    def f1(x):
        x, _ = _rows(x, domain.dim)
        return domain.kappa(x)

    def grad_f1(x):
        x, _ = _rows(x, domain.dim)
        return domain.grad_kappa(x)

    def f2(x):
        x, _ = _rows(x, domain.dim)
        return x * domain.kappa(x)[:, None]

    def grad_f2(x):
        x, _ = _rows(x, domain.dim)
        k = domain.kappa(x)
        g = domain.grad_kappa(x)
        eye = np.eye(domain.dim)
        return k[:, None, None] * eye + x[:, :, None] * g[:, None, :]

    return TestFunctionPair(f1, grad_f1, f2, grad_f2, vector_f2=True)


def untruncated_test_functions(dim):
    """Test hook: f1 = 1, f2 = x reproduce the untruncated-normal MLE."""

    def f1(x):
        x, _ = _rows(x, dim)
        return np.ones(x.shape[0])

    def grad_f1(x):
        x, _ = _rows(x, dim)
        return np.zeros_like(x)

    def f2(x):
        x, _ = _rows(x, dim)
        return x.copy()

    def grad_f2(x):
        x, _ = _rows(x, dim)
        return np.broadcast_to(np.eye(dim), (x.shape[0], dim, dim)).copy()

    return TestFunctionPair(f1, grad_f1, f2, grad_f2, vector_f2=True)


def product_test_functions(domain):
    """f1 = kappa, f2 = kappa * (x1 + x2) on a disc domain."""
    if not isinstance(domain, BallDomain) or domain.dim != 2:
        raise ConfigError("product test functions need a 2-dimensional ball domain")
    m = domain.m

    def f1(x):
        x, _ = _rows(x, 2)
        return domain.kappa(x)

    def grad_f1(x):
        x, _ = _rows(x, 2)
        return domain.grad_kappa(x)

    def f2(x):
        x, _ = _rows(x, 2)
        return domain.kappa(x) * (x[:, 0] + x[:, 1])

    def grad_f2(x):
        x, _ = _rows(x, 2)
        k = domain.kappa(x)
        s = x[:, 0] + x[:, 1]
        return np.stack(
            [2.0 * (x[:, 0] - m[0]) * s + k, 2.0 * (x[:, 1] - m[1]) * s + k],
            axis=1,
        )

    return TestFunctionPair(f1, grad_f1, f2, grad_f2, vector_f2=False)


def tn_moment_means(x, tfp):
    """The six sample means driving the truncated-normal estimator.

    Returns (Z1, Z2, z1, z2, z3, z) with Z1 = mean of X f2', Z2 = mean of
    (grad f2)', z1 = mean of X f1, z2 = mean of f2, z3 = mean of grad f1,
    z = mean of f1.
    """
    x = np.asarray(x, dtype=float)
    x, _ = _rows(x, x.shape[-1])
    n = x.shape[0]
    f1 = tfp.f1(x)
    g1 = tfp.grad_f1(x)
    f2 = tfp.f2(x)
    j2 = tfp.grad_f2(x)
    z = float(f1.mean())
    z1 = (x * f1[:, None]).mean(axis=0)
    z2 = f2.mean(axis=0)
    z3 = g1.mean(axis=0)
    big_z1 = x.T @ f2 / n                 # [i, j] = mean x_i f2_j
    big_z2 = j2.mean(axis=0).T            # transpose of the mean Jacobian
    return big_z1, big_z2, z1, z2, z3, z


def tn_stein_estimate(x, domain, test_functions=None):
    """Closed-form (mu, Sigma) estimate for the truncated multivariate normal."""
    x, _ = _rows(x, domain.dim)
    tfp = test_functions if test_functions is not None else tn_test_functions(domain)
    big_z1, big_z2, z1, z2, z3, z = tn_moment_means(x, tfp)
    f1_abs_mean = float(np.abs(tfp.f1(x)).mean())

    a = big_z2 * z - np.outer(z3, z2)
    b = big_z1 * z - np.outer(z1, z2)
    diag = {"mean_f1": z, "mean_abs_f1": f1_abs_mean}
    try:
        xt, rcond = solve_linear(a.T, b.T)     # (B A^{-1})' = A^{-T} B'
    except SingularSystemError as exc:
        diag["rcond"] = exc.rcond
        return EstimationResult(TN, None, False, Reason.SINGULAR_SYSTEM, diag)
    diag["rcond"] = rcond
    sigma_tilde = xt.T
    if abs(z) <= ZERO_MEAN_F1_RTOL * f1_abs_mean:
        return EstimationResult(TN, None, False, Reason.ZERO_MEAN_F1, diag)
    sigma_hat = symmetrize(sigma_tilde)
    mu_tilde = (z1 - sigma_tilde @ z3) / z
    mu_hat = (z1 - sigma_hat @ z3) / z
    diag["sigma_tilde"] = sigma_tilde
    diag["mu_tilde"] = mu_tilde
    if not is_positive_definite(sigma_hat):
        diag["sigma_hat"] = sigma_hat
        diag["mu_hat"] = mu_hat
        return EstimationResult(TN, None, False, Reason.NON_PD_SIGMA, diag)
    theta = TNParams(mu=mu_hat, sigma=sigma_hat)
    return EstimationResult(TN, theta, True, Reason.OK, diag)


def _det_or_none(t1, t2):
    """Determinant t1 - t2 and a singularity verdict relative to its terms."""
    det = t1 - t2
    scale = max(abs(t1), abs(t2))
    return det, abs(det) <= DET_RTOL * scale


def ng_stein_estimate(x, domain, test_functions=None):
    """Closed-form (mu, sigma2, alpha, beta) for the truncated normal x gamma."""
    x, _ = _rows(x, 2)
    if np.any(x[:, 1] <= 0):
        raise ConfigError("normal_gamma sample needs x2 > 0")
    tfp = test_functions if test_functions is not None else product_test_functions(domain)
    f1 = tfp.f1(x)
    f2 = tfp.f2(x)
    g1 = tfp.grad_f1(x)
    g2 = tfp.grad_f2(x)
    w = x[:, 1]

    a1 = float((w * f1).mean())
    a2 = float((w * g2[:, 0]).mean())
    a3 = float((w * g1[:, 0]).mean())
    a4 = float((w * f2).mean())
    a5 = float((w * x[:, 0] * f1).mean())
    a6 = float((w * x[:, 0] * f2).mean())
    b1 = float(f1.mean())
    b2 = float(f2.mean())
    b5 = float((w * g1[:, 1]).mean())
    b6 = float((w * g2[:, 1]).mean())

    d1, d1_singular = _det_or_none(a1 * a2, a3 * a4)
    d2, d2_singular = _det_or_none(a1 * b2, b1 * a4)
    diag = {"det_location_scale": d1, "det_shape_rate": d2}
    if d1_singular or d2_singular:
        return EstimationResult(NORMAL_GAMMA, None, False, Reason.SINGULAR_SYSTEM, diag)

    mu = (a2 * a5 - a3 * a6) / d1
    sigma2 = (a1 * a6 - a4 * a5) / d1
    alpha = (a4 * b5 - a1 * b6) / d2
    beta = (b2 * b5 - b1 * b6) / d2
    diag["theta_raw"] = np.array([mu, sigma2, alpha, beta])
    if sigma2 <= 0 or alpha <= 0 or beta <= 0:
        return EstimationResult(
            NORMAL_GAMMA, None, False, Reason.NEGATIVE_SCALAR_PARAM, diag
        )
    theta = NormalGammaParams(mu=mu, sigma2=sigma2, alpha=alpha, beta=beta)
    return EstimationResult(NORMAL_GAMMA, theta, True, Reason.OK, diag)


def nb_stein_estimate(x, domain, test_functions=None):
    """Closed-form (mu, sigma2, alpha, beta) for the truncated normal x beta."""
    x, _ = _rows(x, 2)
    if np.any((x[:, 1] <= 0) | (x[:, 1] >= 1)):
        raise ConfigError("normal_beta sample needs 0 < x2 < 1")
    tfp = test_functions if test_functions is not None else product_test_functions(domain)
    f1 = tfp.f1(x)
    f2 = tfp.f2(x)
    g1 = tfp.grad_f1(x)
    g2 = tfp.grad_f2(x)
    w = x[:, 1] * (1.0 - x[:, 1])

    m1 = float((w * g2[:, 0]).mean())
    m2 = float((w * x[:, 0] * f1).mean())
    m3 = float((w * g1[:, 0]).mean())
    m4 = float((w * x[:, 0] * f2).mean())
    m5 = float((w * f1).mean())
    m6 = float((w * f2).mean())
    o1 = float((x[:, 1] * f1).mean())
    o2 = float((w * g2[:, 1]).mean())
    o3 = float((x[:, 1] * f2).mean())
    o4 = float((w * g1[:, 1]).mean())
    o5 = float(((x[:, 1] - 1.0) * f2).mean())
    o6 = float(((x[:, 1] - 1.0) * f1).mean())

    dm, dm_singular = _det_or_none(m5 * m1, m3 * m6)
    do, do_singular = _det_or_none(o5 * o1, o3 * o6)
    diag = {"det_location_scale": dm, "det_shape_shape": do}
    if dm_singular or do_singular:
        return EstimationResult(NORMAL_BETA, None, False, Reason.SINGULAR_SYSTEM, diag)

    mu = (m1 * m2 - m3 * m4) / dm
    sigma2 = (m5 * m4 - m6 * m2) / dm
    alpha = (o1 * o2 - o3 * o4) / do
    beta = (o5 * o4 - o6 * o2) / do
    diag["theta_raw"] = np.array([mu, sigma2, alpha, beta])
    if sigma2 <= 0 or alpha <= 0 or beta <= 0:
        return EstimationResult(
            NORMAL_BETA, None, False, Reason.NEGATIVE_SCALAR_PARAM, diag
        )
    theta = NormalBetaParams(mu=mu, sigma2=sigma2, alpha=alpha, beta=beta)
    return EstimationResult(NORMAL_BETA, theta, True, Reason.OK, diag)


def stein_estimate(model, x, domain, test_functions=None):
    """Dispatch on the model name."""
    if model == TN:
        return tn_stein_estimate(x, domain, test_functions)
    if model == NORMAL_GAMMA:
        return ng_stein_estimate(x, domain, test_functions)
    if model == NORMAL_BETA:
        return nb_stein_estimate(x, domain, test_functions)
    raise ConfigError(f"unknown model {model!r}")


_TAU = {
    NORMAL_GAMMA: (lambda x: x[:, 1], lambda x: np.stack(
        [np.zeros(x.shape[0]), np.ones(x.shape[0])], axis=1)),
    NORMAL_BETA: (lambda x: x[:, 1] * (1.0 - x[:, 1]), lambda x: np.stack(
        [np.zeros(x.shape[0]), 1.0 - 2.0 * x[:, 1]], axis=1)),
}


@dataclass(frozen=True)
class SteinResidual:
    """Empirical means of the Stein operator applied to (f1, f2), with
    componentwise standard errors of those means."""

    f1: np.ndarray
    f2: np.ndarray
    f1_se: np.ndarray
    f2_se: np.ndarray

    def max_abs_z(self):
        """Largest |mean| / se over all components; ~N(0,1) at theta_0."""
        with np.errstate(divide="ignore", invalid="ignore"):
            z1 = np.abs(self.f1) / self.f1_se
            z2 = np.abs(self.f2) / self.f2_se
        return float(max(np.max(z1), np.max(z2)))


def stein_residual(model, theta, x, test_functions):
    """Sample mean (and se) of the Stein operator at theta over the sample."""
    x = np.asarray(x, dtype=float)
    x, _ = _rows(x, x.shape[-1])
    n = x.shape[0]
    s = score(model, theta, x)
    f1 = test_functions.f1(x)
    g1 = test_functions.grad_f1(x)
    f2 = test_functions.f2(x)
    g2 = test_functions.grad_f2(x)
    if model == TN:
        # contributions: grad f1 + s f1 (vector), (grad f2)' + s f2' (matrix)
        c1 = g1 + s * f1[:, None]
        c2 = g2.transpose(0, 2, 1) + s[:, :, None] * f2[:, None, :]
    else:
        tau, grad_tau = _TAU[model]
        t = tau(x)[:, None]
        dt = grad_tau(x)
        c1 = t * (s * f1[:, None] + g1) + f1[:, None] * dt
        c2 = t * (s * f2[:, None] + g2) + f2[:, None] * dt
    return SteinResidual(
        f1=c1.mean(axis=0),
        f2=c2.mean(axis=0),
        f1_se=c1.std(axis=0, ddof=1) / np.sqrt(n),
        f2_se=c2.std(axis=0, ddof=1) / np.sqrt(n),
    )
