"""Parameter types, unnormalised log-densities and score functions.

Three families are supported:

* truncated multivariate normal ("tn"),
* truncated product of a normal and a gamma distribution ("normal_gamma"),
* truncated product of a normal and a beta distribution ("normal_beta").

Normalising constants are never computed here; they cancel inside every
Stein operator. The MLE competitor obtains them through the quadrature
module when it needs the actual likelihood. Log-kernels (not kernels) are
the primitive so that extreme parameter values during MLE line searches
cannot overflow.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .domains import _rows
from .errors import ConfigError
from .matkit import is_positive_definite

TN = "tn"
NORMAL_GAMMA = "normal_gamma"
NORMAL_BETA = "normal_beta"
MODELS = (TN, NORMAL_GAMMA, NORMAL_BETA)

# base support required of the second coordinate, per product model
_PRODUCT_SUPPORT = {NORMAL_GAMMA: (0.0, np.inf), NORMAL_BETA: (0.0, 1.0)}


@dataclass(frozen=True)
class TNParams:
    """Mean vector and positive-definite covariance of the normal kernel."""

    mu: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        mu = np.atleast_1d(np.asarray(self.mu, dtype=float))
        sigma = np.asarray(self.sigma, dtype=float)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)
        d = mu.size
        if sigma.shape != (d, d):
            raise ConfigError(f"sigma must be {d}x{d}, got {sigma.shape}")
        if not np.array_equal(sigma, sigma.T):
            raise ConfigError("sigma must be exactly symmetric")
        if not is_positive_definite(sigma):
            raise ConfigError("sigma must be positive definite")

    @property
    def dim(self):
        return self.mu.size


@dataclass(frozen=True)
class NormalGammaParams:
    """(mu, sigma2) of the normal factor, (alpha, beta) of the gamma factor.

    beta is a rate: the gamma density kernel is x^(alpha-1) exp(-beta x).
    """

    mu: float
    sigma2: float
    alpha: float
    beta: float

    def __post_init__(self):
        for name in ("sigma2", "alpha", "beta"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")

    def as_array(self):
        return np.array([self.mu, self.sigma2, self.alpha, self.beta])


@dataclass(frozen=True)
class NormalBetaParams:
    """(mu, sigma2) of the normal factor, (alpha, beta) of the beta factor."""

    mu: float
    sigma2: float
    alpha: float
    beta: float

    def __post_init__(self):
        for name in ("sigma2", "alpha", "beta"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")

    def as_array(self):
        return np.array([self.mu, self.sigma2, self.alpha, self.beta])


def tn_log_kernel(theta, x):
    """-(x-mu)' Sigma^{-1} (x-mu) / 2, without the normalising constant."""
    x, single = _rows(x, theta.dim)
    chol = np.linalg.cholesky(theta.sigma)
    y = solve_triangular(chol, (x - theta.mu).T, lower=True)
    val = -0.5 * np.einsum("ij,ij->j", y, y)
    return float(val[0]) if single else val


def tn_score(theta, x):
    """Gradient of the log kernel: -Sigma^{-1} (x - mu)."""
    x, single = _rows(x, theta.dim)
    s = -np.linalg.solve(theta.sigma, (x - theta.mu).T).T
    return s[0] if single else s


def _check_second_coordinate(x, model):
    lo, hi = _PRODUCT_SUPPORT[model]
    if np.any(x[:, 1] <= lo) or np.any(x[:, 1] >= hi):
        raise ConfigError(
            f"second coordinate must lie strictly inside ({lo}, {hi}) for {model}"
        )


def ng_log_kernel(theta, x):
    """Normal x gamma log kernel: -(x1-mu)^2/(2 sigma2) + (alpha-1) log x2 - beta x2."""
    x, single = _rows(x, 2)
    _check_second_coordinate(x, NORMAL_GAMMA)
    val = (
        -((x[:, 0] - theta.mu) ** 2) / (2.0 * theta.sigma2)
        + (theta.alpha - 1.0) * np.log(x[:, 1])
        - theta.beta * x[:, 1]
    )
    return float(val[0]) if single else val


def ng_score(theta, x):
    """Gradient of :func:`ng_log_kernel` in x."""
    x, single = _rows(x, 2)
    _check_second_coordinate(x, NORMAL_GAMMA)
    s = np.stack(
        [
            (theta.mu - x[:, 0]) / theta.sigma2,
            (theta.alpha - 1.0) / x[:, 1] - theta.beta,
        ],
        axis=1,
    )
    return s[0] if single else s


def nb_log_kernel(theta, x):
    """Normal x beta log kernel on x2 in (0, 1)."""
    x, single = _rows(x, 2)
    _check_second_coordinate(x, NORMAL_BETA)
    val = (
        -((x[:, 0] - theta.mu) ** 2) / (2.0 * theta.sigma2)
        + (theta.alpha - 1.0) * np.log(x[:, 1])
        + (theta.beta - 1.0) * np.log1p(-x[:, 1])
    )
    return float(val[0]) if single else val


def nb_score(theta, x):
    """Gradient of :func:`nb_log_kernel` in x."""
    x, single = _rows(x, 2)
    _check_second_coordinate(x, NORMAL_BETA)
    s = np.stack(
        [
            (theta.mu - x[:, 0]) / theta.sigma2,
            (theta.alpha - 1.0) / x[:, 1] - (theta.beta - 1.0) / (1.0 - x[:, 1]),
        ],
        axis=1,
    )
    return s[0] if single else s


def log_kernel(model, theta, x):
    """Dispatch on the model name."""
    if model == TN:
        return tn_log_kernel(theta, x)
    if model == NORMAL_GAMMA:
        return ng_log_kernel(theta, x)
    if model == NORMAL_BETA:
        return nb_log_kernel(theta, x)
    raise ConfigError(f"unknown model {model!r}")


def score(model, theta, x):
    """Dispatch on the model name."""
    if model == TN:
        return tn_score(theta, x)
    if model == NORMAL_GAMMA:
        return ng_score(theta, x)
    if model == NORMAL_BETA:
        return nb_score(theta, x)
    raise ConfigError(f"unknown model {model!r}")


def check_model_domain(model, domain):
    """Raise ConfigError when a domain's base support does not fit the model."""
    if model == TN:
        return
    if model not in MODELS:
        raise ConfigError(f"unknown model {model!r}")
    if domain.dim != 2:
        raise ConfigError(f"{model} needs a 2-dimensional domain")
    want = _PRODUCT_SUPPORT[model]
    got = domain.support[1] if len(domain.support) > 1 else None
    if got != want:
        raise ConfigError(
            f"{model} requires second-coordinate support {want}, domain has {got}"
        )
