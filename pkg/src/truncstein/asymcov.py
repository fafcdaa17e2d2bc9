"""Plug-in sandwich covariance for the truncated-normal Stein estimator.

The estimator is a smooth map G of six sample means. Stacking those means
into a vector Y (see :class:`MomentVector` for the fixed order), the CLT
plus the delta method give

    sqrt(n) (theta_hat - theta_0)  ->  N(0, J Var[Y_1] J')

with J the Jacobian of the symmetrised map evaluated at the moment vector.
Everything is computable from one sample: Var[Y_1] by the empirical
covariance of the per-observation moment contributions, J analytically.

All Jacobian blocks below were derived from scratch with the column-major
vec convention and are certified against central finite differences by the
test suite; do not edit one without re-running that gate.
"""

from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .domains import _rows
from .errors import ConfigError, SingularSystemError
from .matkit import commutation_matrix, kron, solve_linear, symmetrize, vec
from .stein import tn_moment_means, tn_test_functions


@dataclass(frozen=True)
class MomentVector:
    """The six sample means the estimator consumes, in a fixed stacking order.

    Stacked layout (column-major vec): (vec Z1, vec Z2, z1, z2, z3, z) of
    total length 2d^2 + 3d + 1, where Z1 = mean of X f2', Z2 = mean of
    (grad f2)', z1 = mean of X f1, z2 = mean of f2, z3 = mean of grad f1 and
    z = mean of f1.
    """

    Z1: np.ndarray
    Z2: np.ndarray
    z1: np.ndarray
    z2: np.ndarray
    z3: np.ndarray
    z: float

    @property
    def dim(self):
        return self.z1.size

    def stack(self):
        return np.concatenate(
            [vec(self.Z1), vec(self.Z2), self.z1, self.z2, self.z3, [self.z]]
        )

    @classmethod
    def unstack(cls, y, d):
        y = np.asarray(y, dtype=float)
        if y.size != 2 * d * d + 3 * d + 1:
            raise ValueError(f"moment vector has wrong length {y.size} for d={d}")
        dd = d * d
        return cls(
            Z1=y[:dd].reshape(d, d, order="F"),
            Z2=y[dd:2 * dd].reshape(d, d, order="F"),
            z1=y[2 * dd:2 * dd + d],
            z2=y[2 * dd + d:2 * dd + 2 * d],
            z3=y[2 * dd + 2 * d:2 * dd + 3 * d],
            z=float(y[-1]),
        )

    @classmethod
    def from_sample(cls, x, test_functions):
        big_z1, big_z2, z1, z2, z3, z = tn_moment_means(x, test_functions)
        return cls(Z1=big_z1, Z2=big_z2, z1=z1, z2=z2, z3=z3, z=z)


def moment_contributions(x, test_functions):
    """Per-observation moment contributions, one stacked row per point.

    The row mean reproduces ``MomentVector.from_sample(...).stack()`` up to
    summation round-off; the row covariance estimates Var[Y_1].
    """
    x = np.asarray(x, dtype=float)
    x, _ = _rows(x, x.shape[-1])
    n, d = x.shape
    f1 = test_functions.f1(x)
    g1 = test_functions.grad_f1(x)
    f2 = test_functions.f2(x)
    j2 = test_functions.grad_f2(x)
    outer = x[:, :, None] * f2[:, None, :]             # [i, j] = x_i f2_j
    vec_z1 = outer.transpose(0, 2, 1).reshape(n, d * d)    # column-major vec
    vec_z2 = j2.reshape(n, d * d)                          # vec of J' per row
    return np.concatenate(
        [vec_z1, vec_z2, x * f1[:, None], f2, g1, f1[:, None]], axis=1
    )


def eval_G(Z):
    """The moment map: G1 the raw covariance estimate, G2 the mean estimate.

    Requires Z in the open set where (Z2 z - z3 z2') is invertible and
    z != 0; raises :class:`SingularSystemError` outside it.
    """
    a = Z.Z2 * Z.z - np.outer(Z.z3, Z.z2)
    b = Z.Z1 * Z.z - np.outer(Z.z1, Z.z2)
    xt, _ = solve_linear(a.T, b.T)
    g1 = xt.T
    if Z.z == 0.0:
        raise SingularSystemError("mean of f1 is zero; G is undefined", rcond=0.0)
    g2 = (Z.z1 - g1 @ Z.z3) / Z.z
    return g1, g2


def jacobian_G(Z):
    """Jacobian of (vec of symmetrised G1, G2) in the stacked moments.

    Shape (d^2 + d, 2 d^2 + 3 d + 1). Column blocks follow the stacking
    order of :class:`MomentVector`; the top d^2 rows are symmetrised with
    the commutation matrix.
    """
    d = Z.dim
    g1, _ = eval_G(Z)
    a = Z.Z2 * Z.z - np.outer(Z.z3, Z.z2)
    ainv_t = np.linalg.inv(a).T
    u = Z.z1 - g1 @ Z.z3
    eye = np.eye(d)

    dg1_z1 = Z.z * kron(ainv_t, eye)
    dg1_z2 = -Z.z * kron(ainv_t, g1)
    dg1_v1 = -kron((ainv_t @ Z.z2)[:, None], eye)
    dg1_v2 = -kron(ainv_t, u[:, None])
    dg1_v3 = kron((ainv_t @ Z.z2)[:, None], g1)
    dg1_s = (kron(ainv_t, eye) @ vec(Z.Z1) - kron(ainv_t, g1) @ vec(Z.Z2))[:, None]
    dg1 = np.concatenate([dg1_z1, dg1_z2, dg1_v1, dg1_v2, dg1_v3, dg1_s], axis=1)

    p = kron(Z.z3[None, :], eye) / Z.z                 # (d, d^2)
    dg2_z1 = -p @ dg1_z1
    dg2_z2 = -p @ dg1_z2
    dg2_v1 = eye / Z.z - p @ dg1_v1
    dg2_v2 = -p @ dg1_v2
    dg2_v3 = -p @ dg1_v3 - g1 / Z.z
    dg2_s = (-u / Z.z**2)[:, None] - p @ dg1_s
    dg2 = np.concatenate([dg2_z1, dg2_z2, dg2_v1, dg2_v2, dg2_v3, dg2_s], axis=1)

    sym = 0.5 * (np.eye(d * d) + commutation_matrix(d, d))
    return np.concatenate([sym @ dg1, dg2], axis=0)


@dataclass(frozen=True)
class SandwichCovariance:
    """J Var[Y_1] J' for the stacked parameters (vec Sigma, mu)."""

    cov: np.ndarray
    jacobian: np.ndarray
    var_y: np.ndarray
    n: int

    @property
    def se(self):
        """Per-parameter standard errors sqrt(diag(cov) / n)."""
        return np.sqrt(np.maximum(np.diag(self.cov), 0.0) / self.n)


def sandwich_cov(x, domain, test_functions=None):
    """Plug-in asymptotic covariance from one sample.

    The Jacobian is evaluated at the empirical moment vector and Var[Y_1] is
    the unbiased (n-1 divisor) covariance of the per-observation moment
    contributions. Raises :class:`SingularSystemError` when the empirical
    moment system is singular (the matching Stein estimate would not be
    eligible either).
    """
    x = np.asarray(x, dtype=float)
    tfp = test_functions if test_functions is not None else tn_test_functions(domain)
    z = MomentVector.from_sample(x, tfp)
    contrib = moment_contributions(x, tfp)
    var_y = np.cov(contrib, rowvar=False, ddof=1)
    jac = jacobian_G(z)
    cov = symmetrize(jac @ var_y @ jac.T)
    return SandwichCovariance(cov=cov, jacobian=jac, var_y=var_y, n=x.shape[0])


@dataclass(frozen=True)
class ConfidenceIntervals:
    """Marginal normal intervals for (vec Sigma, mu), in stacking order."""

    names: list
    estimate: np.ndarray
    se: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    level: float


def confidence_intervals(result, cov, level=0.95):
    """theta_i +/- q_{(1+level)/2} * se_i for the d^2 + d parameters."""
    if not 0.0 <= level < 1.0:
        raise ConfigError("confidence level must lie in [0, 1)")
    if not result.eligible:
        raise ConfigError("cannot build intervals for an ineligible estimate")
    theta = result.theta_hat
    d = theta.dim
    est = np.concatenate([vec(theta.sigma), theta.mu])
    names = [f"sigma_{i + 1}{j + 1}" for j in range(d) for i in range(d)]
    names += [f"mu_{i + 1}" for i in range(d)]
    q = float(norm.ppf(0.5 * (1.0 + level)))
    se = cov.se
    return ConfidenceIntervals(
        names=names,
        estimate=est,
        se=se,
        lower=est - q * se,
        upper=est + q * se,
        level=level,
    )
