"""Shared fixtures and independent oracles for the test suite.

The oracles here (quadrature moments, finite differences, root finders)
deliberately avoid the code paths they are used to check.
"""

import numpy as np
import pytest

import truncstein as ts
from truncstein import quadrature


@pytest.fixture
def square():
    return ts.rectangle_domain([-1.0, -1.0], [1.0, 1.0])


@pytest.fixture
def gamma_disc():
    return ts.ball_domain([0.0, 2.0], 1.0, ["reals", "positive_halfline"])


@pytest.fixture
def beta_disc():
    return ts.ball_domain([0.0, 0.5], 0.5, ["reals", "unit_interval"])


@pytest.fixture
def tn_identity():
    return ts.TNParams(mu=np.zeros(2), sigma=np.eye(2))


def quad_expectation(fn, model, theta, domain, rel_tol=1e-9):
    """E[fn(X)] under the truncated model, via quadrature (the test oracle).

    fn maps an (n, 2) array to (n,) values. Normalisation happens through a
    second integral rather than a closed form, so this stays independent of
    the estimator code paths.
    """
    kernel = lambda x: np.exp(ts.log_kernel(model, theta, x))
    mass = quadrature.integrate(kernel, domain, rel_tol=rel_tol)
    assert mass.converged
    num = quadrature.integrate(
        lambda x: fn(x) * kernel(x), domain, rel_tol=rel_tol,
        abs_tol=rel_tol * mass.value,
    )
    return num.value / mass.value


def central_difference_gradient(f, x, h=1e-6):
    """Componentwise central differences of a scalar function at one point."""
    x = np.asarray(x, dtype=float)
    grad = np.zeros_like(x)
    for i in range(x.size):
        up = x.copy()
        dn = x.copy()
        up[i] += h
        dn[i] -= h
        grad[i] = (f(up) - f(dn)) / (2.0 * h)
    return grad
