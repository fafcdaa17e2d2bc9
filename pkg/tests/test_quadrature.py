import numpy as np
import pytest
from scipy.stats import norm

import truncstein as ts
from truncstein import quadrature
from truncstein.errors import ConfigError


def gaussian_kernel(x):
    return np.exp(-0.5 * np.einsum("ij,ij->i", x, x))


def test_constant_over_square(square):
    res = quadrature.integrate(lambda x: np.ones(x.shape[0]), square, rel_tol=1e-10)
    assert res.converged
    assert res.value == pytest.approx(4.0, rel=1e-12)


def test_disc_area():
    disc = ts.ball_domain([0.3, 0.4], 0.5)
    res = quadrature.integrate(lambda x: np.ones(x.shape[0]), disc, rel_tol=1e-10)
    assert res.converged
    assert res.value == pytest.approx(np.pi / 4.0, rel=1e-10)


def test_gaussian_kernel_error_function_identity(square):
    # product-of-1D oracle: int_{-1}^{1} e^{-t^2/2} dt = sqrt(2 pi) (2 Phi(1) - 1)
    res = quadrature.integrate(gaussian_kernel, square, rel_tol=1e-10)
    expected = (np.sqrt(2.0 * np.pi) * (2.0 * norm.cdf(1.0) - 1.0)) ** 2
    assert res.converged
    assert res.value == pytest.approx(expected, rel=1e-8)


def test_additivity_over_quadrants(square):
    whole = quadrature.integrate(gaussian_kernel, square, rel_tol=1e-11).value
    parts = 0.0
    for a in ([-1.0, -1.0], [-1.0, 0.0], [0.0, -1.0], [0.0, 0.0]):
        sub = ts.rectangle_domain(a, [a[0] + 1.0, a[1] + 1.0])
        parts += quadrature.integrate(gaussian_kernel, sub, rel_tol=1e-11).value
    assert whole == pytest.approx(parts, rel=1e-10)


def test_polar_vs_masked_on_smooth_integrand(gamma_disc):
    f = gaussian_kernel
    polar = quadrature.integrate(f, gamma_disc, rel_tol=1e-9)
    masked = quadrature.integrate(f, gamma_disc, rel_tol=1e-4, method="masked",
                                  max_evals=2_000_000)
    assert polar.converged
    assert masked.value == pytest.approx(polar.value, rel=1e-4)


def test_clipped_disc_area():
    # half of the disc is cut away by the support line through its center
    dom = ts.ball_domain([0.0, 0.0], 1.0, ["reals", "positive_halfline"])
    res = quadrature.integrate(lambda x: np.ones(x.shape[0]), dom, rel_tol=1e-9)
    assert res.converged
    assert res.value == pytest.approx(np.pi / 2.0, rel=1e-9)


def test_clipped_disc_partial():
    # support line at distance 0.5 below center: area = pi r^2 - circular segment
    dom = ts.ball_domain([0.0, 0.5], 1.0, ["reals", "positive_halfline"])
    res = quadrature.integrate(lambda x: np.ones(x.shape[0]), dom, rel_tol=1e-9)
    h = 0.5  # segment height below the chord
    r = 1.0
    segment = r**2 * np.arccos(h / r) - h * np.sqrt(r**2 - h**2)
    assert res.converged
    assert res.value == pytest.approx(np.pi * r**2 - segment, rel=1e-9)


def test_error_estimate_tightens_with_tolerance(square):
    f = lambda x: np.exp(-4.0 * np.einsum("ij,ij->i", x, x)) * np.cos(3.0 * x[:, 0])
    errs = [
        quadrature.integrate(f, square, rel_tol=tol).abs_error_estimate
        for tol in (1e-4, 1e-7, 1e-10)
    ]
    assert errs[0] >= errs[1] >= errs[2]


def test_budget_exhaustion_flags_nonconverged(square):
    # indicator-style discontinuity, tiny budget: must flag, not raise
    f = lambda x: (x[:, 0] ** 2 + x[:, 1] ** 2 < 0.7).astype(float)
    res = quadrature.integrate(f, square, rel_tol=1e-10, max_evals=5_000)
    assert not res.converged
    # one refinement round (up to 16 children) may overshoot the cap
    assert res.evaluations <= 5_000 + 16 * 320


def test_rel_tol_validation(square):
    with pytest.raises(ConfigError):
        quadrature.integrate(lambda x: np.ones(x.shape[0]), square, rel_tol=0.5)


def test_log_normalizing_constant_tn(square, tn_identity):
    log_c, res = quadrature.log_normalizing_constant("tn", tn_identity, square)
    expected = (np.sqrt(2.0 * np.pi) * (2.0 * norm.cdf(1.0) - 1.0)) ** 2
    assert res.converged
    assert log_c == pytest.approx(np.log(expected), abs=1e-7)


def test_log_normalizing_constant_extreme_theta(gamma_disc):
    # beta so large that the unshifted integral would underflow to zero
    theta = ts.NormalGammaParams(mu=0.0, sigma2=1.0, alpha=1.0, beta=500.0)
    log_c, _ = quadrature.log_normalizing_constant("normal_gamma", theta, gamma_disc)
    assert np.isfinite(log_c)
    assert log_c < -400.0
